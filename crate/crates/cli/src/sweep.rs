//! One-axis parameter sweeps emitting a single consolidated table:
//! `(method, axis_value, revenue, oracle_revenue, ratio)` per method and
//! axis point.
//!
//! The valuation and demand axes regenerate the scenario per axis point from
//! the *same* child seed, so the underlying uniform draws are shared and the
//! axis acts on coupled instances: pushing the valuation window up or adding
//! demand can then only raise the exhaustive optimum, which is what the
//! emitted tables show.

use std::io::{self, Write};

use vmshare_core::markov::{simulate, time_average_revenue, StopRule};
use vmshare_core::model::{generate_scenario, Placement, Scenario, User};
use vmshare_core::oracle::{
    exhaustive_optimum, noncooperative_auction_baseline, uniform_price_baseline,
};
use vmshare_core::{CoreError, Real};

use crate::config::{ExperimentConfig, ScenarioSource, UsageError};
use crate::runner::{evaluator_for, load_or_generate_scenario, BURN_IN_FRACTION};

/// The swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    /// Chain temperature; one chain run per configured β.
    Beta,
    /// Uniform posted price over the configured grid.
    Price,
    /// Valuation window, shifted upward across [`VALUATION_WINDOWS`].
    Valuation,
    /// Total network demand at fixed VM supply, across [`DEMAND_POINTS`].
    Demand,
}

/// Valuation windows swept by [`SweepAxis::Valuation`], low to high.
pub const VALUATION_WINDOWS: [(f64, f64); 4] = [(0.0, 0.4), (0.2, 0.6), (0.4, 0.8), (0.6, 1.0)];

/// Total-demand points swept by [`SweepAxis::Demand`].
pub const DEMAND_POINTS: [u32; 3] = [7, 21, 38];

/// One table row. `oracle_revenue` and `ratio` stay empty when the state
/// space exceeds the enumeration cap.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub method: String,
    pub axis_value: f64,
    pub revenue: f64,
    pub oracle_revenue: Option<f64>,
    pub ratio: Option<f64>,
}

fn push_row(rows: &mut Vec<SweepRow>, method: &str, axis_value: f64, revenue: f64, oracle: Option<f64>) {
    let ratio = oracle.and_then(|o| if o > 0.0 { Some(revenue / o) } else { None });
    rows.push(SweepRow { method: method.into(), axis_value, revenue, oracle_revenue: oracle, ratio });
}

/// Exhaustive optimum, with a blown enumeration cap downgraded to `None`
/// (matching the run bundle's warning behaviour).
fn try_oracle(scenario: &Scenario<Real>) -> anyhow::Result<Option<f64>> {
    match exhaustive_optimum(scenario) {
        Ok(result) => Ok(Some(result.best_revenue)),
        Err(CoreError::EnumerationTooLarge { .. }) => Ok(None),
        Err(other) => Err(other.into()),
    }
}

/// Time-averaged chain revenue for run index `run` at temperature `beta`.
fn chain_revenue(
    cfg: &ExperimentConfig,
    scenario: &Scenario<Real>,
    beta: f64,
    run: usize,
) -> anyhow::Result<f64> {
    let initial = Placement::balanced(scenario.station_count(), scenario.total_vms);
    let trace = simulate(
        scenario,
        beta,
        &evaluator_for(cfg, run),
        &initial,
        StopRule::MaxJumps(cfg.jumps),
        cfg.chain_seed(run),
    )?;
    let burn_in = (cfg.jumps as f64 * BURN_IN_FRACTION) as usize;
    Ok(time_average_revenue(&trace, burn_in))
}

/// Best uniform-price revenue over the configured grid.
fn best_uniform(cfg: &ExperimentConfig, scenario: &Scenario<Real>, cooperative: bool) -> anyhow::Result<f64> {
    let mut best = 0.0f64;
    for price in cfg.price_grid.values() {
        best = best.max(uniform_price_baseline(scenario, &price, cooperative)?);
    }
    Ok(best)
}

/// All comparison methods on one scenario at one axis point.
fn scenario_rows(
    cfg: &ExperimentConfig,
    scenario: &Scenario<Real>,
    axis_value: f64,
    run: usize,
    rows: &mut Vec<SweepRow>,
) -> anyhow::Result<()> {
    let oracle = try_oracle(scenario)?;
    if cfg.jumps > 0 {
        let revenue = chain_revenue(cfg, scenario, cfg.betas[0], run)?;
        push_row(rows, "cmap", axis_value, revenue, oracle);
    }
    if let Some(opt) = oracle {
        push_row(rows, "oracle", axis_value, opt, oracle);
        push_row(rows, "coop_uniform", axis_value, best_uniform(cfg, scenario, true)?, oracle);
        push_row(rows, "noncoop_uniform", axis_value, best_uniform(cfg, scenario, false)?, oracle);
        push_row(rows, "noncoop_auction", axis_value, noncooperative_auction_baseline(scenario)?, oracle);
    }
    Ok(())
}

/// The generation spec, or a usage error for axes that must regenerate the
/// scenario per axis point.
fn generate_spec(cfg: &ExperimentConfig, axis: &'static str) -> anyhow::Result<crate::config::GenerateSpec> {
    match &cfg.scenario {
        ScenarioSource::Generate { generate } => Ok(generate.clone()),
        ScenarioSource::File { .. } => Err(UsageError::new(
            "scenario",
            format!("the {axis} sweep regenerates the scenario per axis point and needs generation parameters, not a file"),
        )
        .into()),
    }
}

/// Rebuilds demands so the network totals `target` units: everyone starts at
/// one unit and the surplus is dealt round-robin in user order.
fn redistribute_demand(scenario: &mut Scenario<Real>, target: u32) -> Result<(), UsageError> {
    let users: Vec<&mut User<Real>> =
        scenario.stations.iter_mut().flat_map(|st| st.users.iter_mut()).collect();
    let n = users.len() as u32;
    if n == 0 || target < n {
        return Err(UsageError::new(
            "demand",
            format!("cannot spread {target} demand units over {n} users at one unit minimum"),
        ));
    }
    let extras = target - n;
    for (j, user) in users.into_iter().enumerate() {
        user.demand_r = 1 + extras / n + u32::from((j as u32) < extras % n);
    }
    Ok(())
}

/// Runs the sweep and returns the table rows in emission order.
pub fn sweep_rows(cfg: &ExperimentConfig, axis: SweepAxis) -> anyhow::Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    match axis {
        SweepAxis::Beta => {
            let scenario = load_or_generate_scenario(cfg)?;
            let oracle = try_oracle(&scenario)?;
            for (i, &beta) in cfg.betas.iter().enumerate() {
                if cfg.jumps > 0 {
                    push_row(&mut rows, "cmap", beta, chain_revenue(cfg, &scenario, beta, i)?, oracle);
                }
                if let Some(opt) = oracle {
                    push_row(&mut rows, "oracle", beta, opt, oracle);
                }
            }
        }
        SweepAxis::Price => {
            let scenario = load_or_generate_scenario(cfg)?;
            let oracle = try_oracle(&scenario)?;
            for price in cfg.price_grid.values() {
                push_row(
                    &mut rows,
                    "coop_uniform",
                    price,
                    uniform_price_baseline(&scenario, &price, true)?,
                    oracle,
                );
                push_row(
                    &mut rows,
                    "noncoop_uniform",
                    price,
                    uniform_price_baseline(&scenario, &price, false)?,
                    oracle,
                );
                if let Some(opt) = oracle {
                    push_row(&mut rows, "oracle", price, opt, oracle);
                }
            }
        }
        SweepAxis::Valuation => {
            let spec = generate_spec(cfg, "valuation")?;
            for (i, &(low, high)) in VALUATION_WINDOWS.iter().enumerate() {
                let mut params = spec.to_params(cfg.scenario_seed());
                params.valuation_range = (low, high);
                let scenario = generate_scenario(&params)?;
                scenario_rows(cfg, &scenario, (low + high) / 2.0, i, &mut rows)?;
            }
        }
        SweepAxis::Demand => {
            let spec = generate_spec(cfg, "demand")?;
            for (i, &total_demand) in DEMAND_POINTS.iter().enumerate() {
                let mut params = spec.to_params(cfg.scenario_seed());
                // Draw demands degenerately so the valuation stream is
                // identical across axis points, then respread them.
                params.demand_range = (1, 1);
                let mut scenario = generate_scenario::<Real>(&params)?;
                redistribute_demand(&mut scenario, total_demand)?;
                scenario_rows(cfg, &scenario, f64::from(total_demand), i, &mut rows)?;
            }
        }
    }
    Ok(rows)
}

/// Writes the consolidated table; `oracle_revenue` and `ratio` cells are
/// empty when the oracle was skipped.
pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "method,axis_value,revenue,oracle_revenue,ratio")?;
    for row in rows {
        let oracle = row.oracle_revenue.map(|v| v.to_string()).unwrap_or_default();
        let ratio = row.ratio.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{oracle},{ratio}", row.method, row.axis_value, row.revenue)?;
    }
    Ok(())
}
