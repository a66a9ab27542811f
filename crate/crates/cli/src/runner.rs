//! One full experiment run: scenario materialization, chain simulation per
//! temperature, reference baselines, and a reproducible artifact bundle.
//!
//! Bundle layout inside the output directory:
//!
//! - `scenario.json` — the materialized scenario (canonical key order);
//! - `oracle.csv` — one row per placement with the optimum flagged;
//! - `baseline_table.csv` — `(method, price, revenue)` comparison rows;
//! - `trace_beta{β}.csv` — raw jump chain per temperature;
//! - `series_beta{β}.csv` — windowed running average per temperature;
//! - `summary.json` — headline numbers plus the `(1/β)·ln|V|` certificates;
//! - `manifest.json` — names and column schemas of the files above.
//!
//! A zero jump budget produces a summary-only bundle (scenario, summary,
//! manifest); enumeration blow-ups downgrade the oracle and baselines to a
//! warning inside the summary instead of failing the run. No artifact embeds
//! a filesystem path, so bundles written to different directories from the
//! same configuration and seed are byte-identical.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use vmshare_core::export::{write_chain_trace_csv, write_oracle_csv};
use vmshare_core::markov::{
    simulate, time_average_revenue, trace_statistics, ChainTrace, Evaluator, StopRule,
};
use vmshare_core::model::{
    generate_scenario, load_scenario, placement_count, save_scenario, Placement, Scenario,
    DEFAULT_ENUMERATION_CAP,
};
use vmshare_core::oracle::{
    exhaustive_optimum, noncooperative_auction_baseline, placement_revenues, uniform_price_baseline,
};
use vmshare_core::{CoreError, Real};

use crate::config::{BaselineChoice, EvaluatorChoice, ExperimentConfig, ScenarioSource};

/// Fraction of the jump budget discarded before taking time averages.
pub const BURN_IN_FRACTION: f64 = 0.4;

/// Materializes the configured scenario: reads the file source or generates
/// one from the master seed's dedicated child seed.
pub fn load_or_generate_scenario(cfg: &ExperimentConfig) -> anyhow::Result<Scenario<Real>> {
    let scenario = match &cfg.scenario {
        ScenarioSource::File { file } => load_scenario(file)
            .with_context(|| format!("loading scenario from {}", file.display()))?,
        ScenarioSource::Generate { generate } => {
            generate_scenario(&generate.to_params(cfg.scenario_seed()))?
        }
    };
    scenario.validate()?;
    Ok(scenario)
}

/// The chain evaluator for run index `run`, with the randomized mechanism's
/// seed drawn from the master seed's fan-out.
pub fn evaluator_for(cfg: &ExperimentConfig, run: usize) -> Evaluator {
    match cfg.evaluator {
        EvaluatorChoice::Opa => Evaluator::TruthfulOpa,
        EvaluatorChoice::Puff => Evaluator::Puff { seed: cfg.evaluator_seed(run) },
    }
}

/// `(1/β)·ln|V|` — the optimality-gap certificate for one temperature.
#[derive(Debug, Clone, Serialize)]
pub struct GapCertificate {
    pub beta: f64,
    pub bound: f64,
}

/// Headline numbers for one chain run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub beta: f64,
    pub jumps: u64,
    pub chain_seed: u64,
    /// Holding-time-weighted revenue after the burn-in prefix.
    pub time_average_revenue: f64,
    /// Last value of the windowed running average.
    pub final_window_average: Option<f64>,
}

/// One comparison row; `price` is set only for uniform-pricing methods.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineRow {
    pub method: String,
    pub price: Option<f64>,
    pub revenue: f64,
    pub ratio_to_oracle: Option<f64>,
}

/// Everything `summary.json` holds.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub evaluator: String,
    pub stations: usize,
    pub total_vms: u32,
    pub states: u128,
    pub gap_certificates: Vec<GapCertificate>,
    pub oracle_revenue: Option<f64>,
    pub runs: Vec<RunReport>,
    pub baselines: Vec<BaselineRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    name: String,
    kind: &'static str,
    columns: Vec<&'static str>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    files: Vec<ManifestEntry>,
}

/// Filename fragment for a temperature: shortest round-trip decimal, so
/// `10.0` becomes `beta10` and `2.5` becomes `beta2.5`.
fn beta_tag(beta: f64) -> String {
    format!("beta{beta}")
}

fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Windowed running-average series, one row per jump.
fn write_series_csv<W: Write>(mut w: W, trace: &ChainTrace<Real>, window: usize) -> anyhow::Result<()> {
    let stats = trace_statistics(trace, window)?;
    writeln!(w, "jump_index,sim_time,window_avg_revenue")?;
    let mut clock = 0.0;
    for (i, record) in trace.records.iter().enumerate() {
        writeln!(w, "{i},{clock},{}", stats.running_avg[i])?;
        clock += record.holding_time;
    }
    Ok(())
}

/// Runs the configured experiment and writes the artifact bundle; see the
/// module docs for the layout. Returns the summary that was written.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<RunSummary> {
    cfg.validate()?;
    let scenario = load_or_generate_scenario(cfg)?;
    fs::create_dir_all(&cfg.outdir)
        .with_context(|| format!("creating {}", cfg.outdir.display()))?;
    save_scenario(&scenario, &cfg.outdir.join("scenario.json"))?;

    let mut manifest = Manifest { files: Vec::new() };
    manifest.files.push(ManifestEntry {
        name: "scenario.json".into(),
        kind: "scenario",
        columns: vec![],
    });

    let states = placement_count(scenario.station_count(), scenario.total_vms);
    let gap_certificates: Vec<GapCertificate> = cfg
        .betas
        .iter()
        .map(|&beta| GapCertificate { beta, bound: (states as f64).ln() / beta })
        .collect();

    let mut warnings = Vec::new();
    let with_files = cfg.jumps > 0;

    // Exhaustive oracle and baselines; both need placement enumeration, so a
    // blown cap downgrades them to a warning rather than failing the run.
    let mut oracle_revenue = None;
    let mut baselines = Vec::new();
    match placement_revenues(&scenario, DEFAULT_ENUMERATION_CAP) {
        Ok(rows) => {
            let best = exhaustive_optimum(&scenario)?;
            oracle_revenue = Some(best.best_revenue);
            if with_files {
                let file = File::create(cfg.outdir.join("oracle.csv"))?;
                write_oracle_csv(BufWriter::new(file), &rows, &best.best_revenue)?;
                manifest.files.push(ManifestEntry {
                    name: "oracle.csv".into(),
                    kind: "oracle_table",
                    columns: vec!["placement", "revenue", "is_optimal"],
                });
            }
            let ratio = |revenue: f64| {
                if best.best_revenue > 0.0 {
                    Some(revenue / best.best_revenue)
                } else {
                    None
                }
            };
            for choice in &cfg.baselines {
                match choice {
                    BaselineChoice::CoopUniform | BaselineChoice::NoncoopUniform => {
                        let cooperative = *choice == BaselineChoice::CoopUniform;
                        for price in cfg.price_grid.values() {
                            let revenue = uniform_price_baseline(&scenario, &price, cooperative)?;
                            baselines.push(BaselineRow {
                                method: choice.to_string(),
                                price: Some(price),
                                revenue,
                                ratio_to_oracle: ratio(revenue),
                            });
                        }
                    }
                    BaselineChoice::NoncoopAuction => {
                        let revenue = noncooperative_auction_baseline(&scenario)?;
                        baselines.push(BaselineRow {
                            method: choice.to_string(),
                            price: None,
                            revenue,
                            ratio_to_oracle: ratio(revenue),
                        });
                    }
                }
            }
            if with_files && !baselines.is_empty() {
                let file = File::create(cfg.outdir.join("baseline_table.csv"))?;
                let mut w = BufWriter::new(file);
                writeln!(w, "method,price,revenue")?;
                for row in &baselines {
                    let price = row.price.map(|p| p.to_string()).unwrap_or_default();
                    writeln!(w, "{},{},{}", row.method, price, row.revenue)?;
                }
                manifest.files.push(ManifestEntry {
                    name: "baseline_table.csv".into(),
                    kind: "baseline_table",
                    columns: vec!["method", "price", "revenue"],
                });
            }
        }
        Err(CoreError::EnumerationTooLarge { states, cap }) => {
            warnings.push(format!(
                "oracle and baselines skipped: {states} placements exceed the enumeration cap {cap}"
            ));
        }
        Err(other) => return Err(other.into()),
    }

    // Chain runs, one per temperature, each on its own child seed.
    let mut runs = Vec::new();
    if cfg.jumps > 0 {
        let initial =
            Placement::balanced(scenario.station_count(), scenario.total_vms);
        for (i, &beta) in cfg.betas.iter().enumerate() {
            let evaluator = evaluator_for(cfg, i);
            let chain_seed = cfg.chain_seed(i);
            let trace = simulate(
                &scenario,
                beta,
                &evaluator,
                &initial,
                StopRule::MaxJumps(cfg.jumps),
                chain_seed,
            )?;
            let tag = beta_tag(beta);

            let trace_name = format!("trace_{tag}.csv");
            let file = File::create(cfg.outdir.join(&trace_name))?;
            write_chain_trace_csv(BufWriter::new(file), &trace)?;
            manifest.files.push(ManifestEntry {
                name: trace_name,
                kind: "chain_trace",
                columns: vec!["jump_index", "sim_time", "holding_time", "placement", "revenue"],
            });

            let series_name = format!("series_{tag}.csv");
            let file = File::create(cfg.outdir.join(&series_name))?;
            write_series_csv(BufWriter::new(file), &trace, cfg.window)?;
            manifest.files.push(ManifestEntry {
                name: series_name,
                kind: "running_average_series",
                columns: vec!["jump_index", "sim_time", "window_avg_revenue"],
            });

            let burn_in = (cfg.jumps as f64 * BURN_IN_FRACTION) as usize;
            runs.push(RunReport {
                beta,
                jumps: cfg.jumps,
                chain_seed,
                time_average_revenue: time_average_revenue(&trace, burn_in),
                final_window_average: trace_statistics(&trace, cfg.window)?.running_avg.last().copied(),
            });
        }
    }

    let summary = RunSummary {
        seed: cfg.seed,
        evaluator: cfg.evaluator.to_string(),
        stations: scenario.station_count(),
        total_vms: scenario.total_vms,
        states,
        gap_certificates,
        oracle_revenue,
        runs,
        baselines,
        warnings,
    };
    write_pretty_json(&cfg.outdir.join("summary.json"), &summary)?;
    manifest.files.push(ManifestEntry {
        name: "summary.json".into(),
        kind: "summary",
        columns: vec![],
    });
    write_pretty_json(&cfg.outdir.join("manifest.json"), &manifest)?;
    Ok(summary)
}
