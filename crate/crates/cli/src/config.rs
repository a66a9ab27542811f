//! Experiment configuration: JSON-file loading, flag overrides, validation,
//! and the master-seed fan-out.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vmshare_core::model::ScenarioParams;
use vmshare_core::rng::child_seed;

/// A configuration problem the user can fix: reported with the offending
/// field and mapped to exit code 2 by the binary.
#[derive(Debug, thiserror::Error)]
#[error("invalid {field}: {reason}")]
pub struct UsageError {
    pub field: &'static str,
    pub reason: String,
}

impl UsageError {
    pub fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self { field, reason: reason.into() }
    }
}

/// Where the scenario comes from: an existing file or generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    File { file: PathBuf },
    Generate { generate: GenerateSpec },
}

/// Scenario-generation knobs. The generation seed is not a field here; it is
/// derived from the experiment's master seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub users_per_station: Vec<u32>,
    pub total_vms: u32,
    #[serde(default = "default_demand_range")]
    pub demand_range: (u32, u32),
    #[serde(default = "default_valuation_range")]
    pub valuation_range: (f64, f64),
}

fn default_demand_range() -> (u32, u32) {
    (1, 3)
}

fn default_valuation_range() -> (f64, f64) {
    (0.0, 1.0)
}

impl GenerateSpec {
    pub fn to_params(&self, seed: u64) -> ScenarioParams {
        ScenarioParams {
            users_per_station: self.users_per_station.clone(),
            total_vms: self.total_vms,
            demand_range: self.demand_range,
            valuation_range: self.valuation_range,
            seed,
        }
    }
}

/// Which mechanism prices each visited placement during a chain run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorChoice {
    #[default]
    Opa,
    Puff,
}

impl fmt::Display for EvaluatorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvaluatorChoice::Opa => write!(f, "opa"),
            EvaluatorChoice::Puff => write!(f, "puff"),
        }
    }
}

/// Reference methods to tabulate alongside the chain runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BaselineChoice {
    CoopUniform,
    NoncoopUniform,
    NoncoopAuction,
}

impl fmt::Display for BaselineChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineChoice::CoopUniform => write!(f, "coop_uniform"),
            BaselineChoice::NoncoopUniform => write!(f, "noncoop_uniform"),
            BaselineChoice::NoncoopAuction => write!(f, "noncoop_auction"),
        }
    }
}

fn default_baselines() -> Vec<BaselineChoice> {
    vec![BaselineChoice::CoopUniform, BaselineChoice::NoncoopUniform, BaselineChoice::NoncoopAuction]
}

/// Inclusive arithmetic price grid for the uniform-pricing baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for PriceGrid {
    fn default() -> Self {
        Self { start: 0.05, stop: 0.95, step: 0.05 }
    }
}

impl PriceGrid {
    /// Grid points `start, start + step, …` up to and including `stop`
    /// (within a half-step tolerance so 0.05-steps land on 0.95).
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0u32;
        loop {
            let p = self.start + self.step * f64::from(i);
            if p > self.stop + self.step * 0.5 {
                break;
            }
            out.push(p.min(self.stop));
            i += 1;
        }
        out
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(UsageError::new("price_grid.step", format!("{} is not positive", self.step)));
        }
        if !(0.0 <= self.start && self.start <= self.stop && self.stop <= 1.0) {
            return Err(UsageError::new(
                "price_grid",
                format!("need 0 <= start <= stop <= 1, got [{}, {}]", self.start, self.stop),
            ));
        }
        Ok(())
    }
}

fn default_betas() -> Vec<f64> {
    vec![10.0, 50.0]
}

fn default_jumps() -> u64 {
    20_000
}

fn default_window() -> usize {
    30
}

/// One full experiment: scenario, chain temperatures, evaluator, budgets,
/// baselines, and output location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub evaluator: EvaluatorChoice,
    #[serde(default = "default_jumps")]
    pub jumps: u64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<BaselineChoice>,
    #[serde(default)]
    pub price_grid: PriceGrid,
    pub outdir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError::new("config", format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| UsageError::new("config", format!("cannot parse {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.betas.is_empty() {
            return Err(UsageError::new("betas", "at least one temperature is required"));
        }
        for &beta in &self.betas {
            if !(beta > 0.0) || !beta.is_finite() {
                return Err(UsageError::new("betas", format!("{beta} is not a positive finite number")));
            }
        }
        if self.window == 0 {
            return Err(UsageError::new("window", "must be at least 1"));
        }
        if self.jumps != 0 && self.jumps < self.window as u64 {
            return Err(UsageError::new(
                "jumps",
                format!("budget {} is smaller than the window size {}", self.jumps, self.window),
            ));
        }
        self.price_grid.validate()?;
        if let ScenarioSource::Generate { generate } = &self.scenario {
            if generate.users_per_station.is_empty() {
                return Err(UsageError::new("scenario.generate", "needs at least one station"));
            }
        }
        Ok(())
    }

    /// Seed for scenario generation.
    pub fn scenario_seed(&self) -> u64 {
        child_seed(self.seed, 0)
    }

    /// Seed for the `i`-th chain run (one per β, in config order).
    pub fn chain_seed(&self, run: usize) -> u64 {
        child_seed(self.seed, 1 + 2 * run as u64)
    }

    /// Seed consumed by a randomized evaluator during the `i`-th run.
    pub fn evaluator_seed(&self, run: usize) -> u64 {
        child_seed(self.seed, 2 + 2 * run as u64)
    }
}

/// Optional command-line values layered on top of a config file; any field
/// left `None` keeps the file's (or default) value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario_file: Option<PathBuf>,
    pub betas: Option<Vec<f64>>,
    pub evaluator: Option<EvaluatorChoice>,
    pub jumps: Option<u64>,
    pub window: Option<usize>,
    pub outdir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        if let Some(file) = self.scenario_file {
            cfg.scenario = ScenarioSource::File { file };
        }
        if let Some(betas) = self.betas {
            cfg.betas = betas;
        }
        if let Some(evaluator) = self.evaluator {
            cfg.evaluator = evaluator;
        }
        if let Some(jumps) = self.jumps {
            cfg.jumps = jumps;
        }
        if let Some(window) = self.window {
            cfg.window = window;
        }
        if let Some(outdir) = self.outdir {
            cfg.outdir = outdir;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}
