//! `vmshare` — batch harness for the placement-and-pricing simulator.
//!
//! Exit codes: 0 on success, 2 on a configuration or usage problem, 3 when a
//! required exhaustive enumeration exceeds the state cap.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vmshare_cli::config::{EvaluatorChoice, ExperimentConfig, Overrides, ScenarioSource, UsageError};
use vmshare_cli::runner::run_experiment;
use vmshare_cli::sweep::{sweep_rows, write_sweep_csv, SweepAxis};
use vmshare_core::auctions::{icat, opa, puff, Bid, TargetRevenue};
use vmshare_core::export::{write_auction_rounds_csv, write_bound_report_csv, write_oracle_csv};
use vmshare_core::model::{
    generate_scenario, load_scenario, save_scenario, Scenario, ScenarioParams,
};
use vmshare_core::oracle::{exhaustive_optimum, placement_revenues};
use vmshare_core::perturb::{sample_spec, verify_bounds, BoundReport};
use vmshare_core::rng::child_seed;
use vmshare_core::model::DEFAULT_ENUMERATION_CAP;
use vmshare_core::{CoreError, Real};

#[derive(Parser)]
#[command(name = "vmshare", version, about = "VM placement and pricing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file.
    Generate(GenerateArgs),
    /// Run the full experiment bundle: chains, oracle, baselines, summary.
    Run(RunArgs),
    /// Enumerate all placements and report the exhaustive optimum.
    Oracle(OracleArgs),
    /// Sweep one axis and emit a consolidated comparison table.
    Sweep(SweepArgs),
    /// Sample revenue-error models and verify the stationary-law bounds.
    Perturb(PerturbArgs),
    /// Run a single-station auction for debugging.
    Auction(AuctionArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output scenario file.
    #[arg(long)]
    out: PathBuf,
    /// Users per station, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,0,2,4,0")]
    users: Vec<u32>,
    /// Total VMs shared across the network.
    #[arg(long, default_value_t = 10)]
    vms: u32,
    #[arg(long, default_value_t = 1)]
    demand_min: u32,
    #[arg(long, default_value_t = 3)]
    demand_max: u32,
    #[arg(long, default_value_t = 0.0)]
    val_min: f64,
    #[arg(long, default_value_t = 1.0)]
    val_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment configuration JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario file (replaces the config's scenario source).
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    /// Chain temperatures, comma separated.
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    /// Per-placement pricing mechanism for chain runs.
    #[arg(long, value_enum)]
    evaluator: Option<EvaluatorChoice>,
    /// Jump budget per chain run.
    #[arg(long)]
    jumps: Option<u64>,
    /// Running-average window in jumps.
    #[arg(long)]
    window: Option<usize>,
    /// Output directory for the artifact bundle.
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Master seed; every random choice derives from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Optional per-placement CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Which parameter to sweep.
    #[arg(long, value_enum)]
    axis: SweepAxis,
    /// Output CSV (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Chain temperature the bounds are checked at.
    #[arg(long)]
    beta: f64,
    /// Largest error half-width sampled; defaults to half the best revenue.
    #[arg(long)]
    psi_max: Option<f64>,
    /// Largest quantization level sampled.
    #[arg(long, default_value_t = 2)]
    quantization: u32,
    /// Number of sampled error models.
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report CSV output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuctionArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Station index whose users participate.
    #[arg(long)]
    station: usize,
    #[arg(long, value_enum)]
    mechanism: MechanismChoice,
    /// VMs available at the station; defaults to the scenario's total.
    #[arg(long)]
    vms: Option<u32>,
    /// Revenue target (required for icat).
    #[arg(long)]
    target: Option<f64>,
    /// Partition seed (puff only).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the round-by-round trace CSV here (puff writes two files,
    /// suffixed _first and _second).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MechanismChoice {
    Opa,
    Icat,
    Puff,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                return ExitCode::from(2);
            }
            match err.downcast_ref::<CoreError>() {
                Some(CoreError::EnumerationTooLarge { .. }) => ExitCode::from(3),
                Some(CoreError::InvalidParameter { .. }) | Some(CoreError::ScenarioFormat(_)) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Perturb(args) => cmd_perturb(args),
        Command::Auction(args) => cmd_auction(args),
    }
}

/// Builds the effective configuration: file values first, flags on top.
fn effective_config(args: ConfigArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        // Flags-only invocation: an empty skeleton picks up every serde
        // default, then the overrides below must fill in the blanks.
        None => serde_json::from_value(serde_json::json!({
            "scenario": {"file": ""},
            "outdir": "",
        }))?,
    };
    let overrides = Overrides {
        scenario_file: args.scenario_file,
        betas: args.betas,
        evaluator: args.evaluator,
        jumps: args.jumps,
        window: args.window,
        outdir: args.outdir,
        seed: args.seed,
    };
    overrides.apply(&mut cfg);
    if let ScenarioSource::File { file } = &cfg.scenario {
        if file.as_os_str().is_empty() {
            return Err(UsageError::new("scenario", "provide --config or --scenario-file").into());
        }
    }
    if cfg.outdir.as_os_str().is_empty() {
        return Err(UsageError::new("outdir", "provide --outdir or set it in the config").into());
    }
    Ok(cfg)
}

fn cmd_generate(args: GenerateArgs) -> anyhow::Result<()> {
    let scenario: Scenario<Real> = generate_scenario(&ScenarioParams {
        users_per_station: args.users,
        total_vms: args.vms,
        demand_range: (args.demand_min, args.demand_max),
        valuation_range: (args.val_min, args.val_max),
        seed: args.seed,
    })?;
    save_scenario(&scenario, &args.out)?;
    println!(
        "wrote {} ({} stations, {} users, {} VMs)",
        args.out.display(),
        scenario.station_count(),
        scenario.stations.iter().map(|s| s.users.len()).sum::<usize>(),
        scenario.total_vms
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let cfg = effective_config(args.config)?;
    let summary = run_experiment(&cfg)?;
    for warning in &summary.warnings {
        eprintln!("warning: {warning}");
    }
    match summary.oracle_revenue {
        Some(opt) => println!("oracle revenue {opt}"),
        None => println!("oracle revenue unavailable"),
    }
    for run in &summary.runs {
        println!("beta {}: time-average revenue {}", run.beta, run.time_average_revenue);
    }
    println!("bundle written to {}", cfg.outdir.display());
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<()> {
    let scenario: Scenario<Real> = load_scenario(&args.scenario)?;
    // Cap overruns are fatal here: the whole point of this command is the
    // enumeration, so the error propagates and maps to exit code 3.
    let result = exhaustive_optimum(&scenario)?;
    if let Some(out) = &args.out {
        let rows = placement_revenues(&scenario, DEFAULT_ENUMERATION_CAP)?;
        let file = File::create(out)?;
        write_oracle_csv(BufWriter::new(file), &rows, &result.best_revenue)?;
    }
    println!(
        "optimum {} at placement {} with prices {}",
        result.best_revenue,
        result.best_placement.label(),
        result
            .best_prices
            .prices
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let cfg = effective_config(args.config)?;
    let rows = sweep_rows(&cfg, args.axis)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path)?;
            write_sweep_csv(BufWriter::new(file), &rows)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => write_sweep_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn cmd_perturb(args: PerturbArgs) -> anyhow::Result<()> {
    let scenario: Scenario<Real> = load_scenario(&args.scenario)?;
    // Errors are measured against the revenue scale; by default stay within
    // half the best revenue, the regime the gap certificate is stated for.
    let phi_max = exhaustive_optimum(&scenario)?.best_revenue;
    let psi_max = args.psi_max.unwrap_or(phi_max / 2.0);
    let states = vmshare_core::model::enumerate_placements(&scenario)?.len();
    let mut rows: Vec<(Real, Real, BoundReport<Real>)> = Vec::new();
    let mut passes = 0u64;
    for trial in 0..args.trials {
        let spec = sample_spec(states, psi_max, args.quantization, child_seed(args.seed, trial));
        let report = verify_bounds(&scenario, args.beta, &spec)?;
        passes += u64::from(report.both_hold());
        rows.push((args.beta, spec.psi_max(), report));
    }
    let file = File::create(&args.out)?;
    write_bound_report_csv(BufWriter::new(file), &rows)?;
    println!("{passes}/{} trials satisfied both bounds; report at {}", args.trials, args.out.display());
    Ok(())
}

fn cmd_auction(args: AuctionArgs) -> anyhow::Result<()> {
    let scenario: Scenario<Real> = load_scenario(&args.scenario)?;
    let station = scenario
        .stations
        .get(args.station)
        .ok_or_else(|| UsageError::new("station", format!("index {} out of range", args.station)))?;
    let vms = args.vms.unwrap_or(scenario.total_vms);
    match args.mechanism {
        MechanismChoice::Opa => {
            let outcome = opa(&Bid::from_users(&station.users), vms);
            println!(
                "opa: price {} revenue {} winners {}",
                outcome.clearing_price,
                outcome.revenue,
                outcome.winners.len()
            );
            if let Some(path) = &args.trace {
                write_auction_rounds_csv(BufWriter::new(File::create(path)?), &outcome)?;
            }
        }
        MechanismChoice::Icat => {
            let target = args
                .target
                .ok_or_else(|| UsageError::new("target", "icat needs --target"))?;
            let outcome = icat(&station.users, vms, &TargetRevenue::new(target)?);
            println!(
                "icat: price {} revenue {} winners {} rounds {}",
                outcome.clearing_price,
                outcome.revenue,
                outcome.winners.len(),
                outcome.rounds.len()
            );
            if let Some(path) = &args.trace {
                write_auction_rounds_csv(BufWriter::new(File::create(path)?), &outcome)?;
            }
        }
        MechanismChoice::Puff => {
            let outcome = puff(&station.users, vms, args.seed);
            println!(
                "puff: combined revenue {} (targets {} and {}, splits {} and {})",
                outcome.combined_revenue(),
                outcome.targets.0,
                outcome.targets.1,
                outcome.vm_split.0,
                outcome.vm_split.1
            );
            if let Some(path) = &args.trace {
                let stem = path.with_extension("");
                let first = stem.with_file_name(format!(
                    "{}_first.csv",
                    stem.file_name().unwrap_or_default().to_string_lossy()
                ));
                let second = stem.with_file_name(format!(
                    "{}_second.csv",
                    stem.file_name().unwrap_or_default().to_string_lossy()
                ));
                write_auction_rounds_csv(BufWriter::new(File::create(first)?), &outcome.first)?;
                write_auction_rounds_csv(BufWriter::new(File::create(second)?), &outcome.second)?;
            }
        }
    }
    Ok(())
}
