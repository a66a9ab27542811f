//! End-to-end runs of the `vmshare` binary: bundle contents, exit codes,
//! reproducibility, and the sweep tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn vmshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vmshare")).args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn generate_small(dir: &Path) -> PathBuf {
    let path = dir.join("scenario.json");
    let out = vmshare(&[
        "generate",
        "--out",
        path.to_str().unwrap(),
        "--users",
        "2,1,2",
        "--vms",
        "4",
        "--seed",
        "7",
    ]);
    assert_success(&out);
    path
}

/// All regular files in a directory, keyed by name, with their raw bytes.
fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        out.insert(entry.file_name().to_string_lossy().into_owned(), std::fs::read(entry.path()).unwrap());
    }
    out
}

#[test]
fn generate_oracle_run_pipeline_produces_the_full_bundle() {
    let tmp = TempDir::new().unwrap();
    let scenario = generate_small(tmp.path());

    let oracle_out = assert_success(&vmshare(&["oracle", "--scenario", scenario.to_str().unwrap()]));
    assert!(oracle_out.contains("optimum"), "got: {oracle_out}");

    let bundle = tmp.path().join("bundle");
    assert_success(&vmshare(&[
        "run",
        "--scenario-file",
        scenario.to_str().unwrap(),
        "--outdir",
        bundle.to_str().unwrap(),
        "--betas",
        "5",
        "--jumps",
        "400",
        "--seed",
        "3",
    ]));

    let files = dir_bytes(&bundle);
    for expected in [
        "scenario.json",
        "oracle.csv",
        "baseline_table.csv",
        "trace_beta5.csv",
        "series_beta5.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert!(files.contains_key(expected), "missing {expected}; have {:?}", files.keys());
    }

    let summary: serde_json::Value = serde_json::from_slice(&files["summary.json"]).unwrap();
    assert_eq!(summary["states"], 15); // 4 VMs over 3 stations
    let bound = summary["gap_certificates"][0]["bound"].as_f64().unwrap();
    assert!((bound - (15.0f64).ln() / 5.0).abs() < 1e-12);
    let oracle_revenue = summary["oracle_revenue"].as_f64().unwrap();
    assert!(oracle_revenue > 0.0);

    // Dominance: no tabulated method beats the exhaustive optimum.
    for row in summary["baselines"].as_array().unwrap() {
        let revenue = row["revenue"].as_f64().unwrap();
        assert!(revenue <= oracle_revenue + 1e-12, "{row}");
        let ratio = row["ratio_to_oracle"].as_f64().unwrap();
        assert!((ratio - revenue / oracle_revenue).abs() < 1e-12);
    }
    let tavg = summary["runs"][0]["time_average_revenue"].as_f64().unwrap();
    assert!(tavg > 0.0 && tavg <= oracle_revenue + 1e-12);

    // The manifest names exactly the other files in the bundle.
    let manifest: serde_json::Value = serde_json::from_slice(&files["manifest.json"]).unwrap();
    let mut listed: Vec<&str> =
        manifest["files"].as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    listed.sort_unstable();
    let mut present: Vec<&str> =
        files.keys().map(String::as_str).filter(|n| *n != "manifest.json").collect();
    present.sort_unstable();
    assert_eq!(listed, present);

    // Series rows carry the headered schema and one row per jump.
    let series = String::from_utf8(files["series_beta5.csv"].clone()).unwrap();
    let mut lines = series.lines();
    assert_eq!(lines.next(), Some("jump_index,sim_time,window_avg_revenue"));
    assert_eq!(lines.count(), 400);
}

#[test]
fn reference_setup_emits_one_series_per_temperature() {
    // Five stations with users (2,0,2,4,0), ten VMs, two temperatures: the
    // canonical small setup. Each β gets its own trace and series file.
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("config.json");
    let bundle = tmp.path().join("bundle");
    std::fs::write(
        &config,
        format!(
            r#"{{
                "scenario": {{"generate": {{"users_per_station": [2, 0, 2, 4, 0], "total_vms": 10}}}},
                "betas": [10.0, 50.0],
                "jumps": 3000,
                "outdir": {:?},
                "seed": 1
            }}"#,
            bundle.to_str().unwrap()
        ),
    )
    .unwrap();
    assert_success(&vmshare(&["run", "--config", config.to_str().unwrap()]));
    let files = dir_bytes(&bundle);
    for name in ["series_beta10.csv", "series_beta50.csv", "trace_beta10.csv", "trace_beta50.csv"] {
        assert!(files.contains_key(name), "missing {name}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&files["summary.json"]).unwrap();
    assert_eq!(summary["states"], 1001);
    // Higher β concentrates harder: its certificate is the tighter one.
    let bounds: Vec<f64> = summary["gap_certificates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["bound"].as_f64().unwrap())
        .collect();
    assert!(bounds[0] > bounds[1]);
}

#[test]
fn identical_configs_build_byte_identical_bundles() {
    let tmp = TempDir::new().unwrap();
    let scenario = generate_small(tmp.path());
    let args = |dir: &Path| {
        vec![
            "run".to_string(),
            "--scenario-file".into(),
            scenario.to_str().unwrap().into(),
            "--outdir".into(),
            dir.to_str().unwrap().into(),
            "--betas".into(),
            "2,8".into(),
            "--jumps".into(),
            "300".into(),
            "--seed".into(),
            "17".into(),
            "--evaluator".into(),
            "puff".into(),
        ]
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let argv = args(dir);
        let refs: Vec<&str> = argv.iter().map(String::as_str).collect();
        assert_success(&vmshare(&refs));
    }
    // Different directories, same bytes: no artifact embeds its location.
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn zero_jump_budget_produces_a_summary_only_bundle() {
    let tmp = TempDir::new().unwrap();
    let scenario = generate_small(tmp.path());
    let bundle = tmp.path().join("empty");
    assert_success(&vmshare(&[
        "run",
        "--scenario-file",
        scenario.to_str().unwrap(),
        "--outdir",
        bundle.to_str().unwrap(),
        "--jumps",
        "0",
    ]));
    let names: Vec<String> = dir_bytes(&bundle).keys().cloned().collect();
    assert_eq!(names, vec!["manifest.json", "scenario.json", "summary.json"]);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(bundle.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 0);
    assert!(summary["oracle_revenue"].as_f64().is_some());
}

#[test]
fn usage_problems_exit_2() {
    let tmp = TempDir::new().unwrap();
    let scenario = generate_small(tmp.path());

    // No scenario at all.
    let out = vmshare(&["run", "--outdir", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown flag (rejected by the argument parser itself).
    let out = vmshare(&["run", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));

    // Non-positive temperature.
    let out = vmshare(&[
        "run",
        "--scenario-file",
        scenario.to_str().unwrap(),
        "--outdir",
        tmp.path().join("y").to_str().unwrap(),
        "--betas=-1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Jump budget below the window.
    let out = vmshare(&[
        "run",
        "--scenario-file",
        scenario.to_str().unwrap(),
        "--outdir",
        tmp.path().join("z").to_str().unwrap(),
        "--jumps",
        "5",
        "--window",
        "30",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // icat without a target.
    let out = vmshare(&[
        "auction",
        "--scenario",
        scenario.to_str().unwrap(),
        "--station",
        "0",
        "--mechanism",
        "icat",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn enumeration_cap_is_fatal_for_oracle_but_a_warning_for_run() {
    let tmp = TempDir::new().unwrap();
    let scenario = tmp.path().join("huge.json");
    let users = vec!["1"; 30].join(",");
    assert_success(&vmshare(&[
        "generate",
        "--out",
        scenario.to_str().unwrap(),
        "--users",
        &users,
        "--vms",
        "30",
    ]));

    let out = vmshare(&["oracle", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let bundle = tmp.path().join("big-bundle");
    let out = vmshare(&[
        "run",
        "--scenario-file",
        scenario.to_str().unwrap(),
        "--outdir",
        bundle.to_str().unwrap(),
        "--betas",
        "2",
        "--jumps",
        "50",
        "--window",
        "10",
    ]);
    assert_success(&out);
    let files = dir_bytes(&bundle);
    assert!(!files.contains_key("oracle.csv"));
    assert!(!files.contains_key("baseline_table.csv"));
    assert!(files.contains_key("trace_beta2.csv"));
    let summary: serde_json::Value = serde_json::from_slice(&files["summary.json"]).unwrap();
    assert!(summary["oracle_revenue"].is_null());
    assert!(summary["warnings"][0].as_str().unwrap().contains("enumeration cap"));
}

fn sweep_config(tmp: &Path, extra: &str) -> PathBuf {
    let path = tmp.join("sweep.json");
    std::fs::write(
        &path,
        format!(
            r#"{{
                "scenario": {{"generate": {{"users_per_station": [2, 1, 2], "total_vms": 4}}}},
                "betas": [5.0],
                "jumps": 200,
                "window": 20,
                "outdir": "unused",
                "seed": 11{extra}
            }}"#
        ),
    )
    .unwrap();
    path
}

/// Parses a sweep CSV into (method, axis, revenue, oracle) tuples.
fn parse_sweep(text: &str) -> Vec<(String, f64, f64, Option<f64>)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,axis_value,revenue,oracle_revenue,ratio"));
    lines
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            (
                cells[0].to_string(),
                cells[1].parse().unwrap(),
                cells[2].parse().unwrap(),
                if cells[3].is_empty() { None } else { Some(cells[3].parse().unwrap()) },
            )
        })
        .collect()
}

fn run_sweep(config: &Path, axis: &str) -> Vec<(String, f64, f64, Option<f64>)> {
    let out = assert_success(&vmshare(&["sweep", "--config", config.to_str().unwrap(), "--axis", axis]));
    parse_sweep(&out)
}

#[test]
fn valuation_and_demand_sweeps_raise_the_oracle_monotonically() {
    let tmp = TempDir::new().unwrap();
    let config = sweep_config(tmp.path(), "");
    for axis in ["valuation", "demand"] {
        let rows = run_sweep(&config, axis);
        let oracle: Vec<(f64, f64)> =
            rows.iter().filter(|r| r.0 == "oracle").map(|r| (r.1, r.2)).collect();
        assert!(oracle.len() >= 3, "{axis}: {rows:?}");
        for pair in oracle.windows(2) {
            assert!(pair[0].0 < pair[1].0, "{axis} axis out of order: {oracle:?}");
            assert!(
                pair[0].1 <= pair[1].1 + 1e-12,
                "{axis} oracle revenue decreased: {oracle:?}"
            );
        }
        // Every method stays within the optimum on every row.
        for (method, axis_value, revenue, oracle) in &rows {
            let oracle = oracle.expect("small scenarios always enumerate");
            assert!(*revenue <= oracle + 1e-9, "{method} at {axis_value} beats the oracle");
        }
    }
}

#[test]
fn single_value_beta_sweep_matches_the_run_summary() {
    let tmp = TempDir::new().unwrap();
    let config = sweep_config(tmp.path(), "");
    let rows = run_sweep(&config, "beta");
    assert_eq!(rows.len(), 2); // cmap + oracle for the single β

    let bundle = tmp.path().join("bundle");
    assert_success(&vmshare(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--outdir",
        bundle.to_str().unwrap(),
    ]));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(bundle.join("summary.json")).unwrap()).unwrap();

    let cmap = rows.iter().find(|r| r.0 == "cmap").unwrap();
    assert_eq!(cmap.1, 5.0);
    assert_eq!(cmap.2, summary["runs"][0]["time_average_revenue"].as_f64().unwrap());
    let oracle = rows.iter().find(|r| r.0 == "oracle").unwrap();
    assert_eq!(oracle.2, summary["oracle_revenue"].as_f64().unwrap());
}

#[test]
fn sweeps_that_regenerate_need_generation_parameters() {
    let tmp = TempDir::new().unwrap();
    let scenario = generate_small(tmp.path());
    for axis in ["valuation", "demand"] {
        let out = vmshare(&[
            "sweep",
            "--scenario-file",
            scenario.to_str().unwrap(),
            "--outdir",
            "unused",
            "--axis",
            axis,
        ]);
        assert_eq!(out.status.code(), Some(2), "{axis} should be a usage error on a file source");
    }
}

#[test]
fn perturb_writes_a_full_report_and_passes_in_regime() {
    let tmp = TempDir::new().unwrap();
    let scenario = generate_small(tmp.path());
    let report = tmp.path().join("bounds.csv");
    let stdout = assert_success(&vmshare(&[
        "perturb",
        "--scenario",
        scenario.to_str().unwrap(),
        "--beta",
        "2",
        "--trials",
        "25",
        "--out",
        report.to_str().unwrap(),
    ]));
    assert!(stdout.contains("25/25"), "got: {stdout}");
    let text = std::fs::read_to_string(&report).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("beta,psi_max,tv,tv_bound,gap,gap_bound,pass"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
}

#[test]
fn auction_traces_follow_the_round_schema() {
    let tmp = TempDir::new().unwrap();
    let scenario = generate_small(tmp.path());
    let trace = tmp.path().join("rounds.csv");
    assert_success(&vmshare(&[
        "auction",
        "--scenario",
        scenario.to_str().unwrap(),
        "--station",
        "2",
        "--mechanism",
        "icat",
        "--target",
        "0.5",
        "--vms",
        "3",
        "--trace",
        trace.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("round,posted_price,num_active,rejected_ids\n"));

    // The split mechanism writes one trace per half.
    let trace = tmp.path().join("split.csv");
    assert_success(&vmshare(&[
        "auction",
        "--scenario",
        scenario.to_str().unwrap(),
        "--station",
        "0",
        "--mechanism",
        "puff",
        "--vms",
        "3",
        "--trace",
        trace.to_str().unwrap(),
    ]));
    for suffix in ["split_first.csv", "split_second.csv"] {
        let text = std::fs::read_to_string(tmp.path().join(suffix)).unwrap();
        assert!(text.starts_with("round,posted_price,num_active,rejected_ids\n"), "{suffix}");
    }
}
