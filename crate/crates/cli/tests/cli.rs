use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 6] = [
    "--set",
    "num_antennas=2",
    "--set",
    "num_users=2",
    "--set",
    "elements_per_ris=4",
];

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-pricing"))
        .args(args)
        .output()
        .unwrap()
}

fn solve(extra: &[&str]) -> Output {
    let mut args = vec!["solve"];
    args.extend(SMALL);
    args.extend(extra);
    cli(&args)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_report_summary_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let trace = dir.path().join("trace.csv");
    let status = solve(&["--seed", "3", "--out", path(&out), "--trace", path(&trace)]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["scheme"], "stackelberg-nonuniform");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(
        lines[1].starts_with("power,10,stackelberg-nonuniform,3,"),
        "{}",
        lines[1]
    );

    let trace = fs::read_to_string(&trace).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "iter,surrogate,power_used,max_alpha_gap");
    assert!(trace.lines().count() > 1);
}

#[test]
fn dumped_channels_reproduce_the_solve() {
    let dir = tempfile::tempdir().unwrap();
    let channels = dir.path().join("ch.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(
        solve(&["--seed", "5", "--dump-channels", path(&channels), "--out", path(&a)])
            .status
            .success()
    );
    // a different seed is ignored once the channels are supplied
    let again = solve(&["--seed", "6", "--load-channels", path(&channels), "--out", path(&b)]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(
        fs::read(a.join("report.json")).unwrap(),
        fs::read(b.join("report.json")).unwrap()
    );
}

#[test]
fn mismatched_channel_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let channels = dir.path().join("ch.json");
    assert!(solve(&["--dump-channels", path(&channels)]).status.success());
    let status = cli(&["solve", "--load-channels", path(&channels)]);
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn bad_config_values_exit_with_two() {
    assert_eq!(solve(&["--set", "power_budget_dbm=abc"]).status.code(), Some(2));
    assert_eq!(solve(&["--set", "price_cap=-1"]).status.code(), Some(2));
    assert_eq!(solve(&["--set", "no_such_key=1"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("old.toml");
    fs::write(&config, "schema_version = 99\n").unwrap();
    assert_eq!(cli(&["solve", "--config", path(&config)]).status.code(), Some(2));
}

#[test]
fn strict_mode_reports_non_convergence() {
    assert_eq!(
        solve(&["--set", "max_outer_iters=1", "--strict"]).status.code(),
        Some(3)
    );
    let lenient = solve(&["--set", "max_outer_iters=1"]);
    assert!(lenient.status.success());
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("did not converge"));
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("s.toml");
    fs::write(
        &config,
        "schema_version = 1\nnum_antennas = 2\nnum_users = 2\nelements_per_ris = 4\npower_budget_dbm = 0.0\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = cli(&[
        "solve",
        "--config",
        path(&config),
        "--set",
        "power_budget_dbm=5",
        "--out",
        path(&out),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("power,5,"));
}

#[test]
fn run_writes_sweep_outputs_and_passes_its_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let mut args = vec!["run"];
    args.extend(SMALL);
    args.extend([
        "--sweep",
        "power",
        "--values",
        "0,10",
        "--scheme",
        "stackelberg-uniform,random",
        "--seeds",
        "0..1",
        "--out",
        path(&out),
        "--audit",
    ]);
    let status = cli(&args);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for file in ["sweep.csv", "summary.csv", "reports.jsonl", "plot.py"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    // 2 values x 2 schemes x (2 seeds + mean row) + header
    assert_eq!(sweep.lines().count(), 1 + 2 * 2 * 3);
    assert!(cli(&["audit", "--dir", path(&out)]).status.success());

    let edited = sweep.replacen("stackelberg-uniform,0,", "stackelberg-uniform,0,9", 1);
    fs::write(out.join("sweep.csv"), edited).unwrap();
    assert!(!cli(&["audit", "--dir", path(&out)]).status.success());
}

#[test]
fn sweep_values_out_of_range_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let status = cli(&[
        "run",
        "--sweep",
        "location",
        "--values",
        "500",
        "--seeds",
        "0",
        "--out",
        path(&out),
    ]);
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn oracle_subcommand_writes_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("fx/oracle.json");
    let status = cli(&[
        "oracle",
        "--out",
        path(&file),
        "--instances",
        "2",
        "--leader-instances",
        "1",
        "--restarts",
        "2",
        "--steps",
        "200",
        "--price-grid",
        "32",
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let fixtures: serde_json::Value = serde_json::from_str(&fs::read_to_string(&file).unwrap()).unwrap();
    assert_eq!(fixtures["follower"].as_array().unwrap().len(), 2);
    assert_eq!(fixtures["leader"].as_array().unwrap().len(), 1);
}
