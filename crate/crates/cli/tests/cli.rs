use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[scenario]
num_users = 6
num_res = 4
num_sats = 3
rng_seed = 4

[constraints]
q_s = 3
"#;

fn mudalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mudalloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn solve_prints_feasible_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = mudalloc(&["solve", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bits = report["matching"].as_str().unwrap();
    assert_eq!(bits.len(), 18);
    assert!(bits.chars().all(|c| c == '0' || c == '1'));
    assert!(report["rounded_sum_rate"].as_f64().unwrap() > 0.0);
}

#[test]
fn solve_overrides_seed_and_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (path, seed) in [(&a, "1"), (&b, "2")] {
        let out = mudalloc(&["solve", &cfg, "--seed", seed, "--out", path.to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[scenario]\nnum_users = 0\n");
    assert_eq!(mudalloc(&["solve", &bad]).status.code(), Some(2));

    let unknown = write(dir.path(), "unknown.toml", "[scenario]\nsatellites = 3\n");
    assert_eq!(mudalloc(&["solve", &unknown]).status.code(), Some(2));

    let infeasible = write(
        dir.path(),
        "infeasible.toml",
        &format!("{SMALL}q_l = 2.0\n").replace("q_s = 3", "q_s = 1"),
    );
    assert_eq!(mudalloc(&["solve", &infeasible]).status.code(), Some(3));

    assert_eq!(mudalloc(&["solve"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(
        dir.path(),
        "plan.toml",
        &format!("{SMALL}\n[experiment]\nsweep = \"epsilon\"\nvalues = [0.0, 0.5]\ntrials = 2\n"),
    );
    let out_dir = dir.path().join("out");
    let out = mudalloc(&["sweep", &plan, "--out", out_dir.to_str().unwrap(), "--trials", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trials = fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    // header + 2 values x 3 trials x 4 allocators
    assert_eq!(trials.lines().count(), 1 + 2 * 3 * 4);
    assert!(trials.starts_with("sweep,value,trial,seed,allocator,"));
    assert!(out_dir.join("summary.csv").exists());
    assert!(out_dir.join("timings.csv").exists());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("plan.json")).unwrap()).unwrap();
    assert_eq!(meta["points"][1]["epsilon"], 0.5);
}

#[test]
fn converge_and_tradeoff_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.toml", &format!("{SMALL}\n[experiment]\ntrials = 2\n"));
    let out_dir = dir.path().join("out");
    let od = out_dir.to_str().unwrap();

    let out = mudalloc(&["converge", &plan, "--out", od]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("within 10 outer iterations"));
    let trace = fs::read_to_string(out_dir.join("converge.csv")).unwrap();
    assert!(trace.starts_with("trial,seed,iteration,lambda,"));

    let out = mudalloc(&["tradeoff", &plan, "--out", od, "--interference-variant", "complement"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = fs::read_to_string(out_dir.join("tradeoff.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 6);
}

#[test]
fn scenario_dump_writes_channels_and_signatures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out_dir = dir.path().join("dump");
    let out = mudalloc(&["scenario", "dump", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let channels = fs::read_to_string(out_dir.join("channels.csv")).unwrap();
    assert_eq!(channels.lines().count(), 1 + 4 * 6 * 3);
    let sigs = fs::read_to_string(out_dir.join("signatures.csv")).unwrap();
    assert_eq!(sigs.lines().count(), 1 + 4 * 6);
}

#[test]
fn bad_interference_variant_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = mudalloc(&["solve", &cfg, "--interference-variant", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
}
