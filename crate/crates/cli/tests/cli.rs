use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "networks": [
    { "name": "tiny", "layers": [
      { "name": "fc1", "kind": "gemm", "m": 4, "k": 160, "n": 36,
        "act_density": 0.4, "weight_density": 0.3, "zipf": 1.0 },
      { "name": "fc2", "kind": "gemm", "m": 4, "k": 36, "n": 12,
        "act_density": 0.5, "weight_density": 0.5, "zipf": 0.5 }
    ] }
  ],
  "hardware": { "snn_pes": 2, "ann_pes": 2 },
  "strategies": ["cost", "random", "ann-only"],
  "seeds": [7],
  "samples": 3
}"#;

fn colhybrid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colhybrid"))
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), config).unwrap();
    dir
}

#[test]
fn run_prints_and_writes_the_summary() {
    let dir = setup(SMALL);
    let out = colhybrid(dir.path(), &["--config", "cfg.json", "--out", "o", "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("network,schedule,cycles,"));
    assert_eq!(stdout.lines().count(), 1 + 3);
    assert_eq!(
        fs::read_to_string(dir.path().join("o/simulate/summary.csv")).unwrap(),
        stdout
    );
}

#[test]
fn stages_run_in_order_and_refuse_to_skip() {
    let dir = setup(SMALL);
    let base = ["--config", "cfg.json", "--out", "o"];
    let step = |cmd: &str| colhybrid(dir.path(), &[&base[..], &[cmd]].concat());

    let early = step("simulate");
    assert_eq!(early.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&early.stderr).contains("gen"));

    for cmd in ["gen", "profile", "calibrate", "schedule", "simulate"] {
        let o = step(cmd);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }

    // a new seed invalidates everything generated under the old one
    let stale = colhybrid(dir.path(), &[&base[..], &["--seed", "99", "profile"]].concat());
    assert_eq!(stale.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&stale.stderr).contains("stale"));
}

#[test]
fn bad_configuration_exits_2() {
    let dir = setup(r#"{ "samples": 3, "warp": true }"#);
    assert_eq!(
        colhybrid(dir.path(), &["--config", "cfg.json", "gen"]).status.code(),
        Some(2)
    );
    assert_eq!(
        colhybrid(dir.path(), &["--config", "missing.json", "gen"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        colhybrid(dir.path(), &["--strategy", "nope", "gen"]).status.code(),
        Some(2)
    );

    let dir = setup(SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_colhybrid"))
        .current_dir(dir.path())
        .env("COLHYBRID_WORKERS", "zero")
        .args(["--config", "cfg.json", "gen"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_on_wide_layers_exits_4() {
    let dir = setup(SMALL);
    let base = ["--config", "cfg.json", "--out", "o", "--strategy", "oracle"];
    for cmd in ["gen", "profile", "calibrate"] {
        assert_eq!(
            colhybrid(dir.path(), &[&base[..], &[cmd]].concat()).status.code(),
            Some(0)
        );
    }
    assert_eq!(
        colhybrid(dir.path(), &[&base[..], &["schedule"]].concat())
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn verify_reports_every_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = colhybrid(dir.path(), &["--out", "v", "verify"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = stdout.lines().filter_map(|l| l.split_whitespace().next()).collect();
    assert_eq!(
        names,
        ["equivalence", "mask_invariance", "phi_monotonicity", "oracle_proximity"]
    );
    assert!(stdout.lines().take(3).all(|l| l.contains(" PASS ")));
    // exit status follows the report: 0 when every suite passes, 3 otherwise
    let expected = if stdout.contains(" FAIL ") { 3 } else { 0 };
    assert_eq!(out.status.code(), Some(expected));
    assert!(dir.path().join("v/verify/report.json").is_file());
}
