use std::process::Command;

use nitsche_bps::harness::{
    emit, parse_config_text, render_csv, run_experiment, ExperimentConfig, OutputFormat, CSV_HEADER,
};
use nitsche_bps::precond::Variant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nitsche-bps"))
}

#[test]
fn smallest_pipeline_runs() {
    let row = run_experiment(&ExperimentConfig::structured(1, 1, 1, Variant::None)).unwrap();
    assert!(row.kappa >= 1.0);
    assert!(row.converged);
}

#[test]
fn identical_configs_are_bitwise_deterministic() {
    let cfg = ExperimentConfig::structured(2, 4, 1, Variant::P);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.kappa.to_bits(), b.kappa.to_bits());
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn emit_one_row_and_reemit_identically() {
    let row = run_experiment(&ExperimentConfig::cartesian(1, 2, Variant::PStar)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("row.csv");
    emit(std::slice::from_ref(&row), OutputFormat::Csv, &path).unwrap();
    let first = std::fs::read(&path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    emit(std::slice::from_ref(&row), OutputFormat::Csv, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
    assert_eq!(render_csv(&[row]), text);
    assert!(emit(&[], OutputFormat::Csv, &path).is_err());
}

#[test]
fn config_text_overrides_defaults() {
    let map = parse_config_text("# comment\ngrid = cartesian\nlevel=1\n degree = 3 \nprecond=Pstar\n", "c.cfg".as_ref()).unwrap();
    let mut cfg = ExperimentConfig::default();
    for (k, v) in &map {
        cfg.set(k, v).unwrap();
    }
    cfg.validate().unwrap();
    assert_eq!((cfg.level, cfg.degree, cfg.precond), (1, 3, Variant::PStar));
    assert!(cfg.set("colour", "red").is_err());
    assert!(parse_config_text("level\n", "c.cfg".as_ref()).is_err());
}

#[test]
fn cli_run_prints_csv() {
    let out = bin().args(["run", "--grid", "structured", "--level", "2", "--refine", "3", "--precond", "P"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,n,p,alpha,precond,iters,kappa,ratio,logfactor,ms");
    let kappa: f64 = lines[1].split(',').nth(6).unwrap().parse().unwrap();
    assert!((kappa - 3.11).abs() < 0.01);
}

#[test]
fn cli_config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "grid = cartesian\nlevel = 1\ndegree = 4\nprecond = none\n").unwrap();
    let out = bin().args(["--config", cfg.to_str().unwrap(), "run", "--degree", "2"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&fields[..5], &["4", "4", "2", "10", "none"]);
}

#[test]
fn cli_table_writes_markdown_with_references() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t1.md");
    let out = bin()
        .args(["table", "--id", "1", "--max-elements", "128", "--out", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let md = std::fs::read_to_string(&path).unwrap();
    assert!(md.contains("3.11"));
    assert!(md.contains("[ref 3.11]"));
}

#[test]
fn cli_diag_and_bad_arguments() {
    let out = bin().args(["diag", "--check", "counterexample", "--level", "1", "--steps", "2"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("r,n,H/h"));
    let bad = bin().args(["run", "--precond", "jacobi"]).output().unwrap();
    assert!(!bad.status.success());
    let bad = bin().args(["run", "--level", "3", "--refine", "2"]).output().unwrap();
    assert!(!bad.status.success());
}
