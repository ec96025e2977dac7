use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use abp::config::{parse_config, ExperimentConfig};
use abp::dynamics::Variant;
use abp::harness::{load_manifest_config, run_experiment, ExperimentReport, Manifest};
use abp::Error;

fn artifact_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in ["oracle", "runs", "bias", "curves"] {
        for entry in fs::read_dir(dir.join(sub)).unwrap() {
            let path = entry.unwrap().path();
            out.insert(format!("{sub}/{}", path.file_name().unwrap().to_string_lossy()), fs::read(&path).unwrap());
        }
    }
    out.insert("report.json".into(), fs::read(dir.join("report.json")).unwrap());
    out
}

#[test]
fn uniform_smoke_is_fast_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::builtin("uniform-smoke").unwrap();
    let start = Instant::now();
    let outcome = run_experiment(&cfg, tmp.path(), true).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "smoke run took {elapsed:.1} s");
    assert!(outcome.report.passed, "{:#?}", outcome.report.rows);
    assert_eq!(outcome.exit_code, 0);
    assert!(!outcome.report.rows.is_empty());
}

#[test]
fn rerun_is_byte_identical_and_manifest_reproduces_it() {
    let cfg = ExperimentConfig::builtin("uniform-smoke").unwrap();
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    run_experiment(&cfg, a.path(), true).unwrap();
    run_experiment(&cfg, b.path(), true).unwrap();
    let first = artifact_files(a.path());
    assert_eq!(first, artifact_files(b.path()));
    assert!(first.keys().any(|k| k.starts_with("runs/abp-seed")));

    let reparsed = load_manifest_config(&a.path().join("manifest.json")).unwrap();
    let mut expected = cfg.clone();
    expected.output_dir = Some(a.path().to_path_buf());
    assert_eq!(reparsed, expected);
    let toml = parse_config(&fs::read_to_string(a.path().join("config.toml")).unwrap()).unwrap();
    assert_eq!(toml, expected);
    run_experiment(&reparsed, c.path(), true).unwrap();
    assert_eq!(first, artifact_files(c.path()));
}

#[test]
fn manifest_indexes_every_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::builtin("uniform-smoke").unwrap();
    run_experiment(&cfg, tmp.path(), false).unwrap();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.runs.len(), 4);
    for run in &manifest.runs {
        assert!(tmp.path().join(&run.checkpoints_csv).is_file());
        assert!(tmp.path().join(&run.curves_csv).is_file());
        assert_eq!(run.bias_csv.is_some(), run.variant == Variant::Abp);
        assert!((run.final_time - 100.0).abs() < 1e-9);
    }
    let report: ExperimentReport = serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert!(!report.checked && report.rows.is_empty());

    let header = fs::read_to_string(tmp.path().join("runs/abp-seed1.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.starts_with("step,t,theta,d_to_target,f1,"));
    assert_eq!(header.split(',').count(), 4 + cfg.family_size);
    let profile = fs::read_to_string(tmp.path().join("oracle/profile.csv")).unwrap();
    assert_eq!(profile.lines().next().unwrap(), "z,A_star,A_infinity");
}

#[test]
fn double_well_preset_reports_all_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::builtin("double-well-acceptance").unwrap();
    cfg.total_time = 5.0;
    cfg.seeds = Some(vec![3]);
    let outcome = run_experiment(&cfg, tmp.path(), true).unwrap();
    let runs: std::collections::BTreeSet<&str> = outcome.report.rows.iter().map(|r| r.run.as_str()).collect();
    for v in Variant::ALL {
        assert!(runs.contains(format!("{}-seed3", v.name()).as_str()), "{runs:?}");
    }
    assert_eq!(outcome.exit_code, i32::from(!outcome.report.passed));
}

#[test]
fn io_errors_carry_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("occupied");
    fs::write(&blocker, "not a directory").unwrap();
    let err = run_experiment(&ExperimentConfig::builtin("uniform-smoke").unwrap(), &blocker, false).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    assert!(err.to_string().contains("occupied"), "{err}");
}

#[test]
fn binary_runs_presets_and_sets_exit_status() {
    let exe = env!("CARGO_BIN_EXE_abp");
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(exe)
        .args(["run", "--preset", "uniform-smoke", "--check", "--variant", "abp", "--seed", "4"])
        .arg("--out")
        .arg(tmp.path())
        .env("ABP_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS abp-seed4"), "{stdout}");
    assert!(tmp.path().join("runs/abp-seed4.csv").is_file());
    assert!(!tmp.path().join("runs/unbiased-seed4.csv").exists());

    let listed = Command::new(exe).arg("preset").output().unwrap();
    assert!(String::from_utf8_lossy(&listed.stdout).contains("double-well-acceptance"));
    let printed = Command::new(exe).args(["preset", "uniform-smoke"]).output().unwrap();
    let cfg = parse_config(&String::from_utf8_lossy(&printed.stdout)).unwrap();
    assert_eq!(cfg, ExperimentConfig::builtin("uniform-smoke").unwrap());

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "preset = \"uniform\"\n[kernel]\nwidth = 0.3\n").unwrap();
    let failed = Command::new(exe).arg("run").arg(&bad).output().unwrap();
    assert_eq!(failed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("kernel.width"));
}

#[test]
fn failing_check_sets_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::builtin("uniform-smoke").unwrap();
    cfg.check.thresholds.max_final_d = 1e-9;
    let outcome = run_experiment(&cfg, tmp.path(), true).unwrap();
    assert!(!outcome.report.passed);
    assert_eq!(outcome.exit_code, 1);
    let unchecked = run_experiment(&cfg, tmp.path(), false).unwrap();
    assert_eq!(unchecked.exit_code, 0);
}
