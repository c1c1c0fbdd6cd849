use std::path::Path;
use std::process::{Command, Output};

use migr_harness::config::{ExperimentConfig, EXAMPLE_CONFIG};
use migr_harness::error::exit;
use migr_harness::manifest::{RunManifest, MANIFEST_FILE};
use migr_harness::pipeline::paths;
use migr_harness::{run_pipeline, HarnessError, RunOptions, Stage};

fn small_config() -> ExperimentConfig {
    let mut config = ExperimentConfig::from_toml_str(EXAMPLE_CONFIG).unwrap();
    config.grid.n = 24;
    config.band.n_k = 9;
    config.directions.count = 3;
    config
}

fn write_config(dir: &Path, config: &ExperimentConfig) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, config.to_toml_string()).unwrap();
    path
}

fn migr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_migr-scatter"))
        .args(args)
        .env("MIGR_THREADS", "2")
        .output()
        .unwrap()
}

#[test]
fn example_config_validates() {
    let out = migr(&["example"]);
    assert_eq!(out.status.code(), Some(exit::SUCCESS));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("example.toml");
    std::fs::write(&path, &out.stdout).unwrap();
    let out = migr(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(exit::SUCCESS), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn violations_exit_with_the_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config.source.m = 4.5;
    config.band.taus = vec![0.0, 0.3];
    let path = write_config(dir.path(), &config);
    let out = migr(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(exit::VALIDATION));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2 < m_f < 4"), "{err}");
    assert!(err.lines().count() >= 2, "{err}");

    let out = migr(&["run", "--config", path.to_str().unwrap(), "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(exit::VALIDATION));
    assert!(!dir.path().join("run").join(paths::SOURCE_VOLUME).exists());
}

#[test]
fn synth_stage_writes_only_volumes_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("out");
    let out = migr(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--stages",
        "synth",
    ]);
    assert_eq!(out.status.code(), Some(exit::SUCCESS), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = RunManifest::load(&out_dir).unwrap();
    let files: Vec<&str> = manifest.files.keys().map(String::as_str).collect();
    assert_eq!(files, vec![paths::POTENTIAL_VOLUME, paths::SOURCE_VOLUME]);
    assert!(manifest.complete);
    assert!(out_dir.join(MANIFEST_FILE).exists());
    assert!(!out_dir.join("archives").exists());
}

#[test]
fn recover_without_archives_names_the_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_config());
    let out_dir = dir.path().join("out");
    let out = migr(&["recover", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(exit::STAGE));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("passive.ffar"), "{err}");
    let manifest = RunManifest::load(&out_dir).unwrap();
    assert!(!manifest.complete);
    assert_eq!(manifest.failed_stage.as_deref(), Some("recover"));
}

#[test]
fn seed_override_changes_fields_and_reruns_match() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &small_config());
    let synth = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = migr(&[
            "synth",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(out.status.code(), Some(exit::SUCCESS));
        RunManifest::load(&out_dir).unwrap()
    };
    let a = synth("a", "11");
    let b = synth("b", "11");
    let c = synth("c", "12");
    assert_eq!(a.files, b.files);
    assert_ne!(a.files, c.files);
    assert_eq!((a.seed, c.seed), (11, 12));
}

#[test]
fn full_run_verifies_and_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config();
    let out = dir.path().join("out");
    let manifest = run_pipeline(&config, &out, &Stage::ALL, RunOptions::default()).unwrap();
    assert!(manifest.complete);
    assert_eq!(manifest.stages.len(), Stage::ALL.len());
    assert!(manifest.verify(&out).unwrap().is_empty());
    for p in [paths::SUMMARY_CSV, paths::SOURCE_RECON, paths::VERIFY_CSV] {
        assert!(manifest.files.contains_key(p), "{p} missing");
    }

    std::fs::write(out.join(paths::SUMMARY_CSV), "tampered\n").unwrap();
    let problems = manifest.verify(&out).unwrap();
    assert!(problems.iter().any(|p| p.contains(paths::SUMMARY_CSV)), "{problems:?}");

    let rerun = run_pipeline(&config, &out, &[Stage::Report], RunOptions::default()).unwrap();
    assert_eq!(rerun.files[paths::SUMMARY_CSV], manifest.files[paths::SUMMARY_CSV]);
    assert!(rerun.verify(&out).unwrap().is_empty());
}

#[test]
fn forcing_records_violations_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config.source.m = 4.5;
    let out = dir.path().join("out");
    assert!(matches!(
        run_pipeline(&config, &out, &[Stage::Synth], RunOptions::default()),
        Err(HarnessError::Validation(_))
    ));
    let manifest = run_pipeline(&config, &out, &[Stage::Synth], RunOptions { force: true }).unwrap();
    assert!(!manifest.violations.is_empty());
}
