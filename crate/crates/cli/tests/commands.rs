use std::path::{Path, PathBuf};
use std::process::Command;

use taskdisc_cli::commands::{
    cmd_build_tables, cmd_combine, cmd_evaluate, cmd_gen_world, cmd_make_splits, cmd_pretrain, cmd_retrieve,
    cmd_train_baseline, cmd_transfer, Baseline,
};
use taskdisc_cli::config::file_hash;
use taskdisc_cli::workspace::WorldKind;
use taskdisc_cli::{CliError, RunConfig, Workspace};

use taskdisc::model::Head;
use taskdisc::task_discovery::Mode;

fn small(out: &Path) -> RunConfig {
    RunConfig {
        out_dir: out.to_path_buf(),
        n_scenes: 120,
        pretrain_epochs: 1,
        samples_per_epoch: 300,
        vqa_max_epochs: 2,
        seeds: 1,
        ..RunConfig::default()
    }
}

fn toy_graph() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/toy_graph.jsonl")
}

#[test]
fn toy_fixture_tables() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(small(dir.path()), false).unwrap();
    let (groups, inverted) = cmd_build_tables(&ws, Some(&toy_graph())).unwrap();
    assert_eq!(groups, 4);
    assert_eq!(inverted, 2);
    let table: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("tables/word_groups.json")).unwrap()).unwrap();
    assert_eq!(table["groups"].as_object().unwrap().len(), 4);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("tables/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], ws.cfg.config_hash().as_str());
}

#[test]
fn splits_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(small(dir.path()), false).unwrap();
    cmd_gen_world(&ws, WorldKind::Main).unwrap();
    cmd_make_splits(&ws, WorldKind::Main).unwrap();
    let first = file_hash(&ws.split_path(WorldKind::Main)).unwrap();
    cmd_gen_world(&ws, WorldKind::Main).unwrap();
    cmd_make_splits(&ws, WorldKind::Main).unwrap();
    assert_eq!(file_hash(&ws.split_path(WorldKind::Main)).unwrap(), first);

    // A different split seed is a different data hash.
    let other = Workspace::new(
        RunConfig {
            split_seed: 9,
            ..small(dir.path())
        },
        false,
    )
    .unwrap();
    assert!(matches!(
        other.load_split(WorldKind::Main),
        Err(CliError::HashMismatch { .. })
    ));
}

#[test]
fn missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(small(dir.path()), false).unwrap();
    let err = cmd_make_splits(&ws, WorldKind::Main).unwrap_err();
    assert!(matches!(err, CliError::MissingInput { .. }), "{err}");
    assert_eq!(err.to_json()["module"], "cli");
    let err = cmd_transfer(&ws, Head::TaskConditional, Mode::Both).unwrap_err();
    assert!(matches!(err, CliError::MissingInput { .. }), "{err}");
}

#[test]
fn pipeline_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(small(dir.path()), false).unwrap();
    for kind in [WorldKind::Main, WorldKind::YesNo] {
        cmd_gen_world(&ws, kind).unwrap();
        cmd_make_splits(&ws, kind).unwrap();
    }
    let trace = cmd_pretrain(&ws, Head::TaskConditional, Mode::Both).unwrap();
    assert_eq!(trace.len(), 1);
    assert!(cmd_transfer(&ws, Head::TaskConditional, Mode::Both).unwrap());
    let r = cmd_evaluate(&ws, "proposed-both-s0", "test_oov").unwrap();
    assert!(!r.empty);
    assert!(dir.path().join("reports/proposed-both-s0-test_oov/report.csv").exists());

    let name = cmd_train_baseline(&ws, Baseline::Standard).unwrap();
    let r = cmd_evaluate(&ws, &name, "test_oov").unwrap();
    assert_eq!(r.aggregates.unwrap().overall, 0.0);

    let s = cmd_retrieve(&ws, "pretrain-both-s0", "proposed-both-s0", "train").unwrap();
    assert_eq!(s.purity.len(), 3);
    assert!(s.entries.values().all(|rows| rows.len() == ws.cfg.top_k));

    let d = cmd_combine(&ws, None, None).unwrap();
    let again = cmd_combine(&ws, None, Some("dual-both-s0")).unwrap();
    assert_eq!(d, again);

    // Artifacts from another data configuration are refused unless forced.
    let other = RunConfig {
        split_seed: 3,
        ..small(dir.path())
    };
    let strict = Workspace::new(other.clone(), false).unwrap();
    assert!(matches!(
        cmd_evaluate(&strict, "proposed-both-s0", "test_oov"),
        Err(CliError::HashMismatch { .. })
    ));
    let forced = Workspace::new(other, true).unwrap();
    assert!(cmd_evaluate(&forced, "proposed-both-s0", "test_oov").is_ok());

    let events = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    assert!(events
        .lines()
        .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    assert!(events.contains("\"event\":\"epoch\""));
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("meta/evaluate.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["split_seed"], 3);
    assert!(meta["inputs"].as_object().unwrap().len() == 2);
}

#[test]
fn binary_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_taskdisc");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"n_scenes": 10, "sead": 1}"#).unwrap();
    let out = Command::new(bin)
        .arg("--config")
        .arg(&cfg)
        .arg("gen-world")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "ConfigInvalid");
    assert_eq!(err["module"], "cli");

    let out = Command::new(bin)
        .args(["--out"])
        .arg(dir.path().join("run"))
        .args(["build-tables", "--graph"])
        .arg(toy_graph())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["word_groups"], 4);

    let out = Command::new(bin)
        .args(["--out"])
        .arg(dir.path().join("run"))
        .args(["--seed", "2", "evaluate", "nothing"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "MissingInput");
}

#[test]
fn flags_override_config_file() {
    // Precedence is resolved in the binary; the library sees the merged config.
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_taskdisc");
    let cfg = dir.path().join("cfg.json");
    let from_file = dir.path().join("from_file");
    let from_flag = dir.path().join("from_flag");
    std::fs::write(
        &cfg,
        serde_json::json!({"out_dir": from_file, "n_scenes": 50}).to_string(),
    )
    .unwrap();
    let out = Command::new(bin)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&from_flag)
        .arg("gen-world")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(from_flag.join("world/manifest.json").exists());
    assert!(!from_file.exists());
    let manifest: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["scenes"], 50);
}
