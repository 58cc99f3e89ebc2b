mod common;

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use serde_json::Value;
use urbanmas::cli::{cmd_evaluate, cmd_factors, cmd_ingest, cmd_predict, resolve_config, run, Cli, Outcome};
use urbanmas::config::{BackendMode, RunConfig};
use urbanmas::domain::Variant;
use urbanmas::error::Error;

fn text(buf: &[u8]) -> String {
    String::from_utf8_lossy(buf).into_owned()
}

fn mock_config(out: &Path) -> RunConfig {
    RunConfig {
        backend: BackendMode::Mock,
        cassette: None,
        ..common::replay_config(out)
    }
}

#[test]
fn factors_prints_four_sets_and_reuses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        factor_dir: None,
        ..mock_config(dir.path())
    };
    let (env, _) = common::offline_env();
    let mut out = Vec::new();
    cmd_factors(&cfg, &env, false, &mut out).unwrap();
    let printed = text(&out);
    let rows: Vec<&str> = printed.lines().filter(|l| l.starts_with("  ")).collect();
    assert_eq!(rows.len(), 4, "{printed}");
    assert!(rows.iter().all(|r| r.matches(" | ").count() == 5), "{printed}");
    assert!(dir.path().join("factors/running_amount.json").is_file());

    // an empty cassette would fail on any backend call
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let replay = RunConfig {
        backend: BackendMode::Replay,
        cassette: Some(empty),
        ..cfg
    };
    let mut again = Vec::new();
    cmd_factors(&replay, &env, false, &mut again).unwrap();
    assert!(text(&again).contains("already present"));
    assert!(cmd_factors(&replay, &env, true, &mut Vec::new()).is_err());
}

#[test]
fn unknown_task_is_a_usage_error() {
    let cli = Cli::try_parse_from(["urbanmas", "--tasks", "safety", "factors"]).unwrap();
    assert!(matches!(resolve_config(&cli), Err(Error::Usage(_))));
}

#[test]
fn flags_overlay_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, "backend = \"replay\"\ncassette = \"c.jsonl\"\nworkers = 2\n").unwrap();
    let cli = Cli::try_parse_from([
        "urbanmas",
        "predict",
        "--config",
        path.to_str().unwrap(),
        "--backend",
        "mock",
        "--variant",
        "full",
        "--variant",
        "single_llm",
        "--tasks",
        "liveliness,boringness",
        "--workers",
        "3",
        "--out",
        "elsewhere",
    ])
    .unwrap();
    let cfg = resolve_config(&cli).unwrap();
    assert_eq!(cfg.backend, BackendMode::Mock);
    assert_eq!(cfg.variants, [Variant::Full, Variant::SingleLlm]);
    assert_eq!(cfg.tasks, ["liveliness", "boringness"]);
    assert_eq!(cfg.workers, 3);
    assert_eq!(cfg.cassette.as_deref(), Some(dir.path().join("c.jsonl").as_path()));
    assert_eq!(cfg.out, Path::new("elsewhere"));
}

#[test]
fn ingest_rejects_an_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let cfg = RunConfig {
        dataset: Some(empty),
        ..common::replay_config(dir.path())
    };
    let (env, _) = common::offline_env();
    assert!(matches!(cmd_ingest(&cfg, &env, &mut Vec::new()), Err(Error::EmptyInput(_))));
}

#[test]
fn ingest_rerun_reports_full_cache_hits_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::replay_config(dir.path());
    let (env, net) = common::offline_env();
    for _ in 0..2 {
        let mut out = Vec::new();
        assert_eq!(cmd_ingest(&cfg, &env, &mut out).unwrap(), Outcome::default());
        assert!(text(&out).contains("9 hits, 0 misses (100% hits)"), "{}", text(&out));
    }
    assert_eq!(net.attempts(), 0);
    let manifest: Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.ingest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stage"], "ingest");
    assert_eq!(manifest["backend"], "replay");
    assert_eq!(manifest["dataset_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["cassette_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn predict_replays_three_locations_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        dataset: Some(common::fixtures().join("enriched.jsonl")),
        variants: vec![Variant::Full, Variant::NoReliability],
        ..common::replay_config(dir.path())
    };
    let (env, net) = common::offline_env();
    let mut out = Vec::new();
    assert_eq!(cmd_predict(&cfg, &env, &mut out).unwrap(), Outcome::default());
    let printed = text(&out);
    assert!(printed.contains("running_amount/no_reliability: 3 predicted, 0 failed, 15 backend calls, 0 refiner calls"), "{printed}");
    let predictions = fs::read_to_string(dir.path().join("predictions.jsonl")).unwrap();
    assert_eq!(predictions.lines().count(), 6);
    for line in predictions.lines() {
        let p: Value = serde_json::from_str(line).unwrap();
        let v = p["value"].as_f64().unwrap();
        assert!((0.0..=10.0).contains(&v));
    }
    assert_eq!(fs::read_to_string(dir.path().join("similarity.jsonl")).unwrap().lines().count(), 24);
    assert!(dir.path().join("audit/running_amount/full/tokyo-shibakoen.json").is_file());
    assert!(dir.path().join("run-stats.json").is_file());
    assert_eq!(net.attempts(), 0);
}

#[test]
fn predict_without_factor_book_names_the_fix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        factor_dir: Some(dir.path().join("nowhere")),
        ..common::replay_config(dir.path())
    };
    let (env, _) = common::offline_env();
    let err = cmd_predict(&cfg, &env, &mut Vec::new()).unwrap_err();
    assert!(matches!(err, Error::MissingFactorCache { .. }));
    assert!(err.to_string().contains("factors"), "{err}");
}

fn evaluate_with(predictions: &str, truth: Option<&str>) -> (tempfile::TempDir, urbanmas::Result<Outcome>, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("predictions.jsonl"), predictions).unwrap();
    let mut cfg = common::replay_config(dir.path());
    if let Some(t) = truth {
        let path = dir.path().join("truth.csv");
        fs::write(&path, t).unwrap();
        cfg.truth = Some(path);
    }
    let mut out = Vec::new();
    let result = cmd_evaluate(&cfg, &mut out);
    (dir, result, out)
}

#[test]
fn evaluate_matches_hand_computed_metrics() {
    let predictions = fs::read_to_string(common::fixtures().join("predictions.jsonl")).unwrap();
    let (dir, result, out) = evaluate_with(&predictions, None);
    result.unwrap();
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    // truth rescaled per task to [0, 10]; values from exact rational arithmetic
    let expected = [
        ("running_amount", "full", 1.1839080459770115, 2.417558462148236, 1.5548499805924159),
        ("running_amount", "no_reliability", 2.4827586206896552, 7.71640903686088, 2.7778425147694894),
        ("liveliness", "full", 1.1129032258064515, 1.3178113076656262, 1.1479596280643436),
    ];
    assert_eq!(rows.len(), 3, "{csv}");
    for (task, variant, mae, mse, rmse) in expected {
        let row = rows.iter().find(|r| r[0] == task && r[1] == variant).unwrap();
        assert_eq!(row[2], "3");
        for (cell, want) in row[4..7].iter().zip([mae, mse, rmse]) {
            assert!((cell.parse::<f64>().unwrap() - want).abs() < 1e-6, "{task}/{variant}: {cell} vs {want}");
        }
    }
    let ablation = rows.iter().find(|r| r[1] == "no_reliability").unwrap();
    assert_eq!(ablation[7..], ["+109.71%", "+219.18%", "+78.66%"]);
    let table = text(&out);
    assert!(table.contains("2.48 (↑109.71%)"), "{table}");
    assert_eq!(fs::read_to_string(dir.path().join("report.txt")).unwrap(), table);
}

#[test]
fn perfect_predictions_score_zero() {
    let truth = "location_id,task_id,raw_value\na,liveliness,1\nb,liveliness,3\nc,liveliness,2\n";
    let predictions = [("a", 0.0), ("b", 10.0), ("c", 5.0)]
        .iter()
        .map(|(id, v)| format!("{{\"location_id\":\"{id}\",\"task_id\":\"liveliness\",\"variant\":\"full\",\"value\":{v},\"clamped\":false}}\n"))
        .collect::<String>();
    let (dir, result, _) = evaluate_with(&predictions, Some(truth));
    result.unwrap();
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.contains("liveliness,full,3,0,0.000000,0.000000,0.000000"), "{csv}");
}

#[test]
fn missing_truth_rows_name_the_locations() {
    let predictions = "{\"location_id\":\"atlantis\",\"task_id\":\"running_amount\",\"variant\":\"full\",\"value\":3.0,\"clamped\":false}\n";
    let (_dir, result, _) = evaluate_with(predictions, None);
    let err = result.unwrap_err();
    assert!(matches!(err, Error::Alignment { .. }));
    assert!(err.to_string().contains("atlantis"), "{err}");
}

#[test]
fn run_dispatches_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let (env, _) = common::offline_env();
    let out_dir = dir.path().to_str().unwrap();
    let f = common::fixtures();
    let args = |cmd: &str| {
        vec![
            "urbanmas".to_string(),
            cmd.into(),
            "--backend".into(),
            "mock".into(),
            "--offline".into(),
            "--out".into(),
            out_dir.into(),
            "--dataset".into(),
            f.join("enriched.jsonl").display().to_string(),
            "--truth".into(),
            f.join("truth.csv").display().to_string(),
            "--variant".into(),
            "single_llm".into(),
        ]
    };
    for cmd in ["predict", "evaluate"] {
        let cli = Cli::try_parse_from(args(cmd)).unwrap();
        assert_eq!(run(&cli, &env, &mut Vec::new()).unwrap(), Outcome::default(), "{cmd}");
    }
    assert!(dir.path().join("report.csv").is_file());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_urbanmas");
    let usage = Process::new(bin).args(["--offline", "--backend", "live", "predict"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2), "{}", text(&usage.stderr));
    let help = Process::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    for sub in ["factors", "ingest", "predict", "evaluate"] {
        assert!(text(&help.stdout).contains(sub));
    }
}
