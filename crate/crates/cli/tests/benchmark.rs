use std::path::{Path, PathBuf};
use std::process::Command;

use kanfc::data::{write_csv, Target};
use kanfc::synth::{synthetic_weather, Climate};
use kanfc::{Error, ModelKind};
use kanfc_bench::config::{DatasetEntry, Training};
use kanfc_bench::{run_benchmark, BenchmarkConfig};

const DAYS: usize = 240;

fn write_city(dir: &Path, city: &str) -> PathBuf {
    let start = kanfc::data::NaiveDate::from_ymd_opt(2012, 3, 1).unwrap();
    let series = synthetic_weather(city, start, DAYS, &Climate::default(), 3).unwrap();
    let path = dir.join(format!("{}.csv", city.to_lowercase()));
    write_csv(&series, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn tiny_config(dir: &Path, models: Vec<ModelKind>) -> BenchmarkConfig {
    let mut training = Training {
        epochs: 2,
        patience: 2,
        batch_size: 32,
        window: 7,
        ..Training::default()
    };
    training.hyper.hidden = 6;
    training.hyper.kan_hidden = vec![6];
    training.hyper.sub_width = Some(4);
    BenchmarkConfig {
        datasets: vec![DatasetEntry {
            city: "Abidjan".into(),
            path: write_city(dir, "Abidjan"),
        }],
        targets: vec![Target::T2M],
        models,
        training,
        overrides: Default::default(),
        seed: 11,
        out: dir.join("out"),
        workers: Some(2),
        missing: Default::default(),
        checkpoints: None,
    }
}

fn test_windows(window: usize) -> usize {
    let n = DAYS - window;
    let train = (0.72 * n as f64).floor() as usize;
    let val = (0.08 * n as f64).floor() as usize;
    n - train - val
}

#[test]
fn two_models_give_two_rows_of_five_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), vec![ModelKind::Lstm, ModelKind::Kan]);
    let summary = run_benchmark(&config).unwrap();
    assert_eq!(summary.failures(), 0);
    assert_eq!(summary.jobs.len(), 2);

    let table = std::fs::read_to_string(config.out.join("metrics_T2M_abidjan.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0].split(',').count(), 6);
    for row in &lines[1..] {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 6);
        for cell in &cells[1..] {
            cell.trim_end_matches('*').parse::<f64>().unwrap();
        }
    }
    assert!(config.out.join("metrics_T2M_abidjan_scaled.csv").exists());
    assert!(config.out.join("manifest.json").exists());

    for model in ["LSTM", "KAN"] {
        let stem = format!("abidjan_T2M_{model}");
        let series = std::fs::read_to_string(config.out.join("series").join(format!("{stem}.csv"))).unwrap();
        assert_eq!(series.lines().count(), test_windows(7) + 1);
        assert!(config.out.join("checkpoints").join(format!("{stem}.ckpt")).exists());
        assert!(config.out.join("history").join(format!("{stem}.csv")).exists());
    }
}

#[test]
fn rerun_with_same_seed_writes_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path(), vec![ModelKind::Gru, ModelKind::TkanGelu]);
    run_benchmark(&config).unwrap();
    let first = std::fs::read(config.out.join("metrics_T2M_abidjan.csv")).unwrap();
    config.out = dir.path().join("again");
    config.workers = Some(1);
    run_benchmark(&config).unwrap();
    let second = std::fs::read(config.out.join("metrics_T2M_abidjan.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn missing_ensemble_member_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), vec![ModelKind::Ensemble]);
    match run_benchmark(&config) {
        Err(Error::Config(msg)) => assert!(msg.contains("checkpoint"), "{msg}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("ensemble ran without its members"),
    }
    assert!(!config.out.join("checkpoints").exists());
}

#[test]
fn ensemble_reuses_member_checkpoints_from_an_earlier_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path(), ModelKind::ENSEMBLE_BASES.to_vec());
    run_benchmark(&config).unwrap();
    config.models = vec![ModelKind::Ensemble];
    let summary = run_benchmark(&config).unwrap();
    assert_eq!(summary.failures(), 0);
    assert!(config.out.join("series/abidjan_T2M_Ensemble.csv").exists());
}

fn kanfc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kanfc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn command_line_run_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    let out = kanfc(&["synth", "--out", root, "--days", "200", "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = dir.path().join("benchmark.json");
    assert!(dir.path().join("kigali.csv").exists());

    let results = dir.path().join("cli_out");
    let out = kanfc(&[
        "run",
        config.to_str().unwrap(),
        "--models",
        "KAN,GRU",
        "--targets",
        "PS",
        "--epochs",
        "1",
        "--out",
        results.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("4 jobs, 0 failed"), "{stdout}");
    let table = std::fs::read_to_string(results.join("metrics_PS_kigali.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(!results.join("metrics_T2M_kigali.csv").exists());
    let history = std::fs::read_to_string(results.join("history/kigali_PS_KAN.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);

    let ckpt = results.join("checkpoints/kigali_PS_GRU.ckpt");
    let out = kanfc(&[
        "evaluate",
        ckpt.to_str().unwrap(),
        "--data",
        dir.path().join("kigali.csv").to_str().unwrap(),
        "--city",
        "Kigali",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("GRU"));
}

#[test]
fn command_line_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = kanfc(&["run", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let config = tiny_config(dir.path(), vec![ModelKind::Kan]);
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();
    let out = kanfc(&["run", path.to_str().unwrap(), "--models", "Transformer"]);
    assert_eq!(out.status.code(), Some(2));
    let out = kanfc(&["run", path.to_str().unwrap(), "--epochs", "1", "--models", "Ensemble"]);
    assert_eq!(out.status.code(), Some(2));
}
