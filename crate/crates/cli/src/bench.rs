//! Runs every (city, target, model) job and writes the report files.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use kanfc::checkpoint::Checkpoint;
use kanfc::data::{ingest_csv, IngestOptions, PreparedData, ScalingPolicy, Split, Target, WeatherSeries};
use kanfc::metrics::MetricsReport;
use kanfc::train::{
    evaluate, train_ensemble, train_model, write_history_csv, write_series_csv, TrainConfig,
    TrainOutcome,
};
use kanfc::{Error, Model, ModelKind, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{file_stem, BenchmarkConfig};
use crate::report::{table_csv, table_text, Units};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JobKey {
    pub city: String,
    pub target: Target,
    pub model: ModelKind,
}

impl JobKey {
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", file_stem(&self.city), self.target, self.model)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JobRecord {
    pub city: String,
    pub target: Target,
    pub model: ModelKind,
    pub seed: u64,
    pub status: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub wall_seconds: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    seed: u64,
    workers: usize,
    config: &'a BenchmarkConfig,
    jobs: &'a [JobRecord],
    wall_seconds: f64,
}

pub struct RunSummary {
    pub out: PathBuf,
    pub reports: Vec<MetricsReport>,
    pub jobs: Vec<JobRecord>,
    pub tables: Vec<PathBuf>,
}

impl RunSummary {
    pub fn failures(&self) -> usize {
        self.jobs.iter().filter(|j| j.status != "ok").count()
    }
}

struct JobResult {
    record: JobRecord,
    report: Option<MetricsReport>,
    model: Option<Model>,
}

type DataCache = HashMap<(String, Target, ScalingPolicy), Arc<PreparedData>>;

fn base_checkpoint(config: &BenchmarkConfig, city: &str, target: Target, kind: ModelKind) -> PathBuf {
    let key = JobKey {
        city: city.to_string(),
        target,
        model: kind,
    };
    config.checkpoint_dir().join(format!("{}.ckpt", key.stem()))
}

/// Ensemble members that are not trained in this run must already exist as
/// checkpoints; this is checked before any training starts.
fn check_ensemble_inputs(config: &BenchmarkConfig) -> Result<()> {
    if !config.models.contains(&ModelKind::Ensemble) {
        return Ok(());
    }
    let mut missing = Vec::new();
    for kind in ModelKind::ENSEMBLE_BASES {
        if config.models.contains(&kind) {
            continue;
        }
        for d in &config.datasets {
            for &t in &config.targets {
                let path = base_checkpoint(config, &d.city, t, kind);
                if !path.is_file() {
                    missing.push(path.display().to_string());
                }
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "Ensemble needs its base models in the run or as checkpoints; missing: {}",
            missing.join(", ")
        )))
    }
}

fn load_series(config: &BenchmarkConfig) -> Result<Vec<WeatherSeries>> {
    let opts = IngestOptions {
        missing: config.missing,
        ..IngestOptions::default()
    };
    config
        .datasets
        .iter()
        .map(|d| {
            ingest_csv(&d.path, &d.city, &opts).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("cannot read {}: {io}", d.path.display())),
                other => other,
            })
        })
        .collect()
}

fn prepare_all(config: &BenchmarkConfig, series: &[WeatherSeries]) -> Result<DataCache> {
    let mut cache = DataCache::new();
    for s in series {
        for &target in &config.targets {
            for &kind in &config.models {
                let key = (s.city.clone(), target, kind.scaling());
                if cache.contains_key(&key) {
                    continue;
                }
                let data = PreparedData::new(
                    s.clone(),
                    config.training.window,
                    target,
                    config.training.split,
                    kind.scaling(),
                )?;
                cache.insert(key, Arc::new(data));
            }
        }
    }
    Ok(cache)
}

/// Training must only ever touch training samples.
fn assert_no_leakage(key: &JobKey, outcome: &TrainOutcome, data: &PreparedData) -> Result<()> {
    let test = data.splits.range(Split::Test);
    let val = data.splits.range(Split::Val);
    if let Some(j) = outcome
        .visited
        .iter()
        .find(|j| test.contains(j) || val.contains(j) || !data.splits.train.contains(j))
    {
        return Err(Error::Contract(format!(
            "{}: training visited sample {j} outside the training split",
            key.stem()
        )));
    }
    Ok(())
}

fn write_outputs(out: &Path, key: &JobKey, outcome: &TrainOutcome, data: &PreparedData) -> Result<MetricsReport> {
    let stem = key.stem();
    let eval = evaluate(&outcome.model, data, Split::Test)?;
    write_series_csv(&eval.series, fs::File::create(out.join("series").join(format!("{stem}.csv")))?)?;
    write_history_csv(&outcome.history, fs::File::create(out.join("history").join(format!("{stem}.csv")))?)?;
    outcome
        .checkpoint
        .save(out.join("checkpoints").join(format!("{stem}.ckpt")))?;
    Ok(eval.report)
}

fn finish(key: &JobKey, seed: u64, start: Instant, result: Result<(TrainOutcome, MetricsReport)>) -> JobResult {
    let wall_seconds = start.elapsed().as_secs_f64();
    let mut record = JobRecord {
        city: key.city.clone(),
        target: key.target,
        model: key.model,
        seed,
        status: "ok".into(),
        epochs_run: 0,
        best_epoch: 0,
        best_val_mse: f64::NAN,
        wall_seconds,
    };
    match result {
        Ok((outcome, report)) => {
            record.epochs_run = outcome.history.len();
            record.best_epoch = outcome.checkpoint.epoch;
            record.best_val_mse = outcome.checkpoint.best_val_mse;
            log::info!(
                "{}: test R2 {:.4}, {} epochs, {wall_seconds:.1}s",
                key.stem(),
                report.metrics.r2,
                record.epochs_run
            );
            JobResult {
                record,
                report: Some(report),
                model: Some(outcome.model),
            }
        }
        Err(e) => {
            log::error!("{}: {e}", key.stem());
            record.status = format!("failed: {e}");
            JobResult {
                record,
                report: None,
                model: None,
            }
        }
    }
}

fn run_job(config: &BenchmarkConfig, key: &JobKey, data: &PreparedData) -> JobResult {
    let start = Instant::now();
    let seed = config.job_seed(&key.city, key.target, key.model);
    let train: TrainConfig = config.train_config(key.model, key.target, seed);
    let result = train_model(&train, data).and_then(|outcome| {
        assert_no_leakage(key, &outcome, data)?;
        let report = write_outputs(&config.out, key, &outcome, data)?;
        Ok((outcome, report))
    });
    finish(key, seed, start, result)
}

fn run_ensemble(
    config: &BenchmarkConfig,
    key: &JobKey,
    data: &PreparedData,
    trained: &HashMap<JobKey, Model>,
) -> JobResult {
    let start = Instant::now();
    let seed = config.job_seed(&key.city, key.target, key.model);
    let train = config.train_config(key.model, key.target, seed);
    let bases = ModelKind::ENSEMBLE_BASES
        .iter()
        .map(|&kind| {
            let base_key = JobKey {
                model: kind,
                ..key.clone()
            };
            if config.models.contains(&kind) {
                trained
                    .get(&base_key)
                    .map(clone_model)
                    .unwrap_or_else(|| Err(Error::Config(format!("base model {} failed", base_key.stem()))))
            } else {
                Checkpoint::load(base_checkpoint(config, &key.city, key.target, kind))?.to_model()
            }
        })
        .collect::<Result<Vec<_>>>();
    let result = bases
        .and_then(|bases| train_ensemble(&train, data, bases))
        .and_then(|outcome| {
            assert_no_leakage(key, &outcome, data)?;
            let report = write_outputs(&config.out, key, &outcome, data)?;
            Ok((outcome, report))
        });
    finish(key, seed, start, result)
}

/// Rebuilds a model from its own tensors (models are not `Clone`).
fn clone_model(m: &Model) -> Result<Model> {
    let mut copy = Model::build(m.spec())?;
    for (name, t) in m.named_tensors() {
        copy.set_tensor(&name, t.values())?;
    }
    Ok(copy)
}

/// Trains, evaluates and reports every configured job.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<RunSummary> {
    let start = Instant::now();
    config.validate()?;
    check_ensemble_inputs(config)?;
    let series = load_series(config)?;
    let cache = prepare_all(config, &series)?;
    for sub in ["series", "history", "checkpoints"] {
        fs::create_dir_all(config.out.join(sub))?;
    }

    let mut keys = Vec::new();
    for d in &config.datasets {
        for &target in &config.targets {
            for &model in &config.models {
                keys.push(JobKey {
                    city: d.city.clone(),
                    target,
                    model,
                });
            }
        }
    }
    let data_for = |k: &JobKey| cache[&(k.city.clone(), k.target, k.model.scaling())].clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let (ensembles, singles): (Vec<&JobKey>, Vec<&JobKey>) =
        keys.iter().partition(|k| k.model == ModelKind::Ensemble);
    let single_results: Vec<JobResult> = pool.install(|| {
        singles
            .par_iter()
            .map(|k| run_job(config, k, &data_for(k)))
            .collect()
    });
    let mut results: HashMap<JobKey, JobResult> = singles
        .iter()
        .map(|k| (*k).clone())
        .zip(single_results)
        .collect();
    let trained: HashMap<JobKey, Model> = results
        .iter_mut()
        .filter_map(|(k, r)| r.model.take().map(|m| (k.clone(), m)))
        .collect();
    let ensemble_results: Vec<JobResult> = pool.install(|| {
        ensembles
            .par_iter()
            .map(|k| run_ensemble(config, k, &data_for(k), &trained))
            .collect()
    });
    results.extend(ensembles.iter().map(|k| (*k).clone()).zip(ensemble_results));

    let mut jobs = Vec::with_capacity(keys.len());
    let mut reports = Vec::new();
    for k in &keys {
        let r = results.remove(k).expect("every job ran");
        jobs.push(r.record);
        reports.extend(r.report);
    }
    let tables = write_tables(config, &reports)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        workers: config.workers(),
        config,
        jobs: &jobs,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    fs::write(
        config.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(RunSummary {
        out: config.out.clone(),
        reports,
        jobs,
        tables,
    })
}

fn write_tables(config: &BenchmarkConfig, reports: &[MetricsReport]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &target in &config.targets {
        for d in &config.datasets {
            let rows: Vec<MetricsReport> = reports
                .iter()
                .filter(|r| r.city == d.city && r.variable == target.name())
                .cloned()
                .collect();
            if rows.is_empty() {
                continue;
            }
            let stem = format!("metrics_{target}_{}", file_stem(&d.city));
            let title = format!("{target} {}", d.city);
            for (units, suffix) in [(Units::Physical, ""), (Units::Scaled, "_scaled")] {
                let csv = config.out.join(format!("{stem}{suffix}.csv"));
                fs::write(&csv, table_csv(&rows, units))?;
                let txt = config.out.join(format!("{stem}{suffix}.txt"));
                fs::write(&txt, table_text(&title, &rows, units))?;
                written.push(csv);
                written.push(txt);
            }
        }
    }
    Ok(written)
}
