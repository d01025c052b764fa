//! Mini-batch MSE training with Adam, best-validation checkpointing and
//! early stopping, plus evaluation in physical units.

use std::io::Write;
use std::ops::Range;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{PreparedData, ScalingPolicy, Split, Target, WindowedDataset};
use crate::ensemble::{ensemble_fit, CachedPredictions, FitOptions};
use crate::error::{contract, Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::model::{Hyper, Model, ModelKind, ModelSpec};
use crate::nn::AdamState;
use crate::tensor::Tape;

/// Samples per inference chunk. Fixed so validation scores are reproducible.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub hyper: Hyper,
    pub target: Target,
    pub scaling: ScalingPolicy,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::window")]
    pub window: usize,
    #[serde(default = "defaults::split")]
    pub split: [f64; 3],
}

mod defaults {
    pub fn epochs() -> usize {
        100
    }
    pub fn batch_size() -> usize {
        64
    }
    pub fn lr() -> f64 {
        0.001
    }
    pub fn patience() -> usize {
        15
    }
    pub fn window() -> usize {
        14
    }
    pub fn split() -> [f64; 3] {
        [0.72, 0.08, 0.20]
    }
}

impl TrainConfig {
    pub fn new(model: ModelKind, target: Target) -> Self {
        Self {
            model,
            hyper: Hyper::default(),
            target,
            scaling: model.scaling(),
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            lr: defaults::lr(),
            patience: defaults::patience(),
            seed: 0,
            window: defaults::window(),
            split: defaults::split(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.patience > self.epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        if self.lr.is_nan() || self.lr < 0.0 {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        Ok(())
    }

    pub fn spec(&self, features: usize) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            hyper: self.hyper.clone(),
            window: self.window,
            features,
            seed: self.seed,
            bases: vec![],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// Sorted sample indices that contributed to any gradient step.
    pub visited: Vec<usize>,
}

fn check_data(config: &TrainConfig, data: &PreparedData) -> Result<()> {
    config.validate()?;
    if data.scaler.policy != config.scaling {
        return Err(contract(format!(
            "data scaled with {:?}, config expects {:?}",
            data.scaler.policy, config.scaling
        )));
    }
    if data.raw.window != config.window || data.raw.target != config.target {
        return Err(contract("dataset window/target differ from the training config"));
    }
    Ok(())
}

fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut shuffle = ChaCha8Rng::seed_from_u64(seed);
    shuffle.set_stream(1);
    let mut dropout = ChaCha8Rng::seed_from_u64(seed);
    dropout.set_stream(2);
    (shuffle, dropout)
}

/// Trains a fresh model built from `config`.
pub fn train_model(config: &TrainConfig, data: &PreparedData) -> Result<TrainOutcome> {
    if config.model == ModelKind::Ensemble {
        return Err(contract("ensembles are trained with train_ensemble"));
    }
    check_data(config, data)?;
    let model = Model::build(&config.spec(data.scaled.features()))?;
    train_existing(config, data, model)
}

/// Trains `model` in place of a freshly built one (same loop as [`train_model`]).
pub fn train_existing(config: &TrainConfig, data: &PreparedData, mut model: Model) -> Result<TrainOutcome> {
    check_data(config, data)?;
    let ds = &data.scaled;
    let train = data.splits.train.clone();
    let val = data.splits.val.clone();
    let (mut shuffle_rng, mut dropout_rng) = streams(config.seed);
    let mut adam = AdamState::new(model.store(), config.lr);
    let mut visited = vec![false; ds.len()];

    let mut best_val = scaled_mse(&model, ds, val.clone())?;
    let mut best_epoch = 0;
    let mut best_params = model.store().snapshot();
    let mut history = Vec::with_capacity(config.epochs);
    let mut stale = 0;
    let mut order: Vec<usize> = train.clone().collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            for &j in chunk {
                debug_assert!(train.contains(&j));
                visited[j] = true;
            }
            let (batch, targets) = ds.batch(chunk)?;
            let mut tape = Tape::new();
            let p = model.store().bind(&mut tape);
            let pred = model.forward(&mut tape, &p, &batch, Some(&mut dropout_rng))?;
            let y = tape.constant(&[chunk.len(), 1], targets)?;
            let loss = tape.mse(pred, y)?;
            let l = tape.value(loss)[0];
            if !l.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: format!("{} loss is {l}", model.kind()),
                });
            }
            total += l * chunk.len() as f64;
            tape.backward(loss)?;
            model.store_mut().collect_grads(&tape, &p)?;
            adam.step(model.store_mut())?;
        }
        let val_mse = scaled_mse(&model, ds, val.clone())?;
        if !val_mse.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("{} validation loss is {val_mse}", model.kind()),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_mse: total / train.len() as f64,
            val_mse,
        });
        log::debug!("{} epoch {epoch}: train {:.6} val {val_mse:.6}", model.kind(), total / train.len() as f64);
        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best_params = model.store().snapshot();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    model.store_mut().restore(&best_params)?;
    let checkpoint = Checkpoint::capture(&model, config, best_val, best_epoch);
    Ok(TrainOutcome {
        model,
        checkpoint,
        history,
        visited: indices(&visited),
    })
}

/// Fits the mixing logits over four trained, frozen members.
pub fn train_ensemble(config: &TrainConfig, data: &PreparedData, bases: Vec<Model>) -> Result<TrainOutcome> {
    if config.model != ModelKind::Ensemble {
        return Err(contract("train_ensemble needs an Ensemble config"));
    }
    check_data(config, data)?;
    let mut model = Model::ensemble(bases, config.seed)?;
    let ds = &data.scaled;
    let train = data.splits.train.clone();
    let val = data.splits.val.clone();
    let (train_preds, train_y) = member_cache(&model, ds, train.clone())?;
    let (val_preds, val_y) = member_cache(&model, ds, val.clone())?;
    let head = model.ensemble_head().expect("ensemble").clone();
    let (mut shuffle_rng, _) = streams(config.seed);
    let opts = FitOptions {
        epochs: config.epochs,
        batch_size: config.batch_size,
        lr: config.lr,
        patience: config.patience,
    };
    let (fit_history, best_epoch, _) = ensemble_fit(
        model.store_mut(),
        &head,
        &CachedPredictions {
            preds: &train_preds,
            targets: &train_y,
        },
        &CachedPredictions {
            preds: &val_preds,
            targets: &val_y,
        },
        &opts,
        &mut shuffle_rng,
    )?;
    let history = fit_history
        .iter()
        .enumerate()
        .map(|(i, (t, v))| EpochRecord {
            epoch: i + 1,
            train_mse: *t,
            val_mse: *v,
        })
        .collect();
    // Score through the same path as evaluation so the stored value reproduces.
    let best_val = scaled_mse(&model, ds, val)?;
    let checkpoint = Checkpoint::capture(&model, config, best_val, best_epoch);
    let visited = if config.epochs > 0 { train.collect() } else { vec![] };
    Ok(TrainOutcome {
        model,
        checkpoint,
        history,
        visited,
    })
}

fn member_cache(model: &Model, ds: &WindowedDataset, range: Range<usize>) -> Result<(Vec<f64>, Vec<f64>)> {
    let samples: Vec<usize> = range.collect();
    let mut preds = Vec::with_capacity(samples.len() * model.bases().len());
    let mut targets = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let (batch, ys) = ds.batch(chunk)?;
        preds.extend(Model::member_predictions(model.bases(), &batch)?);
        targets.extend(ys);
    }
    Ok((preds, targets))
}

fn indices(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.then_some(i))
        .collect()
}

/// Inference forecasts (scaled space) for every sample in `range`.
pub fn predict_range(model: &Model, ds: &WindowedDataset, range: Range<usize>) -> Result<Vec<f64>> {
    let samples: Vec<usize> = range.collect();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let (batch, _) = ds.batch(chunk)?;
        out.extend(model.predict(&batch)?);
    }
    Ok(out)
}

fn scaled_mse(model: &Model, ds: &WindowedDataset, range: Range<usize>) -> Result<f64> {
    let preds = predict_range(model, ds, range.clone())?;
    let targets: Vec<f64> = range.map(|j| ds.target_value(j)).collect();
    Ok(compute_metrics(&targets, &preds)?.mse)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRow {
    pub date: NaiveDate,
    pub actual: f64,
    pub predicted: f64,
}

pub struct Evaluation {
    pub report: MetricsReport,
    pub series: Vec<SeriesRow>,
}

/// Metrics in physical units (and scaled space) plus the per-day series.
pub fn evaluate(model: &Model, data: &PreparedData, split: Split) -> Result<Evaluation> {
    let expected = model.kind().scaling();
    if data.scaler.policy != expected {
        return Err(contract(format!(
            "{} expects {expected:?} scaling, data uses {:?}",
            model.kind(),
            data.scaler.policy
        )));
    }
    if data.scaler.features() != data.scaled.features() {
        return Err(contract("scaler feature count does not match the dataset"));
    }
    let range = data.splits.range(split);
    let col = data.raw.target.column();
    let preds = predict_range(model, &data.scaled, range.clone())?;
    let scaled_targets: Vec<f64> = range.clone().map(|j| data.scaled.target_value(j)).collect();
    let actual: Vec<f64> = range.clone().map(|j| data.raw.target_value(j)).collect();
    let predicted: Vec<f64> = preds
        .iter()
        .map(|p| data.scaler.inverse_value(col, *p))
        .collect();
    let report = MetricsReport {
        model: model.kind().name().to_string(),
        city: data.raw.series.city.clone(),
        variable: data.raw.target.name().to_string(),
        metrics: compute_metrics(&actual, &predicted)?,
        scaled: compute_metrics(&scaled_targets, &preds)?,
    };
    let series = range
        .zip(actual.iter().zip(&predicted))
        .map(|(j, (a, p))| SeriesRow {
            date: data.raw.target_date(j),
            actual: *a,
            predicted: *p,
        })
        .collect();
    Ok(Evaluation { report, series })
}

/// [`evaluate`] on a checkpoint, checking its config against the data.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, data: &PreparedData, split: Split) -> Result<Evaluation> {
    if ckpt.config.scaling != data.scaler.policy {
        return Err(contract(format!(
            "checkpoint trained with {:?} scaling, data uses {:?}",
            ckpt.config.scaling, data.scaler.policy
        )));
    }
    if ckpt.spec.features != data.scaled.features() || ckpt.spec.window != data.scaled.window {
        return Err(contract("checkpoint schema does not match the dataset"));
    }
    evaluate(&ckpt.to_model()?, data, split)
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "train_mse", "val_mse"])?;
    for r in history {
        out.write_record([
            r.epoch.to_string(),
            format!("{:.10}", r.train_mse),
            format!("{:.10}", r.val_mse),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_series_csv<W: Write>(series: &[SeriesRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "actual", "predicted"])?;
    for r in series {
        out.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            format!("{}", r.actual),
            format!("{}", r.predicted),
        ])?;
    }
    out.flush()?;
    Ok(())
}
