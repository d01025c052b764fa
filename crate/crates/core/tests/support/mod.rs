#![allow(dead_code)]

pub mod cases;

use kanfc::data::WindowBatch;
use kanfc::nn::{Bound, ParamStore};
use kanfc::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_batch(rng: &mut ChaCha8Rng, batch: usize, window: usize, features: usize) -> WindowBatch {
    let data = uniform(rng, batch * window * features, 0.05, 0.95);
    WindowBatch::new(batch, window, features, data).unwrap()
}

/// Scalar probe `sum(out ⊙ r)` with fixed random `r`, so every output
/// element gets a distinct upstream gradient.
pub fn probe(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let shape = tape.shape(out).to_vec();
    let n = tape.value(out).len();
    let r = uniform(&mut rng(seed), n, -1.0, 1.0);
    let r = tape.constant(&shape, r).unwrap();
    let prod = tape.mul(out, r).unwrap();
    tape.sum(prod)
}

#[derive(Debug)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: String,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares reverse-mode gradients of `f` against central differences for
/// every trainable parameter element and every element of `inputs`.
pub fn check_gradients<F>(store: &mut ParamStore, inputs: &mut [Tensor], f: F) -> GradReport
where
    F: Fn(&mut Tape, &Bound, &[Var]) -> Var,
{
    let eval = |store: &ParamStore, inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let xs: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
        let loss = f(&mut tape, &p, &xs);
        tape.value(loss)[0]
    };

    for t in inputs.iter_mut() {
        t.set_requires_grad(true);
    }
    store.zero_grad();
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let xs: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = f(&mut tape, &p, &xs);
    tape.backward(loss).unwrap();
    store.collect_grads(&tape, &p).unwrap();
    let input_grads: Vec<Vec<f64>> = xs
        .iter()
        .zip(inputs.iter())
        .map(|(v, t)| {
            tape.grad(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let mut report = GradReport {
        checked: 0,
        max_rel: 0.0,
        worst: String::new(),
    };
    let mut record = |name: String, a: f64, n: f64| {
        let e = rel_err(a, n);
        report.checked += 1;
        if e > report.max_rel {
            report.max_rel = e;
            report.worst = format!("{name}: analytic {a:e}, numeric {n:e}");
        }
    };

    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.get(id).requires_grad() {
            continue;
        }
        let analytic = store.get(id).grad().expect("trainable grad").to_vec();
        for (j, a) in analytic.iter().enumerate() {
            let orig = store.get(id).values()[j];
            store.get_mut(id).values_mut()[j] = orig + FD_STEP;
            let up = eval(store, inputs);
            store.get_mut(id).values_mut()[j] = orig - FD_STEP;
            let down = eval(store, inputs);
            store.get_mut(id).values_mut()[j] = orig;
            record(format!("{}[{j}]", store.name(id)), *a, (up - down) / (2.0 * FD_STEP));
        }
    }
    #[allow(clippy::needless_range_loop)]
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].values()[j];
            inputs[i].values_mut()[j] = orig + FD_STEP;
            let up = eval(store, inputs);
            inputs[i].values_mut()[j] = orig - FD_STEP;
            let down = eval(store, inputs);
            inputs[i].values_mut()[j] = orig;
            record(format!("input{i}[{j}]"), input_grads[i][j], (up - down) / (2.0 * FD_STEP));
        }
    }
    report
}

use chrono::NaiveDate;
use kanfc::data::{PreparedData, ScalingPolicy, Target, WeatherSeries};

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 1).unwrap()
}

/// Series whose day `d` row comes from `row(d, rng)`.
pub fn series_from<F>(days: usize, seed: u64, mut row: F) -> WeatherSeries
where
    F: FnMut(usize, &mut ChaCha8Rng, &[f64]) -> [f64; 10],
{
    let mut g = rng(seed);
    let mut values: Vec<f64> = Vec::with_capacity(days * 10);
    for d in 0..days {
        let r = row(d, &mut g, &values);
        values.extend(r);
    }
    let dates = (0..days as u64).map(|d| start_date() + chrono::Days::new(d)).collect();
    WeatherSeries::new("synthetic", dates, values).unwrap()
}

/// Smooth periodic features with distinct phases; T2M is the target.
pub fn sinusoid_series(days: usize) -> WeatherSeries {
    series_from(days, 0, |d, _, _| {
        let t = d as f64;
        std::array::from_fn(|f| (2.0 * std::f64::consts::PI * t / 16.0 + 0.6 * f as f64).sin() * (1.0 + 0.1 * f as f64) + f as f64)
    })
}

/// Series giving exactly `train` training windows under the 72/8/20 split.
pub fn days_for_train_samples(train: usize, window: usize) -> usize {
    let mut n = train;
    while (n as f64 * 0.72 + 1e-9).floor() as usize != train {
        n += 1;
    }
    n + window
}

pub fn prepare(series: WeatherSeries, window: usize, target: Target, policy: ScalingPolicy) -> PreparedData {
    PreparedData::new(series, window, target, [0.72, 0.08, 0.20], policy).unwrap()
}

use kanfc::data::{make_windows, MinMaxScaler, WindowedDataset};
use kanfc::nn::AdamState;
use kanfc::{Hyper, Model, ModelKind, ModelSpec};

pub const OVERFIT_SAMPLES: usize = 64;
pub const OVERFIT_WINDOW: usize = 8;

/// 64 windows over a smooth multi-feature sinusoid, scaled per `kind`.
pub fn overfit_dataset(kind: ModelKind) -> WindowedDataset {
    let series = sinusoid_series(OVERFIT_SAMPLES + OVERFIT_WINDOW);
    let raw = make_windows(series, OVERFIT_WINDOW, 1, Target::T2M).unwrap();
    let scaler = MinMaxScaler::fit(&raw.series, 0..raw.series.len(), kind.scaling()).unwrap();
    raw.scaled(&scaler).unwrap()
}

pub struct Overfit {
    pub model: Model,
    pub mse: f64,
    pub steps: usize,
}

/// Full-batch Adam on all 64 samples until the (inference-mode) train MSE
/// drops below `goal` or `max_steps` optimizer steps have run.
pub fn overfit(model: Model, ds: &WindowedDataset, lr: f64, goal: f64, max_steps: usize) -> Overfit {
    let mut model = model;
    let samples: Vec<usize> = (0..ds.len()).collect();
    let (batch, targets) = ds.batch(&samples).unwrap();
    let mut adam = AdamState::new(model.store(), lr);
    let mut train_rng = rng(99);
    let train_mse = |m: &Model| {
        let p = m.predict(&batch).unwrap();
        kanfc::metrics::compute_metrics(&targets, &p).unwrap().mse
    };
    let mut mse = train_mse(&model);
    let mut steps = 0;
    while mse >= goal && steps < max_steps {
        let mut tape = Tape::new();
        let p = model.store().bind(&mut tape);
        let pred = model.forward(&mut tape, &p, &batch, Some(&mut train_rng)).unwrap();
        let y = tape.constant(&[samples.len(), 1], targets.clone()).unwrap();
        let loss = tape.mse(pred, y).unwrap();
        tape.backward(loss).unwrap();
        model.store_mut().collect_grads(&tape, &p).unwrap();
        adam.step(model.store_mut()).unwrap();
        steps += 1;
        if steps % 10 == 0 || steps == max_steps {
            mse = train_mse(&model);
        }
    }
    Overfit { model, mse, steps }
}

pub fn overfit_spec(kind: ModelKind, seed: u64) -> ModelSpec {
    ModelSpec {
        kind,
        hyper: Hyper::default(),
        window: OVERFIT_WINDOW,
        features: 10,
        seed,
        bases: vec![],
    }
}

use kanfc::nn::Activation;
use kanfc::spline::{KanNetwork, SplineGrid};

/// Fits `y = sin(2πx)` with a KAN of the given widths; returns test R².
pub fn kan_sine_r2(widths: &[usize], lr: f64, steps: usize, seed: u64) -> f64 {
    let mut g = rng(seed);
    let target = |x: f64| (2.0 * std::f64::consts::PI * x).sin();
    let train_x = uniform(&mut g, 200, 0.0, 1.0);
    let test_x = uniform(&mut g, 50, 0.0, 1.0);
    let train_y: Vec<f64> = train_x.iter().map(|x| target(*x)).collect();
    let test_y: Vec<f64> = test_x.iter().map(|x| target(*x)).collect();

    let mut store = ParamStore::new();
    let net = KanNetwork::new(&mut store, "kan", widths, &SplineGrid::default(), Activation::Silu, &mut g).unwrap();
    let mut adam = AdamState::new(&store, lr);
    for _ in 0..steps {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.constant(&[200, 1], train_x.clone()).unwrap();
        let y = tape.constant(&[200, 1], train_y.clone()).unwrap();
        let pred = net.forward(&mut tape, &p, x).unwrap();
        let loss = tape.mse(pred, y).unwrap();
        tape.backward(loss).unwrap();
        store.collect_grads(&tape, &p).unwrap();
        adam.step(&mut store).unwrap();
    }
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let x = tape.constant(&[50, 1], test_x).unwrap();
    let pred = net.forward(&mut tape, &p, x).unwrap();
    kanfc::metrics::compute_metrics(&test_y, tape.value(pred)).unwrap().r2
}
