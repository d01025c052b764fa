//! Softmax-weighted combination of trained forecasters.
//!
//! The combiner owns only the mixing logits; base predictions enter as
//! constants, so base parameters can never receive gradient.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::nn::{softmax, AdamState, Bound, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

pub const ENSEMBLE_SIZE: usize = 4;

#[derive(Clone, Debug)]
pub struct EnsembleHead {
    pub members: usize,
    pub logits: ParamId,
}

impl EnsembleHead {
    /// Zero logits, i.e. uniform coefficients.
    pub fn new(store: &mut ParamStore, members: usize) -> Result<Self> {
        if members == 0 {
            return Err(contract("ensemble needs at least one member"));
        }
        let logits = store.add("ensemble.logits", Tensor::zeros(&[members]));
        Ok(Self { members, logits })
    }

    pub fn coefficients(&self, store: &ParamStore) -> Vec<f64> {
        softmax(store.get(self.logits).values())
    }

    /// `preds` is `[batch × members]`; returns `[batch × 1]`.
    pub fn combine(&self, tape: &mut Tape, p: &Bound, preds: Var) -> Result<Var> {
        let (_, m) = tape.dims(preds);
        if m != self.members {
            return Err(contract(format!(
                "ensemble_predict: expected {} base predictions, got {m}",
                self.members
            )));
        }
        let weights = tape.softmax(p.get(self.logits));
        tape.linear(preds, weights)
    }

    pub fn predict_row(&self, store: &ParamStore, preds: &[f64]) -> Result<f64> {
        if preds.len() != self.members {
            return Err(contract(format!(
                "ensemble_predict: expected {} base predictions, got {}",
                self.members,
                preds.len()
            )));
        }
        Ok(self
            .coefficients(store)
            .iter()
            .zip(preds)
            .map(|(c, p)| c * p)
            .sum())
    }
}

/// Cached base predictions (`[n × members]`) with their targets.
pub struct CachedPredictions<'a> {
    pub preds: &'a [f64],
    pub targets: &'a [f64],
}

impl CachedPredictions<'_> {
    fn len(&self) -> usize {
        self.targets.len()
    }
}

pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
}

/// Per-epoch `(train_mse, val_mse)`.
pub type FitHistory = Vec<(f64, f64)>;

/// Adam on the logits only; the best-validation logits are kept.
pub fn ensemble_fit(
    store: &mut ParamStore,
    head: &EnsembleHead,
    train: &CachedPredictions<'_>,
    val: &CachedPredictions<'_>,
    opts: &FitOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(FitHistory, usize, f64)> {
    let m = head.members;
    for (name, c) in [("train", train), ("val", val)] {
        if c.len() == 0 || c.preds.len() != c.len() * m {
            return Err(contract(format!("ensemble_fit: malformed {name} predictions")));
        }
    }
    let mut adam = AdamState::new(store, opts.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (evaluate(store, head, val)?, 0usize, store.snapshot());
    let mut history = Vec::with_capacity(opts.epochs);
    let mut stale = 0;
    for epoch in 1..=opts.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let preds: Vec<f64> = chunk
                .iter()
                .flat_map(|&i| train.preds[i * m..(i + 1) * m].iter().copied())
                .collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| train.targets[i]).collect();
            let mut tape = Tape::new();
            let p = store.bind(&mut tape);
            let x = tape.constant(&[chunk.len(), m], preds)?;
            let y = tape.constant(&[chunk.len(), 1], ys)?;
            let out = head.combine(&mut tape, &p, x)?;
            let loss = tape.mse(out, y)?;
            let l = tape.value(loss)[0];
            if !l.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: "ensemble loss is not finite".into(),
                });
            }
            total += l * chunk.len() as f64;
            tape.backward(loss)?;
            store.collect_grads(&tape, &p)?;
            adam.step(store)?;
        }
        let val_mse = evaluate(store, head, val)?;
        history.push((total / train.len() as f64, val_mse));
        if val_mse < best.0 {
            best = (val_mse, epoch, store.snapshot());
            stale = 0;
        } else {
            stale += 1;
            if stale >= opts.patience {
                break;
            }
        }
    }
    store.restore(&best.2)?;
    Ok((history, best.1, best.0))
}

fn evaluate(store: &ParamStore, head: &EnsembleHead, data: &CachedPredictions<'_>) -> Result<f64> {
    let m = head.members;
    let mut sse = 0.0;
    for (row, y) in data.preds.chunks(m).zip(data.targets) {
        let e = head.predict_row(store, row)? - y;
        sse += e * e;
    }
    Ok(sse / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_and_saturated_weights() {
        let mut store = ParamStore::new();
        let head = EnsembleHead::new(&mut store, 4).unwrap();
        assert_eq!(head.predict_row(&store, &[1., 2., 3., 4.]).unwrap(), 2.5);
        store.get_mut(head.logits).values_mut()[2] = 50.0;
        let y = head.predict_row(&store, &[1., 2., 3., 4.]).unwrap();
        assert!((y - 3.0).abs() < 1e-12);
        assert!(head.predict_row(&store, &[1., 2., 3.]).is_err());
    }

    #[test]
    fn fit_prefers_exact_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 64;
        let targets: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut preds = Vec::new();
        for (i, y) in targets.iter().enumerate() {
            let wobble = (i as f64 * 1.7).cos();
            preds.extend([y + 0.5 * wobble, *y, y - 0.4, y * 0.2 + wobble]);
        }
        let mut store = ParamStore::new();
        let head = EnsembleHead::new(&mut store, 4).unwrap();
        let data = CachedPredictions {
            preds: &preds,
            targets: &targets,
        };
        let opts = FitOptions {
            epochs: 6000,
            batch_size: 64,
            lr: 0.001,
            patience: 6000,
        };
        ensemble_fit(&mut store, &head, &data, &data, &opts, &mut rng).unwrap();
        let c = head.coefficients(&store);
        assert!(c[1] > 0.9, "{c:?}");
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
