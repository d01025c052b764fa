//! The ten forecaster variants behind one interface.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ScalingPolicy, WindowBatch};
use crate::ensemble::{EnsembleHead, ENSEMBLE_SIZE};
use crate::error::{contract, Error, Result};
use crate::nn::{Activation, Bound, ParamStore};
use crate::recurrent::{CellKind, SequenceModel};
use crate::spline::{KanNetwork, SplineGrid};
use crate::tensor::{Tape, Var};
use crate::tkan::TkanModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "GRU")]
    Gru,
    #[serde(rename = "BiLSTM")]
    BiLstm,
    #[serde(rename = "BiGRU")]
    BiGru,
    #[serde(rename = "Ensemble")]
    Ensemble,
    #[serde(rename = "KAN")]
    Kan,
    #[serde(rename = "TKAN")]
    Tkan,
    #[serde(rename = "TKAN5")]
    Tkan5,
    #[serde(rename = "TKAN-GELU")]
    TkanGelu,
    #[serde(rename = "TKAN-MISH")]
    TkanMish,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Lstm,
        ModelKind::Gru,
        ModelKind::BiLstm,
        ModelKind::BiGru,
        ModelKind::Ensemble,
        ModelKind::Kan,
        ModelKind::Tkan,
        ModelKind::Tkan5,
        ModelKind::TkanGelu,
        ModelKind::TkanMish,
    ];

    /// Members of the ensemble, in coefficient order.
    pub const ENSEMBLE_BASES: [ModelKind; ENSEMBLE_SIZE] = [
        ModelKind::Lstm,
        ModelKind::Gru,
        ModelKind::BiLstm,
        ModelKind::BiGru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "LSTM",
            ModelKind::Gru => "GRU",
            ModelKind::BiLstm => "BiLSTM",
            ModelKind::BiGru => "BiGRU",
            ModelKind::Ensemble => "Ensemble",
            ModelKind::Kan => "KAN",
            ModelKind::Tkan => "TKAN",
            ModelKind::Tkan5 => "TKAN5",
            ModelKind::TkanGelu => "TKAN-GELU",
            ModelKind::TkanMish => "TKAN-MISH",
        }
    }

    pub fn is_spline_based(self) -> bool {
        matches!(
            self,
            ModelKind::Kan
                | ModelKind::Tkan
                | ModelKind::Tkan5
                | ModelKind::TkanGelu
                | ModelKind::TkanMish
        )
    }

    pub fn scaling(self) -> ScalingPolicy {
        if self.is_spline_based() {
            ScalingPolicy::Unit
        } else {
            ScalingPolicy::Recurrent
        }
    }

    fn tkan_variant(self) -> Option<(usize, Activation)> {
        match self {
            ModelKind::Tkan => Some((1, Activation::Silu)),
            ModelKind::Tkan5 => Some((5, Activation::Silu)),
            ModelKind::TkanGelu => Some((1, Activation::Gelu)),
            ModelKind::TkanMish => Some((1, Activation::Mish)),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        Ok(match key.as_str() {
            "LSTM" => ModelKind::Lstm,
            "GRU" => ModelKind::Gru,
            "BILSTM" => ModelKind::BiLstm,
            "BIGRU" => ModelKind::BiGru,
            "ENSEMBLE" => ModelKind::Ensemble,
            "KAN" => ModelKind::Kan,
            "TKAN" => ModelKind::Tkan,
            "TKAN5" | "TKAN5SUBLAYERS" => ModelKind::Tkan5,
            "TKANGELU" | "GELUTKAN" => ModelKind::TkanGelu,
            "TKANMISH" | "MISHTKAN" => ModelKind::TkanMish,
            _ => return Err(Error::Config(format!("unknown model `{s}`"))),
        })
    }
}

/// Architecture hyperparameters. Defaults: H = 64, one recurrent layer,
/// dropout 0.2 (recurrent family only), KAN hidden widths `[64]`, G = 5, k = 3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub hidden: usize,
    pub depth: usize,
    pub dropout: f64,
    pub kan_hidden: Vec<usize>,
    pub grid_intervals: usize,
    pub spline_degree: usize,
    /// TKAN sublayer width; defaults to `hidden`.
    pub sub_width: Option<usize>,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            hidden: 64,
            depth: 1,
            dropout: 0.2,
            kan_hidden: vec![64],
            grid_intervals: 5,
            spline_degree: 3,
            sub_width: None,
        }
    }
}

/// Everything needed to rebuild a model deterministically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hyper: Hyper,
    pub window: usize,
    pub features: usize,
    pub seed: u64,
    /// Ensemble members, in coefficient order; empty otherwise.
    #[serde(default)]
    pub bases: Vec<ModelSpec>,
}

enum Arch {
    Sequence(SequenceModel),
    Kan(KanNetwork),
    Tkan(TkanModel),
    Ensemble { bases: Vec<Model>, head: EnsembleHead },
}

pub struct Model {
    spec: ModelSpec,
    store: ParamStore,
    arch: Arch,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("kind", &self.spec.kind)
            .field("params", &self.store.total_len())
            .finish()
    }
}

impl Model {
    /// Fresh parameters from `spec.seed`. Ensembles need their members via
    /// [`Model::ensemble`].
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        let h = &spec.hyper;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut store = ParamStore::new();
        let grid = SplineGrid::new(0.0, 1.0, h.grid_intervals, h.spline_degree)?;
        let arch = match spec.kind {
            ModelKind::Lstm | ModelKind::Gru | ModelKind::BiLstm | ModelKind::BiGru => {
                let cell = match spec.kind {
                    ModelKind::Lstm | ModelKind::BiLstm => CellKind::Lstm,
                    _ => CellKind::Gru,
                };
                let bi = matches!(spec.kind, ModelKind::BiLstm | ModelKind::BiGru);
                Arch::Sequence(SequenceModel::new(
                    &mut store,
                    cell,
                    bi,
                    spec.features,
                    h.hidden,
                    h.depth,
                    h.dropout,
                    &mut rng,
                )?)
            }
            ModelKind::Kan => {
                let mut widths = vec![spec.window * spec.features];
                widths.extend(&h.kan_hidden);
                widths.push(1);
                Arch::Kan(KanNetwork::new(
                    &mut store,
                    "kan",
                    &widths,
                    &grid,
                    Activation::Silu,
                    &mut rng,
                )?)
            }
            ModelKind::Tkan | ModelKind::Tkan5 | ModelKind::TkanGelu | ModelKind::TkanMish => {
                let (l, base) = spec.kind.tkan_variant().expect("tkan kind");
                Arch::Tkan(TkanModel::new(
                    &mut store,
                    spec.features,
                    h.hidden,
                    h.sub_width.unwrap_or(h.hidden),
                    l,
                    &grid,
                    base,
                    &mut rng,
                )?)
            }
            ModelKind::Ensemble => {
                if spec.bases.len() != ENSEMBLE_SIZE {
                    return Err(contract(format!(
                        "ensemble needs {ENSEMBLE_SIZE} base models, got {}",
                        spec.bases.len()
                    )));
                }
                let bases = spec
                    .bases
                    .iter()
                    .map(Model::build)
                    .collect::<Result<Vec<_>>>()?;
                Self::ensemble_arch(&mut store, bases)?
            }
        };
        Ok(Self {
            spec: spec.clone(),
            store,
            arch,
        })
    }

    fn ensemble_arch(store: &mut ParamStore, mut bases: Vec<Model>) -> Result<Arch> {
        for (b, kind) in bases.iter_mut().zip(ModelKind::ENSEMBLE_BASES) {
            if b.kind() != kind {
                return Err(contract(format!(
                    "ensemble member order must be {:?}, found {}",
                    ModelKind::ENSEMBLE_BASES,
                    b.kind()
                )));
            }
            b.store.set_trainable(false);
        }
        let head = EnsembleHead::new(store, bases.len())?;
        Ok(Arch::Ensemble { bases, head })
    }

    /// Ensemble over trained members (frozen from here on).
    pub fn ensemble(bases: Vec<Model>, seed: u64) -> Result<Self> {
        if bases.len() != ENSEMBLE_SIZE {
            return Err(contract(format!(
                "ensemble needs {ENSEMBLE_SIZE} base models, got {}",
                bases.len()
            )));
        }
        let first = &bases[0].spec;
        let spec = ModelSpec {
            kind: ModelKind::Ensemble,
            hyper: Hyper::default(),
            window: first.window,
            features: first.features,
            seed,
            bases: bases.iter().map(|b| b.spec.clone()).collect(),
        };
        let mut store = ParamStore::new();
        let arch = Self::ensemble_arch(&mut store, bases)?;
        Ok(Self { spec, store, arch })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn bases(&self) -> &[Model] {
        match &self.arch {
            Arch::Ensemble { bases, .. } => bases,
            _ => &[],
        }
    }

    pub fn ensemble_head(&self) -> Option<&EnsembleHead> {
        match &self.arch {
            Arch::Ensemble { head, .. } => Some(head),
            _ => None,
        }
    }

    /// Every tensor including frozen ensemble members, with qualified names.
    pub fn named_tensors(&self) -> Vec<(String, &crate::tensor::Tensor)> {
        let mut out: Vec<(String, &crate::tensor::Tensor)> = self
            .store
            .iter()
            .map(|(n, t)| (n.to_string(), t))
            .collect();
        for (i, b) in self.bases().iter().enumerate() {
            out.extend(
                b.named_tensors()
                    .into_iter()
                    .map(|(n, t)| (format!("base{i}.{n}"), t)),
            );
        }
        out
    }

    /// Overwrites the tensor called `name` (as produced by [`named_tensors`](Self::named_tensors)).
    pub fn set_tensor(&mut self, name: &str, values: &[f64]) -> Result<()> {
        if let Some(rest) = name.strip_prefix("base") {
            if let Some((idx, inner)) = rest.split_once('.') {
                if let (Ok(i), Arch::Ensemble { bases, .. }) = (idx.parse::<usize>(), &mut self.arch) {
                    let b = bases
                        .get_mut(i)
                        .ok_or_else(|| Error::Checkpoint(format!("no ensemble member {i}")))?;
                    return b.set_tensor(inner, values);
                }
            }
        }
        let id = self
            .store
            .find(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{name}`")))?;
        let t = self.store.get_mut(id);
        if t.numel() != values.len() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has {} values, checkpoint holds {}",
                t.numel(),
                values.len()
            )));
        }
        t.values_mut().copy_from_slice(values);
        Ok(())
    }

    /// `[batch × 1]` forecasts on `tape`. Dropout runs only when a training
    /// RNG is supplied (and only in the recurrent family).
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        batch: &WindowBatch,
        train_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if batch.features != self.spec.features || batch.window != self.spec.window {
            return Err(Error::Dimension {
                op: "model_forward",
                lhs: vec![batch.window, batch.features],
                rhs: vec![self.spec.window, self.spec.features],
            });
        }
        match &self.arch {
            Arch::Sequence(m) => {
                let steps = step_vars(tape, batch)?;
                m.forward(tape, p, &steps, train_rng)
            }
            Arch::Tkan(m) => {
                let steps = step_vars(tape, batch)?;
                m.forward(tape, p, &steps)
            }
            Arch::Kan(net) => {
                let x = tape.constant(
                    &[batch.batch, batch.window * batch.features],
                    batch.data.clone(),
                )?;
                net.forward(tape, p, x)
            }
            Arch::Ensemble { bases, head } => {
                let preds = Self::member_predictions(bases, batch)?;
                let x = tape.constant(&[batch.batch, bases.len()], preds)?;
                head.combine(tape, p, x)
            }
        }
    }

    /// Row-major `[batch × members]` member forecasts.
    pub fn member_predictions(bases: &[Model], batch: &WindowBatch) -> Result<Vec<f64>> {
        let per: Vec<Vec<f64>> = bases
            .iter()
            .map(|b| b.predict(batch))
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(batch.batch * bases.len());
        for i in 0..batch.batch {
            out.extend(per.iter().map(|p| p[i]));
        }
        Ok(out)
    }

    /// Inference-mode forecasts, one per sample.
    pub fn predict(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let y = self.forward(&mut tape, &p, batch, None)?;
        Ok(tape.value(y).to_vec())
    }
}

fn step_vars(tape: &mut Tape, batch: &WindowBatch) -> Result<Vec<Var>> {
    (0..batch.window)
        .map(|t| tape.constant(&[batch.batch, batch.features], batch.step(t)))
        .collect()
}
