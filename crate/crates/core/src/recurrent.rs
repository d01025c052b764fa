//! LSTM and GRU cells, bidirectional wrappers and the stacked sequence model.
//!
//! All cells run batched: `x_t` is `[batch × d]`, states are `[batch × H]`.
//! Weight matrices are stored `out × in` (`W: H×d`, `U: H×H`).

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::nn::{dropout, init_params, Bound, DenseLayer, ParamId, ParamStore};
use crate::tensor::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

/// Input weight, recurrent weight and bias of one gate.
#[derive(Clone, Debug)]
pub struct Gate {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

impl Gate {
    pub(crate) fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            w: store.add(
                format!("{name}.w"),
                init_params(&[hidden, input], hidden, rng)?,
            ),
            u: store.add(
                format!("{name}.u"),
                init_params(&[hidden, hidden], hidden, rng)?,
            ),
            b: store.add(format!("{name}.b"), init_params(&[hidden], hidden, rng)?),
        })
    }

    /// `x·Wᵀ + h·Uᵀ + b` (pre-activation).
    pub(crate) fn pre(&self, tape: &mut Tape, p: &Bound, x: Var, h: Var) -> Result<Var> {
        let wx = tape.linear(x, p.get(self.w))?;
        let uh = tape.linear(h, p.get(self.u))?;
        let s = tape.add(wx, uh)?;
        tape.add_bias(s, p.get(self.b))
    }
}

#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    pub forget: Gate,
    pub input_gate: Gate,
    pub candidate: Gate,
    pub output: Gate,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            input,
            hidden,
            forget: Gate::new(store, &format!("{prefix}.f"), input, hidden, rng)?,
            input_gate: Gate::new(store, &format!("{prefix}.i"), input, hidden, rng)?,
            candidate: Gate::new(store, &format!("{prefix}.c"), input, hidden, rng)?,
            output: Gate::new(store, &format!("{prefix}.o"), input, hidden, rng)?,
        })
    }

    /// One step; returns `(h_t, c_t)`.
    pub fn step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var)> {
        check_width(tape, x, self.input, "lstm_step")?;
        let f = self.forget.pre(tape, p, x, h_prev)?;
        let f = tape.sigmoid(f);
        let i = self.input_gate.pre(tape, p, x, h_prev)?;
        let i = tape.sigmoid(i);
        let c_hat = self.candidate.pre(tape, p, x, h_prev)?;
        let c_hat = tape.tanh(c_hat);
        let o = self.output.pre(tape, p, x, h_prev)?;
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, c_hat)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }
}

#[derive(Clone, Debug)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    pub update: Gate,
    pub reset: Gate,
    pub candidate: Gate,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            input,
            hidden,
            update: Gate::new(store, &format!("{prefix}.z"), input, hidden, rng)?,
            reset: Gate::new(store, &format!("{prefix}.r"), input, hidden, rng)?,
            candidate: Gate::new(store, &format!("{prefix}.h"), input, hidden, rng)?,
        })
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, x: Var, h_prev: Var) -> Result<Var> {
        check_width(tape, x, self.input, "gru_step")?;
        let z = self.update.pre(tape, p, x, h_prev)?;
        let z = tape.sigmoid(z);
        let r = self.reset.pre(tape, p, x, h_prev)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h_prev)?;
        let cand = self.candidate.pre(tape, p, x, rh)?;
        let cand = tape.tanh(cand);
        // (1 - z)·h + z·h̃ = h + z·(h̃ - h)
        let delta = tape.sub(cand, h_prev)?;
        let moved = tape.mul(z, delta)?;
        tape.add(h_prev, moved)
    }
}

fn check_width(tape: &Tape, x: Var, expected: usize, op: &'static str) -> Result<()> {
    let (rows, cols) = tape.dims(x);
    if cols != expected {
        return Err(Error::Dimension {
            op,
            lhs: tape.shape(x).to_vec(),
            rhs: vec![rows, expected],
        });
    }
    Ok(())
}

/// A single-direction recurrent layer.
#[derive(Clone, Debug)]
pub enum Cell {
    Lstm(LstmCell),
    Gru(GruCell),
}

impl Cell {
    pub fn new(
        kind: CellKind,
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(match kind {
            CellKind::Lstm => Cell::Lstm(LstmCell::new(store, prefix, input, hidden, rng)?),
            CellKind::Gru => Cell::Gru(GruCell::new(store, prefix, input, hidden, rng)?),
        })
    }

    pub fn hidden(&self) -> usize {
        match self {
            Cell::Lstm(c) => c.hidden,
            Cell::Gru(c) => c.hidden,
        }
    }

    /// Unrolls from zero state; returns the hidden state after every step.
    pub fn run(&self, tape: &mut Tape, p: &Bound, steps: &[Var]) -> Result<Vec<Var>> {
        let first = *steps
            .first()
            .ok_or_else(|| contract("recurrent layer: empty window"))?;
        let (batch, _) = tape.dims(first);
        let zeros = vec![0.0; batch * self.hidden()];
        let mut h = tape.constant(&[batch, self.hidden()], zeros.clone())?;
        let mut outs = Vec::with_capacity(steps.len());
        match self {
            Cell::Lstm(cell) => {
                let mut c = tape.constant(&[batch, self.hidden()], zeros)?;
                for &x in steps {
                    (h, c) = cell.step(tape, p, x, h, c)?;
                    outs.push(h);
                }
            }
            Cell::Gru(cell) => {
                for &x in steps {
                    h = cell.step(tape, p, x, h)?;
                    outs.push(h);
                }
            }
        }
        Ok(outs)
    }
}

/// Forward and time-reversed backward layers, concatenated per time step.
#[derive(Clone, Debug)]
pub struct BidirectionalWrapper {
    pub forward: Cell,
    pub backward: Cell,
}

impl BidirectionalWrapper {
    /// Per-direction states. `bwd[j]` is the backward layer's state after
    /// consuming the reversed sequence up to its `j`-th element.
    pub fn run_directions(
        &self,
        tape: &mut Tape,
        p: &Bound,
        steps: &[Var],
    ) -> Result<(Vec<Var>, Vec<Var>)> {
        let fwd = self.forward.run(tape, p, steps)?;
        let reversed: Vec<Var> = steps.iter().rev().copied().collect();
        let bwd = self.backward.run(tape, p, &reversed)?;
        Ok((fwd, bwd))
    }
}

#[derive(Clone, Debug)]
pub enum RecurrentLayer {
    Uni(Cell),
    Bi(BidirectionalWrapper),
}

impl RecurrentLayer {
    pub fn output_width(&self) -> usize {
        match self {
            RecurrentLayer::Uni(c) => c.hidden(),
            RecurrentLayer::Bi(b) => 2 * b.forward.hidden(),
        }
    }

    /// Time-aligned outputs for stacking and the summary state for the head.
    fn run(&self, tape: &mut Tape, p: &Bound, steps: &[Var]) -> Result<(Vec<Var>, Var)> {
        match self {
            RecurrentLayer::Uni(cell) => {
                let outs = cell.run(tape, p, steps)?;
                let last = *outs.last().expect("non-empty window");
                Ok((outs, last))
            }
            RecurrentLayer::Bi(bi) => {
                let (fwd, bwd) = bi.run_directions(tape, p, steps)?;
                let w = steps.len();
                let aligned = (0..w)
                    .map(|t| tape.concat(&[fwd[t], bwd[w - 1 - t]], 1))
                    .collect::<Result<Vec<_>>>()?;
                let last = tape.concat(&[fwd[w - 1], bwd[w - 1]], 1)?;
                Ok((aligned, last))
            }
        }
    }
}

/// Stacked recurrent layers with a dense head on the final state.
#[derive(Clone, Debug)]
pub struct SequenceModel {
    pub layers: Vec<RecurrentLayer>,
    pub head: DenseLayer,
    pub dropout: f64,
}

impl SequenceModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        kind: CellKind,
        bidirectional: bool,
        input: usize,
        hidden: usize,
        depth: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if depth == 0 || hidden == 0 || input == 0 {
            return Err(contract("sequence model needs depth, hidden and input >= 1"));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(contract(format!("dropout rate {dropout} outside [0, 1)")));
        }
        let mut layers = Vec::with_capacity(depth);
        let mut width = input;
        for l in 0..depth {
            let layer = if bidirectional {
                RecurrentLayer::Bi(BidirectionalWrapper {
                    forward: Cell::new(kind, store, &format!("rnn{l}.fwd"), width, hidden, rng)?,
                    backward: Cell::new(kind, store, &format!("rnn{l}.bwd"), width, hidden, rng)?,
                })
            } else {
                RecurrentLayer::Uni(Cell::new(kind, store, &format!("rnn{l}"), width, hidden, rng)?)
            };
            width = layer.output_width();
            layers.push(layer);
        }
        let head = DenseLayer::new(store, "head", width, 1, rng)?;
        Ok(Self {
            layers,
            head,
            dropout,
        })
    }

    /// `steps[t]` is `[batch × d]`; returns `[batch × 1]`. Dropout is active
    /// only when a training RNG is supplied.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        steps: &[Var],
        mut train_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if steps.is_empty() {
            return Err(contract("run_sequence: empty window"));
        }
        let mut seq = steps.to_vec();
        let mut last = seq[0];
        for (l, layer) in self.layers.iter().enumerate() {
            let (outs, summary) = layer.run(tape, p, &seq)?;
            last = summary;
            if l + 1 < self.layers.len() {
                seq = match train_rng.as_deref_mut() {
                    Some(rng) => outs
                        .into_iter()
                        .map(|o| dropout(tape, o, self.dropout, true, rng))
                        .collect::<Result<_>>()?,
                    None => outs,
                };
            }
        }
        if let Some(rng) = train_rng {
            last = dropout(tape, last, self.dropout, true, rng)?;
        }
        self.head.forward(tape, p, last)
    }
}
