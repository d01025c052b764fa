//! Temporal KAN cell.
//!
//! Each of the `L` sublayers keeps its own short-term state `h̃_l`:
//!
//! ```text
//! s_l   = W_lx · x_t + W_lh · h̃_l(t-1)
//! õ_l   = φ_l(s_l)                          (KAN layer H̃ → H̃)
//! h̃_l(t) = W_hh · h̃_l(t-1) + W_hz · õ_l
//! ```
//!
//! The long-term path is LSTM-shaped. The forget, input and candidate gates
//! read `(x_t, h_{t-1})`; only the output gate reads `r_t = [õ_1 … õ_L]`:
//!
//! ```text
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ c̃_t
//! o_t = σ(W_o · r_t + b_o)
//! h_t = o_t ⊙ tanh(c_t)
//! ```

use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::nn::{init_params, Activation, Bound, DenseLayer, ParamId, ParamStore};
use crate::recurrent::Gate;
use crate::spline::{KanLayer, SplineGrid};
use crate::tensor::{Tape, Var};

#[derive(Clone, Debug)]
pub struct TkanSubLayer {
    pub index: usize,
    pub input_map: ParamId,
    pub state_map: ParamId,
    pub kan: KanLayer,
    pub recur: ParamId,
    pub mix: ParamId,
}

impl TkanSubLayer {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        prefix: &str,
        index: usize,
        input: usize,
        width: usize,
        grid: &SplineGrid,
        base: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let p = format!("{prefix}.sub{index}");
        Ok(Self {
            index,
            input_map: store.add(
                format!("{p}.w_x"),
                init_params(&[width, input], input, rng)?,
            ),
            state_map: store.add(
                format!("{p}.w_h"),
                init_params(&[width, width], width, rng)?,
            ),
            kan: KanLayer::new(store, &format!("{p}.phi"), width, width, grid.clone(), base, rng)?,
            recur: store.add(
                format!("{p}.w_hh"),
                init_params(&[width, width], width, rng)?,
            ),
            mix: store.add(
                format!("{p}.w_hz"),
                init_params(&[width, width], width, rng)?,
            ),
        })
    }

    /// Returns `(õ_t, h̃_t)`.
    pub fn step(&self, tape: &mut Tape, p: &Bound, x: Var, state: Var) -> Result<(Var, Var)> {
        let from_x = tape.linear(x, p.get(self.input_map))?;
        let from_h = tape.linear(state, p.get(self.state_map))?;
        let s = tape.add(from_x, from_h)?;
        let out = self.kan.forward(tape, p, s)?;
        let carried = tape.linear(state, p.get(self.recur))?;
        let mixed = tape.linear(out, p.get(self.mix))?;
        let next = tape.add(carried, mixed)?;
        Ok((out, next))
    }
}

#[derive(Clone, Debug)]
pub struct TkanCell {
    pub input: usize,
    pub hidden: usize,
    pub sub_width: usize,
    pub base: Activation,
    pub sublayers: Vec<TkanSubLayer>,
    pub forget: Gate,
    pub input_gate: Gate,
    pub candidate: Gate,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

/// Everything one cell step produces.
#[derive(Clone, Debug)]
pub struct TkanStep {
    pub h: Var,
    pub c: Var,
    pub sub_states: Vec<Var>,
    pub r: Var,
    pub gates: [Var; 3],
}

impl TkanCell {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        sub_width: usize,
        sublayers: usize,
        grid: &SplineGrid,
        base: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if sublayers == 0 || hidden == 0 || sub_width == 0 || input == 0 {
            return Err(contract("tkan cell needs input, hidden, sub_width, L >= 1"));
        }
        let subs = (0..sublayers)
            .map(|l| TkanSubLayer::new(store, prefix, l, input, sub_width, grid, base, rng))
            .collect::<Result<Vec<_>>>()?;
        let r_width = sublayers * sub_width;
        let gate = |store: &mut ParamStore, name: &str, rng: &mut ChaCha8Rng| {
            Gate::new(store, &format!("{prefix}.{name}"), input, hidden, rng)
        };
        let forget = gate(store, "f", rng)?;
        let input_gate = gate(store, "i", rng)?;
        let candidate = gate(store, "c", rng)?;
        let out_weight = store.add(
            format!("{prefix}.o.w"),
            init_params(&[hidden, r_width], r_width, rng)?,
        );
        let out_bias = store.add(
            format!("{prefix}.o.b"),
            init_params(&[hidden], r_width, rng)?,
        );
        Ok(Self {
            input,
            hidden,
            sub_width,
            base,
            sublayers: subs,
            forget,
            input_gate,
            candidate,
            out_weight,
            out_bias,
        })
    }

    pub fn num_sublayers(&self) -> usize {
        self.sublayers.len()
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        h_prev: Var,
        c_prev: Var,
        sub_states: &[Var],
    ) -> Result<TkanStep> {
        if sub_states.len() != self.sublayers.len() {
            return Err(contract(format!(
                "tkan_step: expected {} sublayer states, got {}",
                self.sublayers.len(),
                sub_states.len()
            )));
        }
        let (rows, cols) = tape.dims(x);
        if cols != self.input {
            return Err(Error::Dimension {
                op: "tkan_step",
                lhs: tape.shape(x).to_vec(),
                rhs: vec![rows, self.input],
            });
        }
        let mut outs = Vec::with_capacity(sub_states.len());
        let mut next_states = Vec::with_capacity(sub_states.len());
        for (sub, &state) in self.sublayers.iter().zip(sub_states) {
            let (o, s) = sub.step(tape, p, x, state)?;
            outs.push(o);
            next_states.push(s);
        }

        let f = self.forget.pre(tape, p, x, h_prev)?;
        let f = tape.sigmoid(f);
        let i = self.input_gate.pre(tape, p, x, h_prev)?;
        let i = tape.sigmoid(i);
        let c_hat = self.candidate.pre(tape, p, x, h_prev)?;
        let c_hat = tape.tanh(c_hat);
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, c_hat)?;
        let c = tape.add(keep, write)?;

        let r = tape.concat(&outs, 1)?;
        let o = tape.linear(r, p.get(self.out_weight))?;
        let o = tape.add_bias(o, p.get(self.out_bias))?;
        let o = tape.sigmoid(o);
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(TkanStep {
            h,
            c,
            sub_states: next_states,
            r,
            gates: [f, i, o],
        })
    }

    /// Unrolls over `steps` from zero states; returns the final step.
    pub fn run(&self, tape: &mut Tape, p: &Bound, steps: &[Var]) -> Result<TkanStep> {
        let first = *steps
            .first()
            .ok_or_else(|| contract("tkan_run: empty window"))?;
        let (batch, _) = tape.dims(first);
        let mut h = tape.constant(&[batch, self.hidden], vec![0.0; batch * self.hidden])?;
        let mut c = h;
        let zero_sub = vec![0.0; batch * self.sub_width];
        let mut subs = (0..self.sublayers.len())
            .map(|_| tape.constant(&[batch, self.sub_width], zero_sub.clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut last = None;
        for &x in steps {
            let step = self.step(tape, p, x, h, c, &subs)?;
            h = step.h;
            c = step.c;
            subs = step.sub_states.clone();
            last = Some(step);
        }
        Ok(last.expect("non-empty window"))
    }
}

/// One TKAN cell followed by a dense head on the final hidden state.
#[derive(Clone, Debug)]
pub struct TkanModel {
    pub cell: TkanCell,
    pub head: DenseLayer,
}

impl TkanModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        input: usize,
        hidden: usize,
        sub_width: usize,
        sublayers: usize,
        grid: &SplineGrid,
        base: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let cell = TkanCell::new(
            store, "tkan", input, hidden, sub_width, sublayers, grid, base, rng,
        )?;
        let head = DenseLayer::new(store, "head", hidden, 1, rng)?;
        Ok(Self { cell, head })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, steps: &[Var]) -> Result<Var> {
        let last = self.cell.run(tape, p, steps)?;
        self.head.forward(tape, p, last.h)
    }
}
