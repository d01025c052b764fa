//! Finite-difference gradient cases shared by the gradient tests and the
//! acceptance run.

use kanfc::ensemble::EnsembleHead;
use kanfc::nn::{Activation, DenseLayer, ParamStore};
use kanfc::recurrent::{CellKind, GruCell, LstmCell, SequenceModel};
use kanfc::spline::{KanLayer, KanNetwork, SplineGrid};
use kanfc::tensor::Unary;
use kanfc::tkan::{TkanCell, TkanModel};
use kanfc::{Tape, Tensor, Var};

use super::{check_gradients, probe, rng, uniform, GradReport};

pub const TOL: f64 = 1e-4;

pub type Cases = Vec<(String, GradReport)>;

pub type Case = (&'static str, fn(&mut Cases));

pub const ALL: &[Case] = &[
    ("tape_primitives", tape_primitives),
    ("dense_layer", dense_layer),
    ("lstm_cell_unrolled", lstm_cell_unrolled),
    ("gru_cell_unrolled", gru_cell_unrolled),
    ("recurrent_models_end_to_end", recurrent_models_end_to_end),
    ("kan_layer_with_every_base", kan_layer_with_every_base),
    ("kan_network_two_layers", kan_network_two_layers),
    ("tkan_cell_with_spline_coefficients", tkan_cell_with_spline_coefficients),
    ("tkan_model_five_sublayers", tkan_model_five_sublayers),
    ("ensemble_logits", ensemble_logits),
];

fn input(seed: u64, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::new(&[rows, cols], uniform(&mut rng(seed), rows * cols, lo, hi)).unwrap()
}

fn steps(_tape: &mut Tape, xs: &[Var]) -> Vec<Var> {
    xs.to_vec()
}

pub fn tape_primitives(out: &mut Cases) {
    let mut store = ParamStore::new();
    let mut g = rng(1);
    let w = store.add("w", Tensor::new(&[3, 4], uniform(&mut g, 12, -1.0, 1.0)).unwrap());
    let b = store.add("b", Tensor::new(&[3], uniform(&mut g, 3, -1.0, 1.0)).unwrap());
    let m = store.add("m", Tensor::new(&[4, 2], uniform(&mut g, 8, -1.0, 1.0)).unwrap());
    let mut inputs = vec![input(2, 5, 4, -1.0, 1.0), input(3, 5, 2, 0.5, 2.0)];
    let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
        let h = tape.linear(xs[0], p.get(w)).unwrap();
        let h = tape.add_bias(h, p.get(b)).unwrap();
        let mut acts = Vec::new();
        for kind in [
            Unary::Tanh,
            Unary::Sigmoid,
            Unary::Exp,
            Unary::Softplus,
            Unary::Silu,
            Unary::Gelu,
            Unary::Mish,
        ] {
            acts.push(tape.unary(h, kind));
        }
        let wide = tape.concat(&acts, 1).unwrap();
        let part = tape.slice_cols(wide, 2, 9).unwrap();
        let sm = tape.softmax(part);
        let lg = tape.log(xs[1]);
        let mm = tape.matmul(xs[0], p.get(m)).unwrap();
        let prod = tape.mul(mm, lg).unwrap();
        let diff = tape.sub(prod, xs[1]).unwrap();
        let sc = tape.scale(diff, 0.7);
        let cl = tape.clamp(sc, -100.0, 100.0).unwrap();
        let stacked = tape.concat(&[cl, xs[1]], 0).unwrap();
        let a = probe(tape, sm, 11);
        let c = probe(tape, stacked, 12);
        let mean = tape.mean(stacked);
        let target = tape.constant(&[5, 2], vec![0.3; 10]).unwrap();
        let mse = tape.mse(mm, target).unwrap();
        let s = tape.add(a, c).unwrap();
        let s = tape.add(s, mean).unwrap();
        tape.add(s, mse).unwrap()
    });
    out.push(("tape primitives".to_string(), report));
}

pub fn dense_layer(out: &mut Cases) {
    let mut store = ParamStore::new();
    let layer = DenseLayer::new(&mut store, "d", 4, 3, &mut rng(3)).unwrap();
    let mut inputs = vec![input(4, 6, 4, -1.0, 1.0)];
    let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
        let y = layer.forward(tape, p, xs[0]).unwrap();
        probe(tape, y, 5)
    });
    out.push(("dense".to_string(), report));
}

pub fn lstm_cell_unrolled(out: &mut Cases) {
    let mut store = ParamStore::new();
    let cell = LstmCell::new(&mut store, "l", 2, 3, &mut rng(6)).unwrap();
    let mut inputs: Vec<Tensor> = (0..3).map(|t| input(20 + t, 4, 2, -1.0, 1.0)).collect();
    inputs.push(input(30, 4, 3, -0.5, 0.5));
    inputs.push(input(31, 4, 3, -0.5, 0.5));
    let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
        let (mut h, mut c) = (xs[3], xs[4]);
        for &x in &xs[..3] {
            (h, c) = cell.step(tape, p, x, h, c).unwrap();
        }
        let a = probe(tape, h, 7);
        let b = probe(tape, c, 8);
        tape.add(a, b).unwrap()
    });
    out.push(("lstm".to_string(), report));
}

pub fn gru_cell_unrolled(out: &mut Cases) {
    let mut store = ParamStore::new();
    let cell = GruCell::new(&mut store, "g", 2, 3, &mut rng(9)).unwrap();
    let mut inputs: Vec<Tensor> = (0..3).map(|t| input(40 + t, 4, 2, -1.0, 1.0)).collect();
    inputs.push(input(50, 4, 3, -0.5, 0.5));
    let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
        let mut h = xs[3];
        for &x in &xs[..3] {
            h = cell.step(tape, p, x, h).unwrap();
        }
        probe(tape, h, 10)
    });
    out.push(("gru".to_string(), report));
}

fn sequence_model_check(out: &mut Cases, kind: CellKind, bidirectional: bool, depth: usize) {
    let mut store = ParamStore::new();
    let model =
        SequenceModel::new(&mut store, kind, bidirectional, 2, 4, depth, 0.2, &mut rng(12)).unwrap();
    let mut inputs: Vec<Tensor> = (0..3).map(|t| input(60 + t, 3, 2, 0.0, 1.0)).collect();
    let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
        let s = steps(tape, xs);
        let y = model.forward(tape, p, &s, None).unwrap();
        probe(tape, y, 13)
    });
    out.push((format!("{kind:?} bi={bidirectional} depth={depth}"), report));
}

pub fn recurrent_models_end_to_end(out: &mut Cases) {
    for kind in [CellKind::Lstm, CellKind::Gru] {
        for bi in [false, true] {
            sequence_model_check(out, kind, bi, 2);
        }
    }
}

pub fn kan_layer_with_every_base(out: &mut Cases) {
    for base in [Activation::Silu, Activation::Gelu, Activation::Mish] {
        let mut store = ParamStore::new();
        let layer =
            KanLayer::new(&mut store, "k", 3, 2, SplineGrid::default(), base, &mut rng(14)).unwrap();
        // Spline weights away from one so the product structure is exercised.
        let sw = store.find("k.spline_weight").unwrap();
        store.get_mut(sw).values_mut().copy_from_slice(&uniform(&mut rng(15), 6, 0.5, 1.5));
        let mut inputs = vec![input(16, 5, 3, 0.03, 0.97)];
        let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
            let y = layer.forward(tape, p, xs[0]).unwrap();
            probe(tape, y, 17)
        });
        out.push((format!("kan layer {base:?}"), report));
    }
}

pub fn kan_network_two_layers(out: &mut Cases) {
    let mut store = ParamStore::new();
    let net = KanNetwork::new(
        &mut store,
        "kan",
        &[4, 5, 1],
        &SplineGrid::default(),
        Activation::Silu,
        &mut rng(18),
    )
    .unwrap();
    let mut inputs = vec![input(19, 6, 4, 0.05, 0.95)];
    let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
        let y = net.forward(tape, p, xs[0]).unwrap();
        probe(tape, y, 20)
    });
    out.push(("kan network".to_string(), report));
}

pub fn tkan_cell_with_spline_coefficients(out: &mut Cases) {
    for base in [Activation::Silu, Activation::Gelu, Activation::Mish] {
        let mut store = ParamStore::new();
        let cell = TkanCell::new(
            &mut store,
            "t",
            2,
            3,
            3,
            2,
            &SplineGrid::default(),
            base,
            &mut rng(21),
        )
        .unwrap();
        let mut inputs: Vec<Tensor> = (0..3).map(|t| input(70 + t, 2, 2, 0.05, 0.95)).collect();
        let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
            let last = cell.run(tape, p, xs).unwrap();
            let a = probe(tape, last.h, 22);
            let b = probe(tape, last.c, 23);
            let c = probe(tape, last.sub_states[1], 24);
            let s = tape.add(a, b).unwrap();
            tape.add(s, c).unwrap()
        });
        assert!(report.checked > 2 * 3 * 3 * 8, "spline coefficients included");
        out.push((format!("tkan cell {base:?}"), report));
    }
}

pub fn tkan_model_five_sublayers(out: &mut Cases) {
    let mut store = ParamStore::new();
    let model = TkanModel::new(
        &mut store,
        2,
        4,
        2,
        5,
        &SplineGrid::default(),
        Activation::Silu,
        &mut rng(25),
    )
    .unwrap();
    let mut inputs: Vec<Tensor> = (0..3).map(|t| input(80 + t, 2, 2, 0.05, 0.95)).collect();
    let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
        let y = model.forward(tape, p, xs).unwrap();
        probe(tape, y, 26)
    });
    out.push(("tkan model".to_string(), report));
}

pub fn ensemble_logits(out: &mut Cases) {
    let mut store = ParamStore::new();
    let head = EnsembleHead::new(&mut store, 4).unwrap();
    store
        .get_mut(head.logits)
        .values_mut()
        .copy_from_slice(&[0.3, -0.2, 0.8, 0.1]);
    let preds = input(27, 6, 4, -1.0, 1.0);
    let targets = uniform(&mut rng(28), 6, -1.0, 1.0);
    let mut inputs = vec![preds];
    let report = check_gradients(&mut store, &mut inputs, |tape, p, xs| {
        let y = head.combine(tape, p, xs[0]).unwrap();
        let t = tape.constant(&[6, 1], targets.clone()).unwrap();
        tape.mse(y, t).unwrap()
    });
    out.push(("ensemble".to_string(), report));
}
