mod support;

use support::cases::{self, Cases, TOL};

fn run(case: fn(&mut Cases)) {
    let mut out = Vec::new();
    case(&mut out);
    assert!(!out.is_empty());
    for (what, report) in out {
        assert!(report.checked > 0, "{what}: nothing checked");
        assert!(
            report.max_rel < TOL,
            "{what}: max relative error {:e} at {}",
            report.max_rel,
            report.worst
        );
    }
}

#[test]
fn tape_primitives() {
    run(cases::tape_primitives);
}

#[test]
fn dense_layer() {
    run(cases::dense_layer);
}

#[test]
fn lstm_cell_unrolled() {
    run(cases::lstm_cell_unrolled);
}

#[test]
fn gru_cell_unrolled() {
    run(cases::gru_cell_unrolled);
}

#[test]
fn recurrent_models_end_to_end() {
    run(cases::recurrent_models_end_to_end);
}

#[test]
fn kan_layer_with_every_base() {
    run(cases::kan_layer_with_every_base);
}

#[test]
fn kan_network_two_layers() {
    run(cases::kan_network_two_layers);
}

#[test]
fn tkan_cell_with_spline_coefficients() {
    run(cases::tkan_cell_with_spline_coefficients);
}

#[test]
fn tkan_model_five_sublayers() {
    run(cases::tkan_model_five_sublayers);
}

#[test]
fn ensemble_logits() {
    run(cases::ensemble_logits);
}
