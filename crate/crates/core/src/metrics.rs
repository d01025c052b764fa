//! MSE, RMSE, MAE, R² and MAPE.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Denominator floor for MAPE; precipitation contains exact zeros.
pub const MAPE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// NaN when the reference series is constant.
    pub r2: f64,
    pub mape: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    Mse,
    Rmse,
    Mae,
    R2,
    Mape,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Mse,
        MetricKind::Rmse,
        MetricKind::Mae,
        MetricKind::R2,
        MetricKind::Mape,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Mse => "MSE",
            MetricKind::Rmse => "RMSE",
            MetricKind::Mae => "MAE",
            MetricKind::R2 => "R2",
            MetricKind::Mape => "MAPE",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricKind::R2)
    }

    /// `↓` or `↑`, as used in table headers.
    pub fn arrow(self) -> char {
        if self.higher_is_better() {
            '↑'
        } else {
            '↓'
        }
    }
}

impl Metrics {
    pub fn get(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Mse => self.mse,
            MetricKind::Rmse => self.rmse,
            MetricKind::Mae => self.mae,
            MetricKind::R2 => self.r2,
            MetricKind::Mape => self.mape,
        }
    }
}

/// The five metrics for one (model, variable, city) triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub city: String,
    pub variable: String,
    /// Original physical units.
    pub metrics: Metrics,
    /// The same metrics in the model's scaled space.
    pub scaled: Metrics,
}

pub fn compute_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(contract(format!(
            "metrics: length mismatch {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(contract("metrics: empty input"));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let (mut sse, mut sae, mut sst, mut ape) = (0.0, 0.0, 0.0, 0.0);
    for (y, p) in y_true.iter().zip(y_pred) {
        let e = y - p;
        sse += e * e;
        sae += e.abs();
        sst += (y - mean) * (y - mean);
        ape += e.abs() / y.abs().max(MAPE_EPS);
    }
    let mse = sse / n;
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else {
        log::warn!("R² undefined: reference series is constant");
        f64::NAN
    };
    Ok(Metrics {
        mse,
        rmse: mse.sqrt(),
        mae: sae / n,
        r2,
        mape: 100.0 * ape / n,
        n: y_true.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let m = compute_metrics(&[1., 2., 3.], &[1., 2., 3.]).unwrap();
        assert_eq!((m.mse, m.rmse, m.mae, m.r2, m.mape), (0., 0., 0., 1., 0.));
    }

    #[test]
    fn mean_predictor_has_zero_r2() {
        let y = [1.0, 4.0, 2.0, 7.0];
        let m = compute_metrics(&y, &[3.5; 4]).unwrap();
        assert_eq!(m.r2, 0.0);
    }

    #[test]
    fn hand_case() {
        let m = compute_metrics(&[2., 4.], &[1., 5.]).unwrap();
        assert_eq!((m.mse, m.rmse, m.mae, m.r2, m.mape), (1., 1., 1., 0., 37.5));
    }

    #[test]
    fn errors_and_constant_reference() {
        assert!(compute_metrics(&[1.], &[1., 2.]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[2., 2.], &[1., 3.]).unwrap().r2.is_nan());
    }

    #[test]
    fn zero_targets_stay_finite() {
        let m = compute_metrics(&[0.0, 1.0], &[0.5, 1.0]).unwrap();
        assert!(m.mape.is_finite() && m.mape > 1e6);
    }
}
