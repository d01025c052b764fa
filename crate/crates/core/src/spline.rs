//! Uniform B-spline bases and Kolmogorov–Arnold layers.
//!
//! Every edge `(q, p)` of a [`KanLayer`] carries the learnable function
//!
//! ```text
//! phi_qp(x) = W_b[q,p] · b(x) + W_s[q,p] · Σ_i C[q,p,i] · B_i(x)
//! ```
//!
//! and output unit `q` sums its incoming edges. `b` is the base activation
//! (SiLU for plain KAN). The spline term sees `x` clamped into the grid
//! domain; the base term sees the raw value.
//!
//! The forward pass is fused into a single tape node. The dense basis matrix
//! `Φ[b, p·N + i] = B_i(x_bp)` turns the spline sum into one GEMM against
//! the effective coefficients `W_s[q,p] · C[q,p,i]`.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::nn::{init_params, Activation, Bound, ParamId, ParamStore};
use crate::tensor::{gemm, CustomBackward, Tape, Tensor, Var};

/// Uniform knot grid on `[lo, hi]` with `degree` knots extrapolated past each end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineGrid {
    pub lo: f64,
    pub hi: f64,
    pub intervals: usize,
    pub degree: usize,
}

impl Default for SplineGrid {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 1.0,
            intervals: 5,
            degree: 3,
        }
    }
}

impl SplineGrid {
    pub fn new(lo: f64, hi: f64, intervals: usize, degree: usize) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || hi <= lo || intervals == 0 {
            return Err(contract(format!(
                "spline grid needs lo < hi and intervals >= 1 (got [{lo}, {hi}], G={intervals})"
            )));
        }
        Ok(Self {
            lo,
            hi,
            intervals,
            degree,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.intervals as f64
    }

    /// Number of basis functions, `G + k`.
    pub fn num_basis(&self) -> usize {
        self.intervals + self.degree
    }

    /// Extended knot vector of length `G + 2k + 1`.
    pub fn knots(&self) -> Vec<f64> {
        let h = self.spacing();
        let k = self.degree as f64;
        (0..self.intervals + 2 * self.degree + 1)
            .map(|j| self.lo + (j as f64 - k) * h)
            .collect()
    }

    fn knot(&self, j: usize) -> f64 {
        self.lo + (j as f64 - self.degree as f64) * self.spacing()
    }

    /// Knot span `j` with `t_j <= x < t_{j+1}`, restricted to the domain's spans.
    /// The right end of the domain is assigned to the last span.
    fn span(&self, x: f64) -> usize {
        let k = self.degree;
        let last = self.intervals + k - 1;
        let rel = ((x - self.lo) / self.spacing()).floor();
        let mut j = if rel <= 0.0 {
            k
        } else {
            (rel as usize + k).min(last)
        };
        // Guard against rounding in the floor division.
        while j > k && x < self.knot(j) {
            j -= 1;
        }
        while j < last && x >= self.knot(j + 1) {
            j += 1;
        }
        j
    }

    /// Nonzero basis values and derivatives at `x` (already inside the
    /// domain). Returns the first basis index and `k + 1` values/derivatives.
    pub fn local_basis(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) -> usize {
        let k = self.degree;
        debug_assert!(values.len() == k + 1 && derivs.len() == k + 1);
        let span = self.span(x);
        let mut left = vec![0.0; k + 1];
        let mut right = vec![0.0; k + 1];
        values.iter_mut().for_each(|v| *v = 0.0);
        values[0] = 1.0;
        derivs.iter_mut().for_each(|d| *d = 0.0);
        for j in 1..=k {
            if j == k {
                // Degree k-1 values over bases span-k+1..=span give the derivative.
                let h = self.spacing();
                for r in 0..=k {
                    let lower = if r >= 1 { values[r - 1] } else { 0.0 };
                    let upper = if r < k { values[r] } else { 0.0 };
                    derivs[r] = (lower - upper) / h;
                }
            }
            left[j] = x - self.knot(span + 1 - j);
            right[j] = self.knot(span + j) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        span - k
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// All `N` basis values at `x`; `x` is clamped into the grid domain.
pub fn bspline_basis(grid: &SplineGrid, x: f64) -> Vec<f64> {
    let k = grid.degree;
    let mut vals = vec![0.0; k + 1];
    let mut ders = vec![0.0; k + 1];
    let first = grid.local_basis(grid.clamp(x), &mut vals, &mut ders);
    let mut out = vec![0.0; grid.num_basis()];
    out[first..first + k + 1].copy_from_slice(&vals);
    out
}

/// One Kolmogorov–Arnold layer. Spline coefficients are stored as an
/// `[out × in·N]` matrix: row `q`, block `p` holds edge `(q, p)`.
#[derive(Clone, Debug)]
pub struct KanLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub grid: SplineGrid,
    pub base: Activation,
    pub coeffs: ParamId,
    pub base_weight: ParamId,
    pub spline_weight: ParamId,
}

impl KanLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        grid: SplineGrid,
        base: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let n = grid.num_basis();
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let coeffs: Vec<f64> = (0..out_dim * in_dim * n).map(|_| normal.sample(rng)).collect();
        let coeffs = store.add(
            format!("{prefix}.coeffs"),
            Tensor::new(&[out_dim, in_dim * n], coeffs)?,
        );
        let base_weight = store.add(
            format!("{prefix}.base_weight"),
            init_params(&[out_dim, in_dim], in_dim, rng)?,
        );
        let spline_weight = store.add(
            format!("{prefix}.spline_weight"),
            Tensor::new(&[out_dim, in_dim], vec![1.0; out_dim * in_dim])?,
        );
        Ok(Self {
            in_dim,
            out_dim,
            grid,
            base,
            coeffs,
            base_weight,
            spline_weight,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let (batch, width) = tape.dims(x);
        if width != self.in_dim {
            return Err(Error::Dimension {
                op: "kan_layer_forward",
                lhs: tape.shape(x).to_vec(),
                rhs: vec![batch, self.in_dim],
            });
        }
        let (n_in, n_out, k) = (self.in_dim, self.out_dim, self.grid.degree);
        let nb = self.grid.num_basis();
        let xs = tape.value(x);

        let mut base_out = vec![0.0; batch * n_in];
        let mut base_der = vec![0.0; batch * n_in];
        let mut phi = vec![0.0; batch * n_in * nb];
        let mut dphi = vec![0.0; batch * n_in * nb];
        let mut vals = vec![0.0; k + 1];
        let mut ders = vec![0.0; k + 1];
        for (idx, &xv) in xs.iter().enumerate() {
            base_out[idx] = self.base.eval(xv);
            base_der[idx] = self.base.derivative(xv);
            let inside = xv >= self.grid.lo && xv <= self.grid.hi;
            let first = self.grid.local_basis(self.grid.clamp(xv), &mut vals, &mut ders);
            let off = idx * nb + first;
            phi[off..off + k + 1].copy_from_slice(&vals);
            if inside {
                dphi[off..off + k + 1].copy_from_slice(&ders);
            }
        }

        let coeffs = tape.value(p.get(self.coeffs)).to_vec();
        let w_base = tape.value(p.get(self.base_weight)).to_vec();
        let w_spline = tape.value(p.get(self.spline_weight)).to_vec();
        let mut effective = coeffs.clone();
        for (q, row) in effective.chunks_mut(n_in * nb).enumerate() {
            for (pi, block) in row.chunks_mut(nb).enumerate() {
                let s = w_spline[q * n_in + pi];
                block.iter_mut().for_each(|c| *c *= s);
            }
        }

        let mut out = vec![0.0; batch * n_out];
        gemm(batch, n_in, n_out, &base_out, false, &w_base, true, &mut out, 0.0);
        gemm(batch, n_in * nb, n_out, &phi, false, &effective, true, &mut out, 1.0);

        let rule = KanBackward {
            batch,
            n_in,
            n_out,
            nb,
            base_out,
            base_der,
            phi,
            dphi,
            coeffs,
            effective,
            w_base,
            w_spline,
        };
        tape.custom(
            &[
                x,
                p.get(self.coeffs),
                p.get(self.base_weight),
                p.get(self.spline_weight),
            ],
            &[batch, n_out],
            out,
            Box::new(rule),
        )
    }
}

struct KanBackward {
    batch: usize,
    n_in: usize,
    n_out: usize,
    nb: usize,
    base_out: Vec<f64>,
    base_der: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    coeffs: Vec<f64>,
    effective: Vec<f64>,
    w_base: Vec<f64>,
    w_spline: Vec<f64>,
}

impl CustomBackward for KanBackward {
    fn backward(&self, g: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let (b, n_in, n_out, nb) = (self.batch, self.n_in, self.n_out, self.nb);
        let wide = n_in * nb;

        let d_x = needs[0].then(|| {
            let mut via_base = vec![0.0; b * n_in];
            gemm(b, n_out, n_in, g, false, &self.w_base, false, &mut via_base, 0.0);
            let mut via_spline = vec![0.0; b * wide];
            gemm(b, n_out, wide, g, false, &self.effective, false, &mut via_spline, 0.0);
            let mut dx = vec![0.0; b * n_in];
            for (idx, d) in dx.iter_mut().enumerate() {
                let s: f64 = self.dphi[idx * nb..(idx + 1) * nb]
                    .iter()
                    .zip(&via_spline[idx * nb..(idx + 1) * nb])
                    .map(|(a, c)| a * c)
                    .sum();
                *d = self.base_der[idx] * via_base[idx] + s;
            }
            dx
        });

        let d_effective = (needs[1] || needs[3]).then(|| {
            let mut de = vec![0.0; n_out * wide];
            gemm(n_out, b, wide, g, true, &self.phi, false, &mut de, 0.0);
            de
        });

        let d_coeffs = match (needs[1], &d_effective) {
            (true, Some(de)) => {
                let mut dc = de.clone();
                for (q, row) in dc.chunks_mut(wide).enumerate() {
                    for (pi, block) in row.chunks_mut(nb).enumerate() {
                        let s = self.w_spline[q * n_in + pi];
                        block.iter_mut().for_each(|c| *c *= s);
                    }
                }
                Some(dc)
            }
            _ => None,
        };

        let d_base = needs[2].then(|| {
            let mut dw = vec![0.0; n_out * n_in];
            gemm(n_out, b, n_in, g, true, &self.base_out, false, &mut dw, 0.0);
            dw
        });

        let d_spline = match (needs[3], &d_effective) {
            (true, Some(de)) => {
                let mut ds = vec![0.0; n_out * n_in];
                for (e, d) in ds.iter_mut().enumerate() {
                    let range = e * nb..(e + 1) * nb;
                    *d = self.coeffs[range.clone()]
                        .iter()
                        .zip(&de[range])
                        .map(|(c, g)| c * g)
                        .sum();
                }
                Some(ds)
            }
            _ => None,
        };

        vec![d_x, d_coeffs, d_base, d_spline]
    }
}

/// Composition of KAN layers; the final width is the forecast width.
#[derive(Clone, Debug)]
pub struct KanNetwork {
    pub layers: Vec<KanLayer>,
    pub widths: Vec<usize>,
}

impl KanNetwork {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        widths: &[usize],
        grid: &SplineGrid,
        base: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(contract(format!(
                "kan widths need at least two positive entries, got {widths:?}"
            )));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                KanLayer::new(
                    store,
                    &format!("{prefix}.layer{i}"),
                    w[0],
                    w[1],
                    grid.clone(),
                    base,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            widths: widths.to_vec(),
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        self.layers
            .iter()
            .try_fold(x, |h, layer| layer.forward(tape, p, h))
    }
}
