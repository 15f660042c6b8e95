//! Synthetic design matrices and labels for desk-scale experiments.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{dot, norm, DenseMatrix};
use crate::rng::stream;

/// Multiplier applied to the heavy rows of a [`Distribution::Coherent`] matrix.
pub const HEAVY_ROW_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// i.i.d. standard normal entries.
    GaussianIid,
    /// Gaussian entries with column `j` scaled by `decay^j`.
    Spiked { decay: f64 },
    /// Unit-norm Gaussian rows, of which `heavy_rows` are scaled by [`HEAVY_ROW_SCALE`].
    Coherent { heavy_rows: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelRule {
    /// `y = +1` with probability `sigmoid(a^T beta)`, else `-1`.
    Logistic,
    /// `y = a^T beta + noise * N(0, 1)`.
    Linear { noise: f64 },
}

/// The `n = 2d` matrix whose leverage scores are `(1/4, 3/4, 1/2, ..., 1/2)`
/// and whose Gram matrix is the identity.
///
/// Rows 0 and 1 point along `e_0` with squared norms 1/4 and 3/4; every
/// other coordinate gets two rows `e_j / sqrt(2)`.
pub fn counterexample_matrix(d: usize) -> DenseMatrix {
    assert!(d >= 2, "counterexample needs d >= 2");
    let mut a = DenseMatrix::zeros(2 * d, d);
    a[(0, 0)] = 0.5;
    a[(1, 0)] = 3f64.sqrt() / 2.0;
    for j in 1..d {
        a[(2 * j, j)] = std::f64::consts::FRAC_1_SQRT_2;
        a[(2 * j + 1, j)] = std::f64::consts::FRAC_1_SQRT_2;
    }
    a
}

pub fn gaussian(n: usize, d: usize, seed: u64) -> DenseMatrix {
    let mut rng = stream(seed, 0);
    DenseMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

pub fn generate(n: usize, d: usize, dist: Distribution, seed: u64) -> DenseMatrix {
    match dist {
        Distribution::GaussianIid => gaussian(n, d, seed),
        Distribution::Spiked { decay } => {
            let mut a = gaussian(n, d, seed);
            for i in 0..n {
                let mut s = 1.0;
                for v in a.row_mut(i) {
                    *v *= s;
                    s *= decay;
                }
            }
            a
        }
        Distribution::Coherent { heavy_rows } => {
            let mut a = gaussian(n, d, seed);
            for i in 0..n {
                let r = norm(a.row(i));
                a.row_mut(i).iter_mut().for_each(|v| *v /= r);
            }
            let mut rng = stream(seed, 1);
            for i in sample(&mut rng, n, heavy_rows.min(n)) {
                a.row_mut(i).iter_mut().for_each(|v| *v *= HEAVY_ROW_SCALE);
            }
            a
        }
    }
}

/// Labels drawn from a planted model with `beta ~ N(0, I/mean_row_norm^2)`.
pub fn labels(a: &DenseMatrix, rule: LabelRule, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 2);
    let mean_sq = a.row_norms_sq().iter().sum::<f64>() / a.rows().max(1) as f64;
    let scale = if mean_sq > 0.0 {
        1.0 / mean_sq.sqrt()
    } else {
        1.0
    };
    let beta: Vec<f64> = (0..a.cols())
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (0..a.rows())
        .map(|i| {
            let z = dot(a.row(i), &beta);
            match rule {
                LabelRule::Logistic => {
                    let p = 1.0 / (1.0 + (-4.0 * z).exp());
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        -1.0
                    }
                }
                LabelRule::Linear { noise } => z + noise * rng.sample::<f64, _>(StandardNormal),
            }
        })
        .collect()
}
