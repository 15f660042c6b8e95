//! Fast Walsh-Hadamard transform and the subsampled randomized Hadamard
//! transform (SRHT) sketch `S H_n D_n A / sqrt(n)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SymmetricPsd};
use crate::rng::{stream, StreamRng};
use crate::sampling::{draw_with_rng, exact_leverage_scores, SamplingPlan, SketchDraw};

/// In-place unnormalized Walsh-Hadamard transform (Sylvester ordering).
pub fn fwht_inplace(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = a + b;
                *y = a - b;
            }
        }
        h *= 2;
    }
    Ok(())
}

pub fn fwht(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_inplace(&mut out)?;
    Ok(out)
}

/// One realized SRHT: Rademacher signs plus a uniform row sample of the
/// padded, rotated matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SrhtDraw {
    signs: Vec<f64>,
    sample: SketchDraw,
    n_original: usize,
}

impl SrhtDraw {
    pub fn new(n: usize, m: usize, seed: u64) -> Result<Self> {
        Self::with_rng(n, m, &mut stream(seed, 0))
    }

    pub fn with_rng(n: usize, m: usize, rng: &mut StreamRng) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("SRHT of an empty matrix".into()));
        }
        let n_padded = n.next_power_of_two();
        let signs = (0..n_padded)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let sample = draw_with_rng(&SamplingPlan::uniform(n_padded, 0.0), m, rng)?;
        Ok(Self {
            signs,
            sample,
            n_original: n,
        })
    }

    /// Caller-chosen signs and sample; `signs.len()` fixes the padded size.
    pub fn from_parts(signs: Vec<f64>, sample: SketchDraw, n_original: usize) -> Result<Self> {
        if !signs.len().is_power_of_two() || signs.len() < n_original {
            return Err(Error::NotPowerOfTwo(signs.len()));
        }
        if let Some(&i) = sample.indices().iter().find(|&&i| i >= signs.len()) {
            return Err(Error::IndexOutOfRange {
                index: i,
                rows: signs.len(),
            });
        }
        Ok(Self {
            signs,
            sample,
            n_original,
        })
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn sample(&self) -> &SketchDraw {
        &self.sample
    }

    pub fn n_original(&self) -> usize {
        self.n_original
    }

    pub fn n_padded(&self) -> usize {
        self.signs.len()
    }

    pub fn m(&self) -> usize {
        self.sample.m()
    }

    pub(crate) fn with_sample(&self, sample: SketchDraw) -> Self {
        Self {
            signs: self.signs.clone(),
            sample,
            n_original: self.n_original,
        }
    }
}

/// `H_n D_n A / sqrt(n)` with `A` zero-padded to `n = signs.len()` rows.
pub fn rotate(signs: &[f64], a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = signs.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    if a.rows() > n {
        return Err(Error::DimensionMismatch(format!(
            "{} rows do not fit in a transform of size {n}",
            a.rows()
        )));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = DenseMatrix::zeros(n, a.cols());
    let mut col = vec![0.0; n];
    for j in 0..a.cols() {
        col.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..a.rows() {
            col[i] = signs[i] * a[(i, j)];
        }
        fwht_inplace(&mut col)?;
        for (i, &v) in col.iter().enumerate() {
            out[(i, j)] = v * scale;
        }
    }
    Ok(out)
}

/// The SRHT sketch `S H_n D_n A / sqrt(n)`, an `m x d` matrix with
/// `E[S^T S] = I`, so `E[A~^T A~] = A^T A`.
pub fn srht_apply(draw: &SrhtDraw, a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != draw.n_original {
        return Err(Error::DimensionMismatch(format!(
            "SRHT drawn for {} rows, matrix has {}",
            draw.n_original,
            a.rows()
        )));
    }
    let rotated = rotate(&draw.signs, a)?;
    crate::sampling::apply_sketch(&draw.sample, &rotated)
}

/// Ridge leverage scores of the rotated matrix `H_n D_n A / sqrt(n)`.
pub fn rotated_leverage_scores(
    a: &DenseMatrix,
    c: &SymmetricPsd,
    signs: &[f64],
) -> Result<Vec<f64>> {
    exact_leverage_scores(&rotate(signs, a)?, c)
}
