//! Dense real linear algebra: row-major matrices, Cholesky solves, cyclic
//! Jacobi eigendecomposition and the PSD-order error measure.

use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative tolerance used when checking symmetry on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest eigenvalue allowed relative to the largest for a numerically PSD matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Cholesky pivots must exceed this multiple of `trace / dim`.
pub const PIVOT_TOL: f64 = 1e-14;
/// Off-diagonal Frobenius threshold for the Jacobi sweeps, relative to the input norm.
pub const JACOBI_TOL: f64 = 1e-12;
pub const DEFAULT_POWER_ITERS: usize = 10_000;

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in self.row(i).iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += aik * b;
                }
            }
        }
        Ok(out)
    }

    /// `A v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `A^T v`.
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "t_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        out
    }

    pub fn scaled(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::DimensionMismatch("sub".into()));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| dot(self.row(i), self.row(i)))
            .collect()
    }

    /// `sum_s weights[s]^2 a_{rows[s]} a_{rows[s]}^T` without forming the
    /// sketched matrix.
    pub fn weighted_row_gram(&self, rows: &[usize], weights: &[f64]) -> Result<SymmetricPsd> {
        if rows.len() != weights.len() {
            return Err(Error::DimensionMismatch(
                "rows and weights differ in length".into(),
            ));
        }
        let d = self.cols;
        let mut acc = vec![0.0; d * d];
        for (&i, &w) in rows.iter().zip(weights) {
            if i >= self.rows {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    rows: self.rows,
                });
            }
            accumulate_outer(&mut acc, d, self.row(i), w * w);
        }
        Ok(SymmetricPsd::from_upper(d, acc))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

// Upper triangle only; `SymmetricPsd::from_upper` mirrors it.
fn accumulate_outer(acc: &mut [f64], d: usize, row: &[f64], scale: f64) {
    for j in 0..d {
        let rj = scale * row[j];
        if rj == 0.0 {
            continue;
        }
        let dst = &mut acc[j * d + j..(j + 1) * d];
        for (o, &rk) in dst.iter_mut().zip(&row[j..]) {
            *o += rj * rk;
        }
    }
}

/// Dense symmetric matrix. Symmetry is enforced on construction; positive
/// semi-definiteness is checked on demand with [`SymmetricPsd::validate_psd`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPsd {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricPsd {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        let m = DenseMatrix::new(dim, dim, data)?;
        Self::from_dense(&m)
    }

    pub fn from_dense(m: &DenseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::DimensionMismatch(
                "symmetric matrix must be square".into(),
            ));
        }
        let n = m.rows();
        let scale = m
            .data()
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        // Average away sub-tolerance asymmetry so downstream code sees exact symmetry.
        let mut data = m.data().to_vec();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = avg;
                data[j * n + i] = avg;
            }
        }
        Ok(Self { dim: n, data })
    }

    /// Mirrors the upper triangle of `data` into the lower triangle.
    pub(crate) fn from_upper(dim: usize, mut data: Vec<f64>) -> Self {
        for i in 0..dim {
            for j in 0..i {
                data[i * dim + j] = data[j * dim + i];
            }
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self::diagonal(&vec![s; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in diag.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self { dim: n, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    pub fn add(&self, other: &SymmetricPsd) -> Result<SymmetricPsd> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &SymmetricPsd) -> Result<SymmetricPsd> {
        self.add(&other.scaled(-1.0))
    }

    pub fn scaled(&self, s: f64) -> SymmetricPsd {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "matvec dimension mismatch");
        self.data.chunks(self.dim).map(|row| dot(row, v)).collect()
    }

    /// `v^T M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.matvec(v))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Fails with `NotPositiveDefinite` (naming the offending eigenvalue
    /// index) when the smallest eigenvalue is below `-PSD_TOL * largest`.
    pub fn validate_psd(&self) -> Result<()> {
        let eig = symmetric_eigen(self);
        let largest = eig.values.last().copied().unwrap_or(0.0).max(0.0);
        match eig.values.first() {
            Some(&smallest) if smallest < -PSD_TOL * largest => {
                Err(Error::NotPositiveDefinite { pivot: 0 })
            }
            _ => Ok(()),
        }
    }
}

/// `A^T A`.
pub fn gram(a: &DenseMatrix) -> SymmetricPsd {
    let d = a.cols();
    let mut acc = vec![0.0; d * d];
    for i in 0..a.rows() {
        accumulate_outer(&mut acc, d, a.row(i), 1.0);
    }
    SymmetricPsd::from_upper(d, acc)
}

/// Lower-triangular Cholesky factor `L` with `L L^T = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangularFactor {
    dim: usize,
    data: Vec<f64>,
}

pub fn cholesky(m: &SymmetricPsd) -> Result<LowerTriangularFactor> {
    let n = m.dim();
    let threshold = if n == 0 {
        0.0
    } else {
        PIVOT_TOL * m.trace() / n as f64
    };
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = m.get(i, j) - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            if i == j {
                // `!(s > threshold)` also rejects NaN.
                if !(s > threshold) || threshold <= 0.0 {
                    return Err(Error::NotPositiveDefinite { pivot: i });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(LowerTriangularFactor { dim: n, data: l })
}

impl LowerTriangularFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    /// Solves `L z = b` in place.
    pub fn forward_solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.data[i * n..i * n + i];
            let s = b[i] - dot(row, &b[..i]);
            b[i] = s / self.data[i * n + i];
        }
    }

    /// Solves `L^T x = z` in place.
    pub fn backward_solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        for i in (0..n).rev() {
            b[i] /= self.data[i * n + i];
            let bi = b[i];
            for k in 0..i {
                b[k] -= self.data[i * n + k] * bi;
            }
        }
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_solve_in_place(b);
        self.backward_solve_in_place(b);
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_matrix(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, factor has dim {}",
                b.rows(),
                self.dim
            )));
        }
        let bt = b.transpose();
        let mut out = bt.clone();
        for j in 0..bt.rows() {
            self.solve_in_place(out.row_mut(j));
        }
        Ok(out.transpose())
    }

    /// `(L L^T)^{-1}`.
    pub fn inverse(&self) -> SymmetricPsd {
        let n = self.dim;
        // Rows of `linv_t` are columns of L^{-1}.
        let mut linv_t = vec![0.0; n * n];
        for j in 0..n {
            let col = &mut linv_t[j * n..(j + 1) * n];
            col[j] = 1.0;
            self.forward_solve_in_place(col);
        }
        // (L L^T)^{-1} = L^{-T} L^{-1}; entry (i, k) = <L^{-1} e_i, L^{-1} e_k>.
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in i..n {
                let lo = i.max(k);
                out[i * n + k] = dot(
                    &linv_t[i * n + lo..(i + 1) * n],
                    &linv_t[k * n + lo..(k + 1) * n],
                );
            }
        }
        SymmetricPsd::from_upper(n, out)
    }

    /// `a_i^T (L L^T)^{-1} a_i` for every row `a_i` of `a`.
    pub fn row_quadratic_forms(&self, a: &DenseMatrix) -> Vec<f64> {
        assert_eq!(a.cols(), self.dim, "row_quadratic_forms dimension mismatch");
        let mut buf = vec![0.0; self.dim];
        (0..a.rows())
            .map(|i| {
                buf.copy_from_slice(a.row(i));
                self.forward_solve_in_place(&mut buf);
                dot(&buf, &buf)
            })
            .collect()
    }

    /// `L^T X L` for a symmetric `X`.
    pub fn congruence_transpose(&self, x: &SymmetricPsd) -> SymmetricPsd {
        let l = self.to_dense();
        let xl = x.to_dense().matmul(&l).expect("square dims match");
        let out = l.transpose().matmul(&xl).expect("square dims match");
        SymmetricPsd::from_upper(self.dim, out.into_data())
    }
}

/// Solves `M X = B` through a Cholesky factorization of `M`.
pub fn solve_spd(m: &SymmetricPsd, b: &DenseMatrix) -> Result<DenseMatrix> {
    cholesky(m)?.solve_matrix(b)
}

/// Eigenvalues in ascending order; column `k` of `vectors` pairs with `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// `V f(Λ) V^T`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymmetricPsd {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                out[i * n + j] = (0..n)
                    .map(|k| self.vectors[(i, k)] * fv[k] * self.vectors[(j, k)])
                    .sum();
            }
        }
        SymmetricPsd::from_upper(n, out)
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn symmetric_eigen(m: &SymmetricPsd) -> SymmetricEigen {
    let n = m.dim();
    let mut a = m.data().to_vec();
    let mut v = DenseMatrix::identity(n);
    let frob = m.frobenius_norm();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    // Jacobi converges quadratically, so one extra sweep after reaching the
    // threshold polishes the small eigenvalues at negligible cost.
    let mut polished = false;
    for _sweep in 0..100 {
        let off = off_norm(&a);
        if off == 0.0 {
            break;
        }
        if off <= JACOBI_TOL * frob {
            if polished {
                break;
            }
            polished = true;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymmetricEigen { values, vectors }
}

/// Largest `|eigenvalue|` of `m` by power iteration on `M^2`.
///
/// Runs once from the normalized all-ones vector and once from a fixed
/// pseudo-random start (covering starts orthogonal to the top eigenvector),
/// and returns the larger estimate. Each run stops when the Rayleigh residual
/// of `M^2` drops below `tol` relative to the estimate.
pub fn spectral_norm(m: &SymmetricPsd, tol: f64) -> Result<f64> {
    spectral_norm_with_limit(m, tol, DEFAULT_POWER_ITERS)
}

pub fn spectral_norm_with_limit(m: &SymmetricPsd, tol: f64, max_iters: usize) -> Result<f64> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "spectral_norm of an empty matrix".into(),
        ));
    }
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5eed);
    let random: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let a = power_iterate(m, ones, tol, max_iters, &mut rng)?;
    let b = power_iterate(m, random, tol, max_iters, &mut rng)?;
    Ok(a.max(b))
}

fn power_iterate(
    m: &SymmetricPsd,
    mut v: Vec<f64>,
    tol: f64,
    max_iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = m.dim();
    let mut restarts = 0;
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    for _ in 0..max_iters {
        let w = m.matvec(&v);
        let mu2 = dot(&w, &w);
        if mu2 == 0.0 {
            // Start vector in the null space: re-randomize a few times, then
            // conclude the matrix annihilates everything we can reach.
            if restarts < 3 {
                restarts += 1;
                v = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
                let nv = norm(&v);
                v.iter_mut().for_each(|x| *x /= nv);
                continue;
            }
            return Ok(0.0);
        }
        let z = m.matvec(&w);
        let resid: f64 = z
            .iter()
            .zip(&v)
            .map(|(zi, vi)| (zi - mu2 * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if resid <= tol * mu2 {
            return Ok(mu2.sqrt());
        }
        let nz = norm(&z);
        v = z.into_iter().map(|x| x / nz).collect();
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
    })
}

/// Smallest `eps >= 0` with `(1+eps)^{-1} X <= X_hat <= (1+eps) X` in PSD order;
/// `+inf` when `X_hat` has a nonpositive generalized eigenvalue.
pub fn psd_relative_error(x_hat: &SymmetricPsd, x: &SymmetricPsd) -> Result<f64> {
    if x_hat.dim() != x.dim() {
        return Err(Error::DimensionMismatch("psd_relative_error".into()));
    }
    let l = cholesky(x)?;
    // L^{-1} X_hat L^{-T} is similar to X^{-1/2} X_hat X^{-1/2}.
    let n = x.dim();
    let mut tmp = x_hat.to_dense();
    for j in 0..n {
        let mut col = tmp.column(j);
        l.forward_solve_in_place(&mut col);
        for i in 0..n {
            tmp[(i, j)] = col[i];
        }
    }
    for i in 0..n {
        l.forward_solve_in_place(tmp.row_mut(i));
    }
    let sym = SymmetricPsd::from_dense(&symmetrize(&tmp))?;
    let eig = symmetric_eigen(&sym);
    let lo = eig.values[0];
    let hi = eig.values[n - 1];
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((hi - 1.0).max(1.0 / lo - 1.0).max(0.0))
}

fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// `M^{-1/2}` through the eigendecomposition.
pub fn inv_sqrt(m: &SymmetricPsd) -> Result<SymmetricPsd> {
    let eig = symmetric_eigen(m);
    let n = m.dim();
    let threshold = if n == 0 {
        0.0
    } else {
        PIVOT_TOL * m.trace() / n as f64
    };
    if let Some(pos) = eig.values.iter().position(|&v| !(v > threshold)) {
        return Err(Error::NotPositiveDefinite { pivot: pos });
    }
    Ok(eig.map(|v| 1.0 / v.sqrt()))
}

/// `M^{1/2}` for a PSD matrix; tiny negative eigenvalues are clamped to zero.
pub fn sqrt_psd(m: &SymmetricPsd) -> SymmetricPsd {
    symmetric_eigen(m).map(|v| v.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{random_matrix, random_spd};
    use proptest::prelude::*;

    fn naive_gram(a: &DenseMatrix) -> Vec<f64> {
        let d = a.cols();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..a.rows() {
                    out[i * d + j] += a[(k, i)] * a[(k, j)];
                }
            }
        }
        out
    }

    fn nalgebra_eigs(m: &SymmetricPsd) -> Vec<f64> {
        let n = m.dim();
        let na = nalgebra::DMatrix::from_row_slice(n, n, m.data());
        let mut v: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn gram_small_cases() {
        assert_eq!(
            gram(&DenseMatrix::identity(2)).data(),
            &[1.0, 0.0, 0.0, 1.0]
        );
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(gram(&a).data(), &[1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn gram_matches_triple_loop() {
        let a = random_matrix(7, 3, 11);
        let g = gram(&a);
        let oracle = naive_gram(&a);
        for (x, y) in g.data().iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            DenseMatrix::new(2, 2, vec![1.0, f64::NAN, 0.0, 1.0]),
            Err(Error::NonFinite(1))
        ));
        assert!(DenseMatrix::new(2, 2, vec![1.0]).is_err());
        assert_eq!(
            SymmetricPsd::new(2, vec![1.0, 2.0, 0.0, 1.0]),
            Err(Error::NotSymmetric)
        );
    }

    #[test]
    fn cholesky_examples() {
        let l = cholesky(&SymmetricPsd::scaled_identity(3, 4.0)).unwrap();
        assert_eq!(l.to_dense(), DenseMatrix::identity(3).scaled(2.0));

        let l = cholesky(&SymmetricPsd::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap()).unwrap();
        let expected = [2f64.sqrt(), 0.0, 1.0 / 2f64.sqrt(), 1.5f64.sqrt()];
        for (x, y) in l.to_dense().data().iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }

        let singular = SymmetricPsd::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            cholesky(&singular),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        );
        assert!(cholesky(&SymmetricPsd::zeros(2)).is_err());
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = random_spd(9, 1e3, 5);
        let l = cholesky(&m).unwrap().to_dense();
        let llt = l.matmul(&l.transpose()).unwrap();
        let err = llt.sub(&m.to_dense()).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn solve_examples() {
        let b = random_matrix(3, 2, 1);
        let x = solve_spd(&SymmetricPsd::identity(3), &b).unwrap();
        assert_eq!(x, b);

        let m = SymmetricPsd::diagonal(&[2.0, 4.0]);
        let b = DenseMatrix::from_rows(&[vec![2.0], vec![4.0]]).unwrap();
        let x = solve_spd(&m, &b).unwrap();
        assert!(x.data().iter().all(|v| (v - 1.0).abs() < 1e-15));

        let m = random_spd(10, 1e4, 3);
        let b = random_matrix(10, 3, 4);
        let x = solve_spd(&m, &b).unwrap();
        let r = m.to_dense().matmul(&x).unwrap().sub(&b).unwrap();
        assert!(r.frobenius_norm() / b.frobenius_norm() < 1e-8);
    }

    #[test]
    fn inverse_matches_solve() {
        let m = random_spd(6, 50.0, 8);
        let inv = cholesky(&m).unwrap().inverse();
        let prod = m.to_dense().matmul(&inv.to_dense()).unwrap();
        let err = prod
            .sub(&DenseMatrix::identity(6))
            .unwrap()
            .frobenius_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn spectral_norm_examples() {
        let s = spectral_norm(&SymmetricPsd::diagonal(&[1.0, 3.0, 2.0]), 1e-10).unwrap();
        assert!((s - 3.0).abs() < 1e-9);
        let perm = SymmetricPsd::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((spectral_norm(&perm, 1e-10).unwrap() - 1.0).abs() < 1e-9);
        // Top eigenvector orthogonal to the all-ones start.
        let m = SymmetricPsd::new(2, vec![2.0, -1.0, -1.0, 2.0]).unwrap();
        assert!((spectral_norm(&m, 1e-10).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&SymmetricPsd::zeros(3), 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn spectral_norm_random_symmetric() {
        let a = random_matrix(8, 8, 21);
        let s = SymmetricPsd::from_dense(&symmetrize(&a)).unwrap();
        let oracle = nalgebra_eigs(&s)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let est = spectral_norm(&s, 1e-10).unwrap();
        assert!((est - oracle).abs() <= 1e-10 * oracle, "{est} vs {oracle}");
    }

    #[test]
    fn jacobi_matches_nalgebra() {
        let a = random_matrix(12, 12, 2);
        let s = SymmetricPsd::from_dense(&symmetrize(&a)).unwrap();
        let ours = symmetric_eigen(&s);
        for (x, y) in ours.values.iter().zip(nalgebra_eigs(&s)) {
            assert!((x - y).abs() < 1e-11, "{x} vs {y}");
        }
        let back = ours.map(|v| v);
        assert!(back.sub(&s).unwrap().frobenius_norm() < 1e-11);
    }

    #[test]
    fn psd_relative_error_examples() {
        let x = random_spd(4, 10.0, 9);
        assert!(psd_relative_error(&x, &x).unwrap() < 1e-12);
        assert!((psd_relative_error(&x.scaled(2.0), &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((psd_relative_error(&x.scaled(0.5), &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            psd_relative_error(&x.scaled(-1.0), &x).unwrap(),
            f64::INFINITY
        );
        assert!(psd_relative_error(&x, &SymmetricPsd::zeros(4)).is_err());
    }

    #[test]
    fn inv_sqrt_examples() {
        let r = inv_sqrt(&SymmetricPsd::scaled_identity(3, 4.0)).unwrap();
        for (x, y) in r
            .data()
            .iter()
            .zip(SymmetricPsd::scaled_identity(3, 0.5).data())
        {
            assert!((x - y).abs() < 1e-15);
        }
        let r = inv_sqrt(&SymmetricPsd::diagonal(&[1.0, 9.0])).unwrap();
        assert!((r.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((r.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!(inv_sqrt(&SymmetricPsd::diagonal(&[1.0, 0.0])).is_err());

        let m = random_spd(6, 100.0, 12);
        let r = inv_sqrt(&m).unwrap().to_dense();
        let rmr = r.matmul(&m.to_dense()).unwrap().matmul(&r).unwrap();
        assert!(rmr.sub(&DenseMatrix::identity(6)).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn validate_psd_flags_indefinite() {
        assert!(random_spd(5, 10.0, 1).validate_psd().is_ok());
        let indefinite = SymmetricPsd::diagonal(&[1.0, -0.5]);
        assert!(indefinite.validate_psd().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn solve_residual_small(seed in 0u64..10_000, n in 1usize..12, log_cond in 0.0f64..8.0) {
            let m = random_spd(n, 10f64.powf(log_cond), seed);
            let b = random_matrix(n, 2, seed + 1);
            let x = solve_spd(&m, &b).unwrap();
            let r = m.to_dense().matmul(&x).unwrap().sub(&b).unwrap();
            prop_assert!(r.frobenius_norm() / b.frobenius_norm() < 1e-8);
        }

        #[test]
        fn scalar_error_symmetric(seed in 0u64..10_000, c in 0.05f64..20.0) {
            let x = random_spd(4, 30.0, seed);
            let up = psd_relative_error(&x.scaled(c), &x).unwrap();
            let down = psd_relative_error(&x.scaled(1.0 / c), &x).unwrap();
            let expected = c.max(1.0 / c) - 1.0;
            prop_assert!((up - expected).abs() < 1e-9 * (1.0 + expected));
            prop_assert!((down - expected).abs() < 1e-9 * (1.0 + expected));
        }

        #[test]
        fn spectral_norm_matches_dense_eigensolver(seed in 0u64..10_000, n in 1usize..=12) {
            let a = random_matrix(n, n, seed);
            let s = SymmetricPsd::from_dense(&symmetrize(&a)).unwrap();
            let oracle = nalgebra_eigs(&s).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let tol = 1e-8;
            let est = spectral_norm(&s, tol).unwrap();
            prop_assert!((est - oracle).abs() <= tol * oracle.max(1e-300), "{} vs {}", est, oracle);
        }

        #[test]
        fn inv_sqrt_commutes(seed in 0u64..10_000, n in 1usize..10) {
            let m = random_spd(n, 1e4, seed);
            let r = inv_sqrt(&m).unwrap().to_dense();
            let md = m.to_dense();
            let lhs = r.matmul(&md).unwrap();
            let rhs = md.matmul(&r).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().frobenius_norm() < 1e-9 * md.frobenius_norm());
        }
    }
}
