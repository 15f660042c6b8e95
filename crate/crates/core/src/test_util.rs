use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{DenseMatrix, SymmetricPsd};
use crate::rng::rng_from_seed;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_from_seed(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// `Q diag(lambda) Q^T` with eigenvalues log-spaced on `[1, cond]`.
pub fn random_spd(n: usize, cond: f64, seed: u64) -> SymmetricPsd {
    let g = random_matrix(n, n, seed);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = g.column(j);
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        q.push(v);
    }
    let lambda: Vec<f64> = (0..n)
        .map(|k| {
            let t = if n > 1 {
                k as f64 / (n - 1) as f64
            } else {
                0.0
            };
            cond.powf(t)
        })
        .collect();
    let dense = DenseMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| q[k][i] * lambda[k] * q[k][j]).sum()
    });
    SymmetricPsd::from_dense(&dense).unwrap()
}
