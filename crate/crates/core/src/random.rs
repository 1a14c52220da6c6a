//! Seeded random matrices for tests, benchmarks and synthetic data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{SpdMatrix, SymMatrix};

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// SPD matrix `Q diag(λ) Qᵀ` with `ln λ` uniform so that the condition number is at most `max_cond`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, dim: usize, max_cond: f64) -> SpdMatrix {
    let half = 0.5 * max_cond.max(1.0).ln();
    let centre: f64 = rng.random_range(-1.0..1.0);
    let values = DVector::from_fn(dim, |_, _| {
        let u: f64 = if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        };
        (centre + u).exp()
    });
    let q = random_orthogonal(rng, dim);
    SpdMatrix::from_spectrum(values, q).expect("positive spectrum gives an SPD matrix")
}

/// Symmetric matrix with i.i.d. standard normal upper triangle.
pub fn random_sym<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> SymMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    SymMatrix::from_matrix(&g + g.transpose()).expect("finite")
}

/// Invertible matrix `U diag(s) Vᵀ` with singular values in `[1/spread, spread]`.
pub fn random_invertible<R: Rng + ?Sized>(rng: &mut R, dim: usize, spread: f64) -> DMatrix<f64> {
    let u = random_orthogonal(rng, dim);
    let v = random_orthogonal(rng, dim);
    let lo = -spread.ln();
    let s = DVector::from_fn(dim, |_, _| rng.random_range(lo..=-lo).exp());
    u * DMatrix::from_diagonal(&s) * v.transpose()
}
