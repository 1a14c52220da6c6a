//! Dense symmetric linear algebra.
//!
//! Every matrix function here (log, exp, real powers) goes through a single
//! symmetric eigendecomposition `M = V diag(λ) Vᵀ` and is applied to the
//! spectrum. The eigensolver is nalgebra's Householder tridiagonalization
//! followed by implicit symmetric QR, so spectra are real and eigenvectors
//! orthogonal by construction.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative bound on `‖V diag(λ) Vᵀ − M‖_F / ‖M‖_F`.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;
/// Max-abs bound on the entries of `VᵀV − I`.
pub const ORTH_TOL: f64 = 1e-10;
/// Relative bound for `exp(log P) ≈ P` and friends.
pub const ROUNDTRIP_TOL: f64 = 1e-8;
/// Eigenvalues below `EIG_CLAMP_REL · λ_max` are clamped (or rejected) by [`matrix_log`].
pub const EIG_CLAMP_REL: f64 = 1e-12;
/// Largest eigenvalue accepted by [`matrix_exp`].
pub const EXP_ARG_CAP: f64 = 700.0;

/// Dense real symmetric matrix. Symmetry is exact: construction replaces
/// `m[i][j]` and `m[j][i]` by their average.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn from_matrix(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        symmetrize_in_place(&mut m);
        Ok(SymMatrix(m))
    }

    /// Builds a matrix from `dim * dim` values in row-major order.
    pub fn from_row_major(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: values.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, values))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    /// Wraps a matrix the caller has already made exactly symmetric and finite.
    pub(crate) fn from_symmetric(m: DMatrix<f64>) -> Self {
        debug_assert!(m.is_square());
        SymMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Entries in row-major order (equal to column-major, by symmetry).
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(SymMatrix(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(SymMatrix(&self.0 - &other.0))
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{}", self.0)
    }
}

pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `M = V diag(λ) Vᵀ` with eigenvalues ascending and eigenvectors in the columns of `V`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// `V diag(f(λ)) Vᵀ`, symmetrized exactly.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        self.with_spectrum(&self.eigenvalues.map(f))
    }

    /// `V diag(values) Vᵀ` for a replacement spectrum in the same order.
    pub fn with_spectrum(&self, values: &DVector<f64>) -> SymMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= values[j];
        }
        let mut out = scaled * self.eigenvectors.transpose();
        symmetrize_in_place(&mut out);
        SymMatrix::from_symmetric(out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map_spectrum(|l| l)
    }

    /// Max-abs entry of `VᵀV − I`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.dim();
        let gram = self.eigenvectors.transpose() * &self.eigenvectors;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    fn sorted(values: DVector<f64>, vectors: DMatrix<f64>) -> Self {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return EigenDecomposition {
                eigenvalues: values,
                eigenvectors: vectors,
            };
        }
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&j| values[j]));
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
        EigenDecomposition {
            eigenvalues,
            eigenvectors,
        }
    }
}

/// Symmetric eigendecomposition, eigenvalues ascending.
///
/// Implicit QR (via nalgebra) followed by a Jacobi clean-up of `Vᵀ A V`. The
/// QR stage can mis-rotate eigenvectors of nearly equal eigenvalues by far
/// more than roundoff; the clean-up rotates away any off-diagonal entry above
/// the roundoff floor, which restores accurate matrix functions.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenDecomposition> {
    let dim = m.dim();
    let max_iter = 64 * dim.max(16);
    let eig = nalgebra::SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, max_iter)
        .ok_or(Error::NumericalFailure { dim })?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure { dim });
    }
    let (values, vectors) = jacobi_refine(m.as_matrix(), eig.eigenvectors)?;
    Ok(EigenDecomposition::sorted(values, vectors))
}

const JACOBI_MAX_SWEEPS: usize = 16;

fn jacobi_refine(a: &DMatrix<f64>, mut v: DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mut b = v.transpose() * (a * &v);
    symmetrize_in_place(&mut b);
    let scale = b.diagonal().amax();
    let floor = n as f64 * f64::EPSILON * scale;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for q in 1..n {
            for p in 0..q {
                let bpq = b[(p, q)];
                if bpq.abs() <= floor {
                    continue;
                }
                rotated = true;
                let theta = (b[(q, q)] - b[(p, p)]) / (2.0 * bpq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    let (kp, kq) = (b[(k, p)], b[(k, q)]);
                    b[(k, p)] = c * kp - s * kq;
                    b[(k, q)] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (b[(p, k)], b[(q, k)]);
                    b[(p, k)] = c * pk - s * qk;
                    b[(q, k)] = s * pk + c * qk;
                }
                b[(p, q)] = 0.0;
                b[(q, p)] = 0.0;
                for k in 0..n {
                    let (kp, kq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * kp - s * kq;
                    v[(k, q)] = s * kp + c * kq;
                }
            }
        }
        if !rotated {
            let values = b.diagonal();
            if values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalFailure { dim: n });
            }
            return Ok((values, v));
        }
    }
    Err(Error::NumericalFailure { dim: n })
}

/// Symmetric positive definite matrix: a point of the SPD manifold.
///
/// Construction certifies positive definiteness with an eigendecomposition,
/// which is kept so that later matrix functions of the same point do not
/// decompose it again.
#[derive(Clone)]
pub struct SpdMatrix {
    base: SymMatrix,
    eig: Arc<EigenDecomposition>,
}

impl SpdMatrix {
    pub fn new(m: SymMatrix) -> Result<Self> {
        let eig = sym_eig(&m)?;
        Self::certify(m, eig)
    }

    pub fn from_row_major(dim: usize, values: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_row_major(dim, values)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag)?)
    }

    pub fn identity(dim: usize) -> Self {
        SpdMatrix {
            base: SymMatrix::identity(dim),
            eig: Arc::new(EigenDecomposition {
                eigenvalues: DVector::from_element(dim, 1.0),
                eigenvectors: DMatrix::identity(dim, dim),
            }),
        }
    }

    /// Builds the matrix `V diag(λ) Vᵀ` from a spectrum that is already known.
    pub(crate) fn from_spectrum(values: DVector<f64>, vectors: DMatrix<f64>) -> Result<Self> {
        let eig = EigenDecomposition::sorted(values, vectors);
        let base = eig.reconstruct();
        Self::certify(base, eig)
    }

    fn certify(base: SymMatrix, eig: EigenDecomposition) -> Result<Self> {
        let min_eig = eig.min();
        // pd floor is exactly zero
        if !(min_eig > 0.0) || !eig.max().is_finite() {
            return Err(Error::NotPositiveDefinite { min_eig });
        }
        Ok(SpdMatrix {
            base,
            eig: Arc::new(eig),
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.base.as_matrix()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.base.get(i, j)
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    /// Smallest eigenvalue observed when the matrix was certified.
    pub fn min_eig_certified(&self) -> f64 {
        self.eig.min()
    }

    /// `c · P` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::invalid(format!("scale factor {c} must be positive")));
        }
        Ok(SpdMatrix {
            base: self.base.scaled(c),
            eig: Arc::new(EigenDecomposition {
                eigenvalues: &self.eig.eigenvalues * c,
                eigenvectors: self.eig.eigenvectors.clone(),
            }),
        })
    }
}

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpdMatrix{}", self.base.as_matrix())
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
    }
}

impl From<SpdMatrix> for SymMatrix {
    fn from(p: SpdMatrix) -> Self {
        p.base
    }
}

/// What [`matrix_log`] does with eigenvalues below `EIG_CLAMP_REL · λ_max`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LogPolicy {
    #[default]
    Clamp,
    Reject,
}

pub(crate) fn log_floor(max_eig: f64) -> f64 {
    EIG_CLAMP_REL * max_eig
}

/// Applies the floor policy to a single eigenvalue and returns its logarithm.
pub(crate) fn floored_ln(value: f64, floor: f64, policy: LogPolicy) -> Result<f64> {
    if value > floor {
        return Ok(value.ln());
    }
    match policy {
        LogPolicy::Clamp if floor > 0.0 => Ok(floor.ln()),
        _ => Err(Error::EigenvalueBelowFloor { value, floor }),
    }
}

/// Principal matrix logarithm of an SPD matrix, clamping tiny eigenvalues.
pub fn matrix_log(p: &SpdMatrix) -> Result<SymMatrix> {
    matrix_log_with(p, LogPolicy::Clamp)
}

pub fn matrix_log_with(p: &SpdMatrix, policy: LogPolicy) -> Result<SymMatrix> {
    let eig = p.eigen();
    let floor = log_floor(eig.max());
    let logs = eig
        .eigenvalues
        .iter()
        .map(|&v| floored_ln(v, floor, policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(eig.with_spectrum(&DVector::from_vec(logs)))
}

/// Matrix exponential of a symmetric matrix; always SPD unless it over- or underflows.
pub fn matrix_exp(m: &SymMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(m)?;
    let top = eig.max();
    if top > EXP_ARG_CAP {
        return Err(Error::Overflow {
            value: top,
            cap: EXP_ARG_CAP,
        });
    }
    let values = eig.eigenvalues.map(f64::exp);
    SpdMatrix::from_spectrum(values, eig.eigenvectors)
}

/// `P^t` through the spectrum of `P`.
pub fn matrix_pow(p: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    if !t.is_finite() {
        return Err(Error::invalid(format!("exponent {t} is not finite")));
    }
    let eig = p.eigen();
    let floor = log_floor(eig.max());
    let integral = t.fract() == 0.0;
    let mut values = DVector::zeros(eig.dim());
    for (out, &v) in values.iter_mut().zip(eig.eigenvalues.iter()) {
        let base = if integral || v > floor {
            v
        } else {
            floored_ln(v, floor, LogPolicy::Clamp)?.exp()
        };
        let powed = base.powf(t);
        if !powed.is_finite() {
            return Err(Error::Overflow {
                value: t * base.ln(),
                cap: EXP_ARG_CAP,
            });
        }
        *out = powed;
    }
    SpdMatrix::from_spectrum(values, eig.eigenvectors.clone())
}

pub fn frob_norm(m: &SymMatrix) -> f64 {
    m.as_matrix().norm()
}

/// `tr(A B)`, which for symmetric inputs is the entrywise dot product.
pub fn trace_product(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(a.as_matrix().dot(b.as_matrix()))
}
