//! Affine-invariant and Log-Euclidean geometry on the SPD manifold.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{
    check_dims, floored_ln, frob_norm, log_floor, matrix_exp, matrix_log, matrix_pow,
    symmetrize_in_place, sym_eig, trace_product, LogPolicy, SpdMatrix, SymMatrix,
};

/// Entrywise tolerance under which two base points count as the same point.
pub const BASE_POINT_TOL: f64 = 1e-12;

/// A symmetric direction `u` attached to a base point `P`.
#[derive(Clone, Debug)]
pub struct TangentVector {
    at: SpdMatrix,
    vec: SymMatrix,
}

impl TangentVector {
    pub fn new(at: SpdMatrix, vec: SymMatrix) -> Result<Self> {
        check_dims(at.dim(), vec.dim())?;
        Ok(TangentVector { at, vec })
    }

    pub fn base(&self) -> &SpdMatrix {
        &self.at
    }

    pub fn direction(&self) -> &SymMatrix {
        &self.vec
    }
}

/// Affine-invariant inner product `tr(P⁻¹ u P⁻¹ v)`.
pub fn airm_inner(u: &TangentVector, v: &TangentVector) -> Result<f64> {
    check_dims(u.at.dim(), v.at.dim())?;
    if u.at.as_sym().max_abs_diff(v.at.as_sym()) > BASE_POINT_TOL {
        return Err(Error::BasePointMismatch);
    }
    let p_inv = matrix_pow(&u.at, -1.0)?;
    let a = p_inv.as_matrix() * u.vec.as_matrix();
    let b = p_inv.as_matrix() * v.vec.as_matrix();
    // tr(AB) = Σ a_ij b_ji
    Ok(a.dot(&b.transpose()))
}

/// Fixed first argument of the AIRM distance.
///
/// Holds `X^{-1/2}`, so each distance to a new `Y` costs one congruence
/// `X^{-1/2} Y X^{-1/2}` and one eigendecomposition.
#[derive(Clone, Debug)]
pub struct AirmAnchor {
    inv_sqrt: DMatrix<f64>,
}

impl AirmAnchor {
    pub fn new(x: &SpdMatrix) -> Result<Self> {
        let inv_sqrt = matrix_pow(x, -0.5)?;
        Ok(AirmAnchor {
            inv_sqrt: inv_sqrt.as_matrix().clone(),
        })
    }

    /// Rebuilds an anchor from a stored `X^{-1/2}`.
    pub fn from_inv_sqrt(inv_sqrt: DMatrix<f64>) -> Self {
        AirmAnchor { inv_sqrt }
    }

    pub fn inv_sqrt_matrix(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }

    pub fn dim(&self) -> usize {
        self.inv_sqrt.nrows()
    }

    pub fn distance_to(&self, y: &SpdMatrix) -> Result<f64> {
        check_dims(self.dim(), y.dim())?;
        let mut m = &self.inv_sqrt * y.as_matrix() * &self.inv_sqrt;
        symmetrize_in_place(&mut m);
        let eig = sym_eig(&SymMatrix::from_symmetric(m))?;
        let floor = log_floor(eig.max());
        let mut sum = 0.0;
        for &v in eig.eigenvalues.iter() {
            let l = floored_ln(v, floor, LogPolicy::Clamp)?;
            sum += l * l;
        }
        Ok(sum.sqrt())
    }
}

/// `‖log(X^{-1/2} Y X^{-1/2})‖_F`.
pub fn airm_distance(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_dims(x.dim(), y.dim())?;
    AirmAnchor::new(x)?.distance_to(y)
}

/// `‖log X − log Y‖_F`.
pub fn lem_distance(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_dims(x.dim(), y.dim())?;
    Ok(frob_norm(&matrix_log(x)?.sub(&matrix_log(y)?)?))
}

/// Log-Euclidean group product `exp(log X + log Y)`.
pub fn lie_multiply(x: &SpdMatrix, y: &SpdMatrix) -> Result<SpdMatrix> {
    check_dims(x.dim(), y.dim())?;
    matrix_exp(&matrix_log(x)?.add(&matrix_log(y)?)?)
}

/// Log-Euclidean scalar multiplication `exp(t log X) = X^t`.
pub fn lie_scale(t: f64, x: &SpdMatrix) -> Result<SpdMatrix> {
    matrix_pow(x, t)
}

/// Log-Euclidean inner product `tr(log X log Y)`.
pub fn loge_inner(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64> {
    check_dims(x.dim(), y.dim())?;
    trace_product(&matrix_log(x)?, &matrix_log(y)?)
}
