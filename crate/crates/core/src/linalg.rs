//! Truncated SVD, tangent-space projection and the structured rank-`r`
//! projection used inside the solver loop.
//!
//! For a rank-`r` iterate `L = U Σ Vᵀ`, the projection of `A` onto the tangent
//! space of the rank-`r` manifold at `L` is
//!
//! ```text
//! P(A) = [U Q1] [[UᵀAV, R2ᵀ], [R1, 0]] [V Q2]ᵀ
//! ```
//!
//! with `Q1 R1 = (I - UUᵀ) A V` and `Q2 R2 = (I - VVᵀ) Aᵀ U`. Because `[U Q1]`
//! and `[V Q2]` have orthonormal columns, the singular values of `P(A)` are
//! those of the `2r x 2r` middle block, so the best rank-`r` approximation of
//! `P(A)` costs one tiny SVD plus two thin products.

use std::sync::Once;

use nalgebra::{DMatrix, DVector, QR};

use crate::error::{Error, Result};
use crate::DenseMatrix;

/// Rank-`r` factorization `U diag(sigma) Vᵀ` with orthonormal `U`, `V` and
/// non-increasing, nonnegative `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankRBasis {
    pub u: DenseMatrix,
    pub sigma: DVector<f64>,
    pub v: DenseMatrix,
}

impl RankRBasis {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (mut col, s) in us.column_iter_mut().zip(self.sigma.iter()) {
            col *= *s;
        }
        us * self.v.transpose()
    }

    /// All-zero basis of the given shape: canonical unit vectors, zero spectrum.
    pub fn zero(rows: usize, cols: usize, r: usize) -> Self {
        RankRBasis {
            u: DMatrix::identity(rows, r),
            sigma: DVector::zeros(r),
            v: DMatrix::identity(cols, r),
        }
    }
}

/// QR factors and middle block of the tangent-space projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFactors {
    /// `d1 x r`, orthonormal columns orthogonal to `U` (zero columns when `d1 < 2r`).
    pub q1: DenseMatrix,
    /// `r x r` upper triangular.
    pub r1: DenseMatrix,
    /// `d2 x r`, orthonormal columns orthogonal to `V`.
    pub q2: DenseMatrix,
    /// `r x r` upper triangular.
    pub r2: DenseMatrix,
    /// `2r x 2r` block `[[UᵀAV, R2ᵀ], [R1, 0]]`.
    pub core: DenseMatrix,
}

impl TangentFactors {
    pub fn rank(&self) -> usize {
        self.r1.nrows()
    }

    /// Dense `P(A)` from the factors.
    pub fn assemble(&self, basis: &RankRBasis) -> DenseMatrix {
        let left = hcat(&basis.u, &self.q1);
        let right = hcat(&basis.v, &self.q2);
        &left * &self.core * right.transpose()
    }
}

fn hcat(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn check_finite(a: &DenseMatrix) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            iteration: 0,
            reason: "non-finite entry in matrix".into(),
        })
    }
}

/// Thin SVD with non-increasing singular values.
struct ThinSvd {
    u: DenseMatrix,
    sigma: Vec<f64>,
    v: DenseMatrix,
}

fn to_faer(a: &DenseMatrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DenseMatrix {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn sequential_backend() {
    static ONCE: Once = Once::new();
    // results must not depend on thread scheduling
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

fn svd_failure(a: &DenseMatrix) -> Error {
    Error::Numerical {
        iteration: 0,
        reason: format!("SVD of {}x{} matrix did not converge", a.nrows(), a.ncols()),
    }
}

fn thin_svd(a: &DenseMatrix) -> Result<ThinSvd> {
    check_finite(a)?;
    sequential_backend();
    let svd = to_faer(a).thin_svd().map_err(|_| svd_failure(a))?;
    Ok(ThinSvd {
        u: from_faer(svd.U()),
        sigma: svd.S().column_vector().iter().copied().collect(),
        v: from_faer(svd.V()),
    })
}

fn spectrum(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_finite(a)?;
    sequential_backend();
    to_faer(a).singular_values().map_err(|_| svd_failure(a))
}

fn check_rank(a: &DenseMatrix, r: usize) -> Result<()> {
    let (rows, cols) = a.shape();
    if r == 0 || r > rows.min(cols) {
        return Err(Error::RankOutOfRange {
            rank: r,
            rows,
            cols,
        });
    }
    Ok(())
}

/// Top-`r` singular triplets of `a`.
pub fn truncated_svd(a: &DenseMatrix, r: usize) -> Result<RankRBasis> {
    check_rank(a, r)?;
    let svd = thin_svd(a)?;
    Ok(RankRBasis {
        u: svd.u.columns(0, r).into_owned(),
        sigma: DVector::from_column_slice(&svd.sigma[..r]),
        v: svd.v.columns(0, r).into_owned(),
    })
}

/// Best rank-`r` approximation in Frobenius norm.
pub fn rank_projection(a: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    Ok(truncated_svd(a, r)?.reconstruct())
}

/// The `upto` largest singular values, non-increasing.
pub fn singular_values(a: &DenseMatrix, upto: usize) -> Result<Vec<f64>> {
    check_rank(a, upto)?;
    let mut values = spectrum(a)?;
    values.truncate(upto);
    Ok(values)
}

/// Largest singular value; zero for an empty or zero matrix.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(spectrum(a)?.first().copied().unwrap_or(0.0))
}

/// Thin QR of a block `x` (`d x r`) that is already orthogonal to the
/// orthonormal columns of `basis` (`d x r`).
///
/// Factorizing `[basis | x]` instead of `x` alone makes the returned `Q`
/// orthogonal to `basis` even when `x` is rank-deficient or zero.
fn qr_against(basis: &DenseMatrix, x: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (d, r) = x.shape();
    let qr = QR::new(hcat(basis, x));
    let q_full = qr.q();
    let r_full = qr.r();
    let m = q_full.ncols(); // min(d, 2r)
    let extra = m.saturating_sub(r);
    let mut q = DMatrix::zeros(d, r);
    let mut rr = DMatrix::zeros(r, r);
    if extra > 0 {
        q.columns_mut(0, extra).copy_from(&q_full.columns(r, extra));
        rr.rows_mut(0, extra)
            .copy_from(&r_full.view((r, r), (extra, r)));
    }
    (q, rr)
}

fn check_basis(a: &DenseMatrix, basis: &RankRBasis) -> Result<()> {
    let (d1, d2) = a.shape();
    let r = basis.rank();
    if basis.u.shape() != (d1, r) || basis.v.shape() != (d2, r) {
        return Err(Error::DimensionMismatch(format!(
            "basis U {:?}, V {:?} incompatible with {}x{} matrix",
            basis.u.shape(),
            basis.v.shape(),
            d1,
            d2
        )));
    }
    Ok(())
}

/// Factors of the tangent-space projection of `a` at `basis`, without
/// forming the dense projection.
pub fn tangent_factors(a: &DenseMatrix, basis: &RankRBasis) -> Result<TangentFactors> {
    check_basis(a, basis)?;
    let r = basis.rank();
    let (u, v) = (&basis.u, &basis.v);
    let av = a * v; // d1 x r
    let atu = a.tr_mul(u); // d2 x r
    let utav = u.tr_mul(&av); // r x r
    let x1 = &av - u * &utav;
    let x2 = &atu - v * utav.transpose();
    let (q1, r1) = qr_against(u, &x1);
    let (q2, r2) = qr_against(v, &x2);

    let mut core = DMatrix::zeros(2 * r, 2 * r);
    core.view_mut((0, 0), (r, r)).copy_from(&utav);
    core.view_mut((0, r), (r, r)).copy_from(&r2.transpose());
    core.view_mut((r, 0), (r, r)).copy_from(&r1);
    Ok(TangentFactors {
        q1,
        r1,
        q2,
        r2,
        core,
    })
}

/// Tangent-space projection of `a` at `basis`, returned densely together
/// with its factors.
pub fn tangent_projection(
    a: &DenseMatrix,
    basis: &RankRBasis,
) -> Result<(DenseMatrix, TangentFactors)> {
    let factors = tangent_factors(a, basis)?;
    Ok((factors.assemble(basis), factors))
}

/// Rank-`r` projection of the tangent-space projection, computed from the
/// `2r x 2r` middle block. Also returns the full `2r` spectrum of that block
/// (equal to the leading spectrum of the dense projection).
pub fn structured_projection_with_spectrum(
    factors: &TangentFactors,
    basis: &RankRBasis,
    r: usize,
) -> Result<(RankRBasis, Vec<f64>)> {
    let k = basis.rank();
    let consistent = factors.core.shape() == (2 * k, 2 * k)
        && factors.q1.shape() == (basis.u.nrows(), k)
        && factors.q2.shape() == (basis.v.nrows(), k);
    if !consistent {
        return Err(Error::DimensionMismatch(format!(
            "factors (core {:?}) inconsistent with rank-{k} basis",
            factors.core.shape()
        )));
    }
    if r == 0 || r > 2 * k {
        return Err(Error::RankOutOfRange {
            rank: r,
            rows: 2 * k,
            cols: 2 * k,
        });
    }
    let svd = thin_svd(&factors.core)?;
    let left = hcat(&basis.u, &factors.q1);
    let right = hcat(&basis.v, &factors.q2);
    let projected = RankRBasis {
        u: left * svd.u.columns(0, r),
        sigma: DVector::from_column_slice(&svd.sigma[..r]),
        v: right * svd.v.columns(0, r),
    };
    Ok((projected, svd.sigma))
}

/// Rank-`r` projection of the tangent-space projection; see
/// [`structured_projection_with_spectrum`].
pub fn structured_rank_projection(
    factors: &TangentFactors,
    basis: &RankRBasis,
    r: usize,
) -> Result<RankRBasis> {
    Ok(structured_projection_with_spectrum(factors, basis, r)?.0)
}
