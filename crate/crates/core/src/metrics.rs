//! Recovery errors of a decomposition against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::DenseMatrix;

fn same_shape(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `||L* - L_out||_F`
pub fn eps_l(l_star: &DenseMatrix, l_out: &DenseMatrix) -> Result<f64> {
    same_shape(l_star, l_out)?;
    Ok((l_star - l_out).norm())
}

/// `||S* - S_out||_F`
pub fn eps_s(s_star: &DenseMatrix, s_out: &DenseMatrix) -> Result<f64> {
    same_shape(s_star, s_out)?;
    Ok((s_star - s_out).norm())
}

/// `||M* - L_out - S_out||_F / ||M*||_F`
pub fn eps_m(m_star: &DenseMatrix, l_out: &DenseMatrix, s_out: &DenseMatrix) -> Result<f64> {
    same_shape(m_star, l_out)?;
    same_shape(m_star, s_out)?;
    let norm = m_star.norm();
    if norm == 0.0 {
        return Err(Error::ZeroNormTarget);
    }
    Ok((m_star - l_out - s_out).norm() / norm)
}

/// Fraction of entries whose zero/nonzero status differs, normalized by `d^2`.
pub fn eps_supp(s_star: &DenseMatrix, s_out: &DenseMatrix) -> Result<f64> {
    eps_supp_tol(s_star, s_out, 0.0)
}

/// [`eps_supp`] where `|x| <= tol` counts as zero. `tol = 0` is exact-zero semantics.
pub fn eps_supp_tol(s_star: &DenseMatrix, s_out: &DenseMatrix, tol: f64) -> Result<f64> {
    same_shape(s_star, s_out)?;
    let (d1, d2) = s_star.shape();
    if d1 != d2 {
        return Err(Error::DimensionMismatch(format!(
            "support error needs square matrices, got {d1}x{d2}"
        )));
    }
    let nz = |x: f64| x.abs() > tol;
    let mismatches = s_star
        .iter()
        .zip(s_out.iter())
        .filter(|(a, b)| nz(**a) != nz(**b))
        .count();
    Ok(mismatches as f64 / (d1 * d1) as f64)
}

/// The four errors for one decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub eps_l: f64,
    pub eps_s: f64,
    pub eps_m: f64,
    /// `None` for non-square inputs, where the support error is undefined.
    pub eps_supp: Option<f64>,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

/// CSV columns of [`MetricsReport::csv_row`].
pub const CSV_HEADER: &str = "eps_L,eps_S,eps_M,eps_supp,tags";

impl MetricsReport {
    pub fn compute(
        l_star: &DenseMatrix,
        s_star: &DenseMatrix,
        m_star: &DenseMatrix,
        l_out: &DenseMatrix,
        s_out: &DenseMatrix,
    ) -> Result<Self> {
        Self::compute_with_tol(l_star, s_star, m_star, l_out, s_out, 0.0)
    }

    pub fn compute_with_tol(
        l_star: &DenseMatrix,
        s_star: &DenseMatrix,
        m_star: &DenseMatrix,
        l_out: &DenseMatrix,
        s_out: &DenseMatrix,
        supp_tol: f64,
    ) -> Result<Self> {
        let eps_supp = if s_star.is_square() {
            Some(eps_supp_tol(s_star, s_out, supp_tol)?)
        } else {
            None
        };
        Ok(MetricsReport {
            eps_l: eps_l(l_star, l_out)?,
            eps_s: eps_s(s_star, s_out)?,
            eps_m: eps_m(m_star, l_out, s_out)?,
            eps_supp,
            tags: BTreeMap::new(),
        })
    }

    pub fn with_tag(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.tags.insert(key.into(), value.into());
        self
    }

    /// One CSV row in [`CSV_HEADER`] order; tags are `key=value` joined by `;`.
    pub fn csv_row(&self) -> String {
        let tags = self
            .tags
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        let supp = self.eps_supp.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.eps_l, self.eps_s, self.eps_m, supp, tags
        )
    }
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
