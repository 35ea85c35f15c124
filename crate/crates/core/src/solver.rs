//! Accelerated alternating projections (AccAltProj).
//!
//! Initialization:
//!
//! ```text
//! zeta_{-1} = beta_init * sigma_1(M)
//! S_{-1}    = T(M; zeta_{-1})
//! L_0       = H_r(M - S_{-1})
//! zeta_0    = beta * sigma_1(M - S_{-1})
//! S_0       = T(M - L_0; zeta_0)
//! ```
//!
//! Each iteration projects `M - S_k` onto the tangent space at `L_k`, truncates
//! to rank `r` through the small middle block, and re-thresholds with
//!
//! ```text
//! zeta_{k+1} = beta * (sigma_{r+1}(P_{k+1}) + gamma^(k+1) * sigma_1(P_{k+1}))
//! ```
//!
//! The classical solver uses hard thresholding `T`; the unrolled network reuses
//! the same stages with another [`Shrinkage`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RankRBasis};
use crate::shrinkage::Shrinkage;
use crate::DenseMatrix;

/// Default threshold scale `1 / (2 * (d1 * d2)^(1/4))`.
pub fn default_beta(d1: usize, d2: usize) -> f64 {
    1.0 / (2.0 * ((d1 * d2) as f64).powf(0.25))
}

pub const DEFAULT_GAMMA: f64 = 0.7;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub r: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub beta_init: f64,
    pub gamma: f64,
    pub max_iters: usize,
}

impl SolverConfig {
    /// Defaults for a `d1 x d2` problem: `beta = beta_init = default_beta`,
    /// `gamma = 0.7`, `epsilon = 1e-6`, 50 iterations.
    pub fn with_defaults(d1: usize, d2: usize, r: usize) -> Self {
        let beta = default_beta(d1, d2);
        SolverConfig {
            r,
            epsilon: DEFAULT_EPSILON,
            beta,
            beta_init: beta,
            gamma: DEFAULT_GAMMA,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.r == 0 {
            return bad("r must be >= 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if !(self.beta > 0.0) || !(self.beta_init > 0.0) {
            return bad("beta and beta_init must be > 0");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        Ok(())
    }

    pub(crate) fn schedule(&self) -> Schedule {
        Schedule {
            beta_init: self.beta_init,
            beta: self.beta,
            gamma: self.gamma,
            op: Shrinkage::Hard,
            upsilon: f64::INFINITY,
        }
    }
}

/// Iterates `(L_k, S_k)` with the rank-`r` basis of `L_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionState {
    pub l: DenseMatrix,
    pub s: DenseMatrix,
    pub basis: RankRBasis,
    pub k: usize,
    /// Threshold that produced `s`.
    pub zeta: f64,
    /// `||M - L - S||_F / ||M||_F`, zero when `M = 0`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub state: DecompositionState,
    /// Residual after initialization and after every iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Relative residual `||M - L - S||_F / ||M||_F` (zero for `M = 0`).
pub fn relative_residual(m: &DenseMatrix, l: &DenseMatrix, s: &DenseMatrix) -> f64 {
    let m_norm = m.norm();
    if m_norm == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for ((a, b), c) in m.iter().zip(l.iter()).zip(s.iter()) {
        let e = a - b - c;
        acc += e * e;
    }
    acc.sqrt() / m_norm
}

/// Threshold schedule and operator shared by the solver and the network.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Schedule {
    pub beta_init: f64,
    pub beta: f64,
    pub gamma: f64,
    pub op: Shrinkage,
    pub upsilon: f64,
}

/// Thresholds `x` and counts entries that fall in the firm ramp `[zeta, upsilon * zeta]`.
pub(crate) fn threshold_counting(
    x: &DenseMatrix,
    op: Shrinkage,
    zeta: f64,
    upsilon: f64,
) -> (DenseMatrix, usize) {
    let hi = upsilon * zeta;
    let mut band = 0usize;
    let out = x.map(|v| {
        let a = v.abs();
        if a > 0.0 && a >= zeta && a <= hi {
            band += 1;
        }
        op.apply(v, zeta, upsilon)
    });
    (out, band)
}

/// Low-rank half of the initialization, which does not depend on `beta` or `gamma`.
#[derive(Debug, Clone)]
pub(crate) struct InitLowRank {
    pub basis: RankRBasis,
    pub l0: DenseMatrix,
    /// `sigma_1(M - S_{-1})`.
    pub sigma1: f64,
    pub band: usize,
}

pub(crate) fn init_low_rank(
    m: &DenseMatrix,
    r: usize,
    beta_init: f64,
    op: Shrinkage,
    upsilon: f64,
) -> Result<InitLowRank> {
    let (d1, d2) = m.shape();
    if r == 0 || r > d1.min(d2) {
        return Err(Error::RankOutOfRange {
            rank: r,
            rows: d1,
            cols: d2,
        });
    }
    let zeta_init = beta_init * linalg::spectral_norm(m)?;
    let (s_init, band) = threshold_counting(m, op, zeta_init, upsilon);
    let basis = linalg::truncated_svd(&(m - &s_init), r)?;
    let sigma1 = basis.sigma[0];
    let l0 = basis.reconstruct();
    Ok(InitLowRank {
        basis,
        l0,
        sigma1,
        band,
    })
}

pub(crate) fn init_sparse(
    m: &DenseMatrix,
    low: &InitLowRank,
    beta: f64,
    op: Shrinkage,
    upsilon: f64,
) -> (DecompositionState, usize) {
    let zeta = beta * low.sigma1;
    let (s, band) = threshold_counting(&(m - &low.l0), op, zeta, upsilon);
    let residual = relative_residual(m, &low.l0, &s);
    (
        DecompositionState {
            l: low.l0.clone(),
            s,
            basis: low.basis.clone(),
            k: 0,
            zeta,
            residual,
        },
        band + low.band,
    )
}

/// One update `(L_k, S_k) -> (L_{k+1}, S_{k+1})`. Returns the entry count
/// that landed in the firm ramp.
pub(crate) fn layer(
    state: &DecompositionState,
    m: &DenseMatrix,
    sched: &Schedule,
) -> Result<(DecompositionState, usize)> {
    let k_next = state.k + 1;
    let r = state.basis.rank();
    let tag = |e: Error| e.at_iteration(k_next);
    let factors = linalg::tangent_factors(&(m - &state.s), &state.basis).map_err(tag)?;
    let (basis, spectrum) =
        linalg::structured_projection_with_spectrum(&factors, &state.basis, r).map_err(tag)?;
    let sigma1 = spectrum[0];
    let sigma_next = spectrum.get(r).copied().unwrap_or(0.0);
    let zeta = sched.beta * (sigma_next + sched.gamma.powi(k_next as i32) * sigma1);
    let l = basis.reconstruct();
    let (s, band) = threshold_counting(&(m - &l), sched.op, zeta, sched.upsilon);
    let residual = relative_residual(m, &l, &s);
    if !residual.is_finite() {
        return Err(Error::Numerical {
            iteration: k_next,
            reason: "residual is not finite".into(),
        });
    }
    Ok((
        DecompositionState {
            l,
            s,
            basis,
            k: k_next,
            zeta,
            residual,
        },
        band,
    ))
}

/// Initialization stage (`S_{-1}`, `L_0`, `S_0`) with hard thresholding.
pub fn initialize(m: &DenseMatrix, cfg: &SolverConfig) -> Result<DecompositionState> {
    cfg.validate()?;
    let s = cfg.schedule();
    let low = init_low_rank(m, cfg.r, s.beta_init, s.op, s.upsilon)?;
    Ok(init_sparse(m, &low, s.beta, s.op, s.upsilon).0)
}

/// One AccAltProj iteration.
pub fn iterate(
    state: &DecompositionState,
    m: &DenseMatrix,
    cfg: &SolverConfig,
) -> Result<DecompositionState> {
    if state.l.shape() != m.shape() || state.basis.rank() != cfg.r {
        return Err(Error::DimensionMismatch(format!(
            "state {:?} rank {} vs matrix {:?} rank {}",
            state.l.shape(),
            state.basis.rank(),
            m.shape(),
            cfg.r
        )));
    }
    Ok(layer(state, m, &cfg.schedule())?.0)
}

/// Runs AccAltProj until the residual drops below `epsilon` or `max_iters`
/// iterations have run. Not converging is reported through
/// [`SolveOutcome::converged`], not as an error.
pub fn solve(m: &DenseMatrix, cfg: &SolverConfig) -> Result<SolveOutcome> {
    let mut state = initialize(m, cfg)?;
    let mut trace = vec![state.residual];
    while state.residual >= cfg.epsilon && state.k < cfg.max_iters {
        state = iterate(&state, m, cfg)?;
        trace.push(state.residual);
    }
    let converged = state.residual < cfg.epsilon;
    Ok(SolveOutcome {
        state,
        trace,
        converged,
    })
}
