//! Fixed-depth unrolled AccAltProj.
//!
//! The network runs the solver's initialization followed by exactly
//! `layers` updates, with every thresholding step (initialization included)
//! performed by one [`Shrinkage`] operator, firm thresholding by default. All
//! layers share a single `(beta, gamma)` pair; `upsilon` and `beta_init` are
//! fixed hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shrinkage::Shrinkage;
use crate::solver::{self, DecompositionState, InitLowRank, Schedule, SolverConfig};
use crate::DenseMatrix;

pub const DEFAULT_UPSILON: f64 = 1.05;
pub const DEFAULT_LAYERS: usize = 20;

pub const BETA_RANGE: (f64, f64) = (1e-6, 1.0);
pub const GAMMA_RANGE: (f64, f64) = (0.05, 0.99);

/// The single parameter record shared by every layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnrolledParams {
    pub beta: f64,
    pub gamma: f64,
    pub upsilon: f64,
    pub layers: usize,
    pub beta_init: f64,
    #[serde(default)]
    pub shrinkage: Shrinkage,
}

impl UnrolledParams {
    /// AccAltProj defaults for a `d1 x d2` problem, firm thresholding with
    /// `upsilon = 1.05` and 20 layers.
    pub fn with_defaults(d1: usize, d2: usize) -> Self {
        let beta = solver::default_beta(d1, d2);
        UnrolledParams {
            beta,
            gamma: solver::DEFAULT_GAMMA,
            upsilon: DEFAULT_UPSILON,
            layers: DEFAULT_LAYERS,
            beta_init: beta,
            shrinkage: Shrinkage::Firm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (blo, bhi) = BETA_RANGE;
        let (glo, ghi) = GAMMA_RANGE;
        if !(self.beta >= blo && self.beta <= bhi) {
            return Err(Error::InvalidConfig(format!(
                "beta {} outside [{blo}, {bhi}]",
                self.beta
            )));
        }
        if !(self.gamma >= glo && self.gamma <= ghi) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} outside [{glo}, {ghi}]",
                self.gamma
            )));
        }
        if !(self.upsilon > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "upsilon must be > 1, got {}",
                self.upsilon
            )));
        }
        if !(self.beta_init > 0.0) || !self.beta_init.is_finite() {
            return Err(Error::InvalidConfig("beta_init must be > 0".into()));
        }
        Ok(())
    }

    fn schedule(&self) -> Schedule {
        Schedule {
            beta_init: self.beta_init,
            beta: self.beta,
            gamma: self.gamma,
            op: self.shrinkage,
            upsilon: self.upsilon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnrolledOutput {
    pub l: DenseMatrix,
    pub s: DenseMatrix,
    /// Residual after initialization and after each layer (`layers + 1` values).
    pub trace: Vec<f64>,
    /// Entries that fell inside the firm ramp `[zeta, upsilon * zeta]`, summed
    /// over all thresholding steps.
    pub band_hits: usize,
    pub state: DecompositionState,
}

/// The part of the forward pass that depends only on `(M, r, beta_init,
/// upsilon, shrinkage)`. Training varies `(beta, gamma)` only, so it can be
/// computed once per sample.
#[derive(Debug, Clone)]
pub struct Prepared {
    r: usize,
    beta_init: f64,
    upsilon: f64,
    shrinkage: Shrinkage,
    low: InitLowRank,
}

pub fn prepare(m: &DenseMatrix, r: usize, p: &UnrolledParams) -> Result<Prepared> {
    p.validate()?;
    let low = solver::init_low_rank(m, r, p.beta_init, p.shrinkage, p.upsilon)?;
    Ok(Prepared {
        r,
        beta_init: p.beta_init,
        upsilon: p.upsilon,
        shrinkage: p.shrinkage,
        low,
    })
}

/// Forward pass reusing a [`Prepared`] initialization.
pub fn forward_prepared(
    prep: &Prepared,
    m: &DenseMatrix,
    p: &UnrolledParams,
) -> Result<UnrolledOutput> {
    p.validate()?;
    if prep.beta_init != p.beta_init || prep.upsilon != p.upsilon || prep.shrinkage != p.shrinkage {
        return Err(Error::InvalidConfig(
            "prepared initialization was built with different fixed hyperparameters".into(),
        ));
    }
    if prep.low.l0.shape() != m.shape() {
        return Err(Error::DimensionMismatch(format!(
            "prepared for {:?}, got {:?}",
            prep.low.l0.shape(),
            m.shape()
        )));
    }
    let sched = p.schedule();
    let (mut state, mut band_hits) =
        solver::init_sparse(m, &prep.low, sched.beta, sched.op, sched.upsilon);
    let mut trace = Vec::with_capacity(p.layers + 1);
    trace.push(state.residual);
    for _ in 0..p.layers {
        let (next, band) = solver::layer(&state, m, &sched)?;
        band_hits += band;
        trace.push(next.residual);
        state = next;
    }
    Ok(UnrolledOutput {
        l: state.l.clone(),
        s: state.s.clone(),
        trace,
        band_hits,
        state,
    })
}

/// Runs the initialization and exactly `p.layers` layers. No early stopping.
pub fn forward(m: &DenseMatrix, r: usize, p: &UnrolledParams) -> Result<UnrolledOutput> {
    let prep = prepare(m, r, p)?;
    forward_prepared(&prep, m, p)
}

impl Prepared {
    pub fn rank(&self) -> usize {
        self.r
    }
}

/// Result of comparing the network against the hard-threshold solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Equivalence {
    /// Outputs agree entrywise to `1e-6`.
    Match {
        max_diff: f64,
    },
    Mismatch {
        max_diff: f64,
    },
    /// Some entry entered a firm ramp, so the two maps legitimately differ.
    Skipped {
        band_hits: usize,
    },
}

impl Equivalence {
    pub fn passed(&self) -> bool {
        matches!(self, Equivalence::Match { .. })
    }
}

pub const EQUIVALENCE_TOL: f64 = 1e-6;
pub const NEAR_HARD_UPSILON: f64 = 1.0 + 1e-9;

/// Compares [`forward`] at `upsilon = 1 + 1e-9` with the classical solver run
/// for the same number of iterations with early stopping disabled.
pub fn forward_equivalence_check(
    m: &DenseMatrix,
    r: usize,
    p: &UnrolledParams,
) -> Result<Equivalence> {
    let p = UnrolledParams {
        upsilon: NEAR_HARD_UPSILON,
        shrinkage: Shrinkage::Firm,
        ..*p
    };
    let net = forward(m, r, &p)?;
    if net.band_hits > 0 {
        return Ok(Equivalence::Skipped {
            band_hits: net.band_hits,
        });
    }
    let cfg = SolverConfig {
        r,
        epsilon: f64::MIN_POSITIVE,
        beta: p.beta,
        beta_init: p.beta_init,
        gamma: p.gamma,
        max_iters: p.layers.max(1),
    };
    let mut state = solver::initialize(m, &cfg)?;
    for _ in 0..p.layers {
        state = solver::iterate(&state, m, &cfg)?;
    }
    let diff = |a: &DenseMatrix, b: &DenseMatrix| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let max_diff = diff(&net.l, &state.l).max(diff(&net.s, &state.s));
    Ok(if max_diff <= EQUIVALENCE_TOL {
        Equivalence::Match { max_diff }
    } else {
        Equivalence::Mismatch { max_diff }
    })
}
