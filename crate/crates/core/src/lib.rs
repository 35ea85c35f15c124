//! Robust PCA by accelerated alternating projections.
//!
//! The crate decomposes an observed matrix `M = L + S` into a rank-`r` part
//! `L` and a sparse part `S`. Two solvers are provided:
//!
//! * [`solver`]: the classical accelerated alternating projections loop with
//!   hard thresholding and early stopping.
//! * [`unrolled`]: a fixed-depth network of the same iteration that uses firm
//!   (minimax concave penalty) thresholding and a single shared `(beta, gamma)`
//!   pair, which [`trainer`] fits from data.
//!
//! Supporting modules generate synthetic instances ([`synth`]), evaluate
//! decompositions ([`metrics`]) and move matrices to and from disk ([`io`]).

// `!(x > 0.0)` is deliberate in validation: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod shrinkage;
pub mod solver;
pub mod synth;
pub mod trainer;
pub mod unrolled;

pub use error::{Error, Result};
pub use linalg::{RankRBasis, TangentFactors};
pub use metrics::MetricsReport;
pub use shrinkage::{McpParams, Shrinkage};
pub use solver::{DecompositionState, SolveOutcome, SolverConfig};
pub use synth::{SynthCase, SynthTriple};
pub use trainer::{BatchMode, Optimizer, TrainConfig, TrainReport, TrainSample};
pub use unrolled::{UnrolledOutput, UnrolledParams};

/// Dense real matrix used throughout the crate.
pub type DenseMatrix = nalgebra::DMatrix<f64>;
