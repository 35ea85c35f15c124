//! Shared fixtures for the benchmarks.

use rpca_core::linalg::{self, RankRBasis};
use rpca_core::synth::{self, SynthCase, SynthTriple};
use rpca_core::DenseMatrix;

/// Case-1 style instance of size `d`.
pub fn instance(d: usize, seed: u64) -> SynthTriple {
    synth::gen_case(&SynthCase::new(d, 2, 0.1, 1.0, seed)).expect("valid case")
}

/// A matrix and a rank-`r` basis near it, as seen inside one solver iteration.
pub fn projection_inputs(d: usize, r: usize, seed: u64) -> (DenseMatrix, RankRBasis) {
    let t = instance(d, seed);
    let basis = linalg::truncated_svd(&t.l_star, r).expect("svd");
    (t.m_star, basis)
}
