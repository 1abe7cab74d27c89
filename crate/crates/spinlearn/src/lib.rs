//! Learning ground-state expectation values of long-range spin chains from
//! simulated data.
//!
//! The crate bundles everything needed to run desk-scale versions of that
//! pipeline end to end:
//!
//! * [`geometry`] — lattices, site-set distances and diameters, interaction
//!   hypergraphs, δ-neighborhoods, brute-force counting, automorphism orbits.
//! * [`hamiltonian`] — disordered Heisenberg and long-range Ising families,
//!   parameter sampling, Pauli operators, observables, decay checks.
//! * [`exactdiag`] — Lanczos ground states, spectral gaps, expectation
//!   values, and reproducible dataset generation.
//! * [`tensor`] — exponential-sum fits of power-law couplings, matrix
//!   product operators, two-site DMRG, and MPS expectation values.
//! * [`shadows`] — classical shadows from randomized single-qubit Pauli
//!   measurements: sampling, estimators, reduced density matrices.
//! * [`features`] — discretized and random-Fourier feature maps over
//!   δ-neighborhoods, with optional translation-equivariant weight sharing.
//! * [`learner`] — LASSO by coordinate descent, cross-validation over the
//!   standard hyperparameter grids, sample-complexity sweeps, and the
//!   train-one-term-predict-the-orbit shortcut.
//! * [`theory`] — closed-form locality exponents, δ(ε) radius choices, and
//!   order-of-magnitude sample-complexity formulas.
//! * [`stats`] — disorder-ensemble summaries, 1/n variance-scaling fits, and
//!   √n target rescaling.
//! * [`cli`] — JSON-config command implementations backing the `spinlearn`
//!   binary (`gen-data`, `train`, `sweep`, `shadows`, `exponents`, `clt`,
//!   `fit-expsum`).
//!
//! Every capability has a runnable demo under `examples/`; try
//! `cargo run -p spinlearn --release --example exact_ground_states`.
//! All randomness flows from explicit `u64` seeds, so every function here is
//! deterministic and every output file reproduces byte for byte.

pub mod cli;
pub mod error;
pub mod exactdiag;
pub mod features;
pub mod geometry;
pub mod hamiltonian;
pub mod learner;
pub mod shadows;
pub mod stats;
pub mod tensor;
pub mod theory;

pub(crate) mod util;

pub use error::{Error, Result};
