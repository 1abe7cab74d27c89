//! Matrix-product machinery: exponential-sum fitting of long-range decay,
//! explicit operator grids, two-site ground-state optimization with SVD
//! truncation, excited states by projection, and dataset generation for
//! chains beyond exact-diagonalization reach.

pub mod dmrg;
pub mod expfit;
pub mod mpo;
pub mod mps;

pub use dmrg::{
    dmrg_excited, dmrg_ground, generate_dataset_dmrg, DmrgRun, SweepRecord, TruncationPolicy,
};
pub use expfit::{fit_exp_sum, fit_exp_sum_samples, ExpSumFit};
pub use mpo::Mpo;
pub use mps::{mps_expectation, Mps};
