//! Differentially private permutation tests.
//!
//! The crate implements a permutation test whose released decision is
//! `(ε, δ)`-differentially private while keeping exact finite-sample
//! validity. Every statistic `T` is evaluated on the observed data and on `B`
//! random permutations; each value receives independent Laplace noise of
//! scale `2Δ_T / ξ_{ε,δ}` and the p-value is the rank of the noisy observed
//! value among the noisy permuted values.
//!
//! Kernel two-sample (MMD) and independence (HSIC) statistics are provided in
//! V- and U-statistic form together with their global sensitivities, plus the
//! subsample-and-aggregate baselines TOT and SARRM, synthetic data generators
//! and brute-force oracles used by the test suite.

pub mod baselines;
pub mod budget;
pub mod dp_perm;
mod error;
pub mod kernels;
pub mod oracle;
pub mod rng;
pub mod statistics;
pub mod synthetic;

pub use budget::{min_permutations, xi_of, PrivacyBudget, TestConfig};
pub use dp_perm::{
    dp_permutation_test, naive_dp_permutation_test, nonprivate_permutation_test, Mechanism,
    TestOutcome,
};
pub use error::{Error, Result};
pub use kernels::{Bandwidth, KernelChoice, KernelFamily, KernelKind, KernelSource, KernelSpec};
pub use rng::{laplace_sample, Purpose, RandomStream};
pub use statistics::{
    Dataset, PairedData, PermutationStatistic, PreparedStatistic, StatisticDescriptor,
    StatisticKind, TwoSampleData,
};
