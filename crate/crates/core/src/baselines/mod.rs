//! Subsample-and-aggregate private tests.
//!
//! Both baselines shuffle the data (`child(Shuffle, 0)`, and `child(Shuffle,
//! 1)` for the second sample), cut it into near-equal contiguous blocks, run
//! the non-private permutation test on every block with the parent's `B`
//! (block `s` seeded from `child(Block, s)`), and privatize only the vector
//! of block decisions. Two-sample data is split per sample so every block
//! contains observations from both.

mod sarrm;
mod tot;
mod tulap;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::budget::TestConfig;
use crate::dp_perm::{max_rejecting_count, permutation_test, Mechanism};
use crate::rng::{random_permutation, Purpose, RandomStream};
use crate::statistics::{Dataset, PairedData, StatisticDescriptor, TwoSampleData};
use crate::{Error, Result};

pub use sarrm::{
    sarrm_dp_epsilon, sarrm_level, sarrm_null_pmf, sarrm_params, sarrm_q, sarrm_test, sarrm_test_with,
    SarrmOptions, SarrmParams, DEFAULT_ALPHA0_MIN,
};
pub use tot::{tot_p_value, tot_test, tot_test_with, TotOptions};
pub use tulap::{tulap_cdf, tulap_sample, TulapParam};

pub(crate) const BISECTION_MAX_ITER: usize = 200;
pub(crate) const BISECTION_TOL: f64 = 1e-10;

/// `C(n, k) q^k (1 − q)^(n−k)`.
pub fn binomial_pmf(n: u64, k: u64, q: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if q <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln_choose: f64 = (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum();
    (ln_choose + k as f64 * q.ln() + (n - k) as f64 * (-q).ln_1p()).exp()
}

/// `ln C(n, j) + j ln q + (n − j) ln(1 − q)` for `j = k..=n`, by recurrence.
fn ln_pmf_terms(n: u64, k: u64, q: f64) -> Vec<f64> {
    let (lq, lr) = (q.ln(), (-q).ln_1p());
    let mut ln_c: f64 = (1..=k.min(n - k)).map(|i| ((n - k.min(n - k) + i) as f64 / i as f64).ln()).sum();
    let mut out = Vec::with_capacity((n - k + 1) as usize);
    for j in k..=n {
        out.push(ln_c + j as f64 * lq + (n - j) as f64 * lr);
        if j < n {
            ln_c += ((n - j) as f64 / (j + 1) as f64).ln();
        }
    }
    out
}

/// `P(Bin(n, q) ≥ k)`.
pub fn binomial_upper_tail(n: u64, k: u64, q: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if k == 0 || q >= 1.0 {
        return 1.0;
    }
    if q <= 0.0 {
        return 0.0;
    }
    ln_pmf_terms(n, k, q).iter().map(|t| t.exp()).sum::<f64>().min(1.0)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// `ln P(Bin(n, q) ≥ k)`, accurate when the tail is far below `f64::MIN_POSITIVE`.
pub fn ln_binomial_upper_tail(n: u64, k: u64, q: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || q >= 1.0 {
        return 0.0;
    }
    if q <= 0.0 {
        return f64::NEG_INFINITY;
    }
    log_sum_exp(&ln_pmf_terms(n, k, q)).min(0.0)
}

/// Level actually attained by a Monte Carlo permutation sub-test run at
/// nominal level `alpha0` with `B` permutations: `⌊(B+1)α₀⌋/(B+1)`.
pub fn effective_subtest_level(alpha0: f64, num_permutations: usize) -> f64 {
    max_rejecting_count(alpha0, num_permutations) as f64 / (num_permutations as f64 + 1.0)
}

fn take_rows(a: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

fn block_bounds(len: usize, blocks: usize, s: usize) -> (usize, usize) {
    (s * len / blocks, (s + 1) * len / blocks)
}

/// Splits `data` into `blocks` disjoint parts after a seeded shuffle.
pub fn partition(data: &Dataset, blocks: usize, stream: &RandomStream) -> Result<Vec<Dataset>> {
    if blocks == 0 {
        return Err(Error::InvalidParameter("number of blocks must be positive".into()));
    }
    let size = data.effective_size();
    if size < blocks {
        return Err(Error::InvalidParameter(format!(
            "cannot split {size} observations into {blocks} blocks"
        )));
    }
    match data {
        Dataset::TwoSample(d) => {
            let py = random_permutation(d.n(), &stream.child(Purpose::Shuffle, 0));
            let pz = random_permutation(d.m(), &stream.child(Purpose::Shuffle, 1));
            (0..blocks)
                .map(|s| {
                    let (ya, yb) = block_bounds(d.n(), blocks, s);
                    let (za, zb) = block_bounds(d.m(), blocks, s);
                    Ok(TwoSampleData::new(take_rows(d.y(), &py[ya..yb]), take_rows(d.z(), &pz[za..zb]))?.into())
                })
                .collect()
        }
        Dataset::Paired(d) => {
            let p = random_permutation(d.n(), &stream.child(Purpose::Shuffle, 0));
            (0..blocks)
                .map(|s| {
                    let (a, b) = block_bounds(d.n(), blocks, s);
                    Ok(PairedData::new(take_rows(d.y(), &p[a..b]), take_rows(d.z(), &p[a..b]))?.into())
                })
                .collect()
        }
    }
}

/// Runs the non-private sub-test at level `alpha0` on every block and
/// returns the decisions `p̂_s ≤ α₀`.
pub(crate) fn subtest_decisions(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    config: &TestConfig,
    blocks: usize,
    alpha0: f64,
) -> Result<Vec<bool>> {
    let statistic = statistic.resolve(data)?;
    let root = RandomStream::root(config.seed);
    let parts = partition(data, blocks, &root)?;
    parts
        .par_iter()
        .enumerate()
        .map(|(s, part)| {
            let prepared = statistic.prepare(part)?;
            let sub = TestConfig {
                alpha: alpha0,
                num_permutations: config.num_permutations,
                seed: root.child(Purpose::Block, s as u64).derive_seed(),
                budget: None,
                exact_level_randomization: false,
                retain_noisy_values: false,
            };
            Ok(permutation_test(&prepared, &sub, Mechanism::NonPrivate)?.reject)
        })
        .collect()
}
