//! SARRM: majority vote over randomized-response block decisions.

use serde::{Deserialize, Serialize};

use crate::budget::TestConfig;
use crate::dp_perm::{Mechanism, TestOutcome};
use crate::rng::{Purpose, RandomStream};
use crate::statistics::{Dataset, StatisticDescriptor};
use crate::{Error, Result};

use super::{binomial_pmf, binomial_upper_tail, ln_binomial_upper_tail, log_sum_exp, subtest_decisions, BISECTION_MAX_ITER, BISECTION_TOL};

pub const DEFAULT_ALPHA0_MIN: f64 = 0.0025;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SarrmParams {
    /// The data is cut into `2k + 1` blocks.
    pub k: usize,
    /// Probability that randomized response keeps a bit.
    pub p: f64,
    /// Sub-test level.
    pub alpha0: f64,
}

impl SarrmParams {
    pub fn blocks(&self) -> usize {
        2 * self.k + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SarrmOptions {
    pub alpha0_min: f64,
    /// Defaults to `⌊(n − 1)/2⌋`.
    pub k_max: Option<usize>,
}

impl Default for SarrmOptions {
    fn default() -> Self {
        Self {
            alpha0_min: DEFAULT_ALPHA0_MIN,
            k_max: None,
        }
    }
}

/// `q = pα₀ + (1 − p)(1 − α₀)`, the null probability of a released 1.
pub fn sarrm_q(p: f64, alpha0: f64) -> f64 {
    p * alpha0 + (1.0 - p) * (1.0 - alpha0)
}

/// `P(Bin(2k+1, q) ≥ k+1)`.
pub fn sarrm_level(k: usize, p: f64, alpha0: f64) -> f64 {
    let s = 2 * k as u64 + 1;
    binomial_upper_tail(s, k as u64 + 1, sarrm_q(p, alpha0))
}

/// `ln(P(B₁ > k) / P(B₀ > k))` with `B₀ ~ Bin(2k+1, 1−p)` and
/// `B₁ ~ Bern(p) + Bin(2k, 1−p)`.
pub fn sarrm_dp_epsilon(k: usize, p: f64) -> f64 {
    // tails are taken in log space: for large k they underflow near p = 1
    let k64 = k as u64;
    let ln_p0 = ln_binomial_upper_tail(2 * k64 + 1, k64 + 1, 1.0 - p);
    // B₁ > k: either the Bernoulli is 1 and Bin(2k) ≥ k, or it is 0 and Bin(2k) ≥ k+1
    let ln_tail_k = ln_binomial_upper_tail(2 * k64, k64, 1.0 - p);
    let ln_tail_k1 = ln_binomial_upper_tail(2 * k64, k64 + 1, 1.0 - p);
    let ln_p1 = log_sum_exp(&[p.ln() + ln_tail_k, (1.0 - p).ln() + ln_tail_k1]);
    ln_p1 - ln_p0
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, target: f64, what: &str) -> Result<(f64, f64)> {
    // f increasing on [lo, hi]; returns (lo, hi) bracketing the target
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v - target).abs() <= BISECTION_TOL {
            return Ok((mid, mid));
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (f(lo) - target).abs() <= 1e-8 || (f(hi) - target).abs() <= 1e-8 {
        return Ok((lo, hi));
    }
    Err(Error::NonConvergence(format!("bisection for {what} did not converge")))
}

fn p_for_epsilon(k: usize, epsilon: f64) -> Result<f64> {
    let (lo, hi) = bisect(|p| sarrm_dp_epsilon(k, p), 0.5, 1.0, epsilon, "the response probability")?;
    if lo == hi {
        return Ok(lo);
    }
    let err = |p: f64| (sarrm_dp_epsilon(k, p) - epsilon).abs();
    Ok(if err(lo) <= err(hi) { lo } else { hi })
}

fn feasible(k: usize, epsilon: f64, alpha: f64, alpha0_min: f64) -> Result<Option<f64>> {
    let p = p_for_epsilon(k, epsilon)?;
    Ok((sarrm_level(k, p, alpha0_min) <= alpha).then_some(p))
}

/// Smallest `k ≤ k_max` whose level at `α₀ = alpha0_min` is at most `α`,
/// with `p` matching `ε` and `α₀` then raised as far as the level allows.
pub fn sarrm_params(alpha: f64, epsilon: f64, alpha0_min: f64, k_max: usize) -> Result<SarrmParams> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if !(alpha0_min > 0.0 && alpha0_min < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "alpha0_min must lie in (0, 0.5), got {alpha0_min}"
        )));
    }
    let infeasible = || {
        Error::Infeasible(format!(
            "no k <= {k_max} reaches level {alpha} at epsilon {epsilon}; more data is needed"
        ))
    };
    if k_max == 0 || feasible(k_max, epsilon, alpha, alpha0_min)?.is_none() {
        return Err(infeasible());
    }
    let (mut lo, mut hi) = (0usize, k_max);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if mid >= 1 && feasible(mid, epsilon, alpha, alpha0_min)?.is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let k = hi;
    let p = feasible(k, epsilon, alpha, alpha0_min)?.ok_or_else(infeasible)?;
    let (mut a_lo, mut a_hi) = (alpha0_min, 0.5);
    for _ in 0..BISECTION_MAX_ITER {
        if a_hi - a_lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (a_lo + a_hi);
        if sarrm_level(k, p, mid) <= alpha {
            a_lo = mid;
        } else {
            a_hi = mid;
        }
    }
    Ok(SarrmParams { k, p, alpha0: a_lo })
}

pub fn sarrm_test(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    config: &TestConfig,
    epsilon: f64,
) -> Result<TestOutcome> {
    sarrm_test_with(data, statistic, config, epsilon, SarrmOptions::default())
}

/// Block `s` keeps its decision when the first uniform of
/// `child(Response, s)` is below `p`. The outcome reports `T` as the noisy
/// statistic, `1 − p` as the noise scale and `P(Bin(2k+1, q) ≥ T)` as the
/// p-value.
pub fn sarrm_test_with(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    config: &TestConfig,
    epsilon: f64,
    options: SarrmOptions,
) -> Result<TestOutcome> {
    config.validate()?;
    let n = data.effective_size();
    let k_max = options.k_max.unwrap_or(n.saturating_sub(1) / 2);
    let params = sarrm_params(config.alpha, epsilon, options.alpha0_min, k_max)?;
    let decisions = subtest_decisions(data, statistic, config, params.blocks(), params.alpha0)?;
    let t = randomized_response_sum(&decisions, params.p, &RandomStream::root(config.seed));
    let q = sarrm_q(params.p, params.alpha0);
    let p_value = binomial_upper_tail(params.blocks() as u64, t as u64, q);
    Ok(TestOutcome {
        p_value,
        exceedances: None,
        reject: t > params.k,
        randomized_reject: None,
        noisy_statistic: t as f64,
        noise_scale: 1.0 - params.p,
        alpha: config.alpha,
        num_permutations: config.num_permutations,
        seed: config.seed,
        mechanism: Mechanism::Sarrm,
        noisy_values: None,
    })
}

pub(crate) fn randomized_response_sum(bits: &[bool], p: f64, root: &RandomStream) -> usize {
    bits.iter()
        .enumerate()
        .filter(|&(s, &t)| {
            let keep = root.child(Purpose::Response, s as u64).uniform() < p;
            t == keep
        })
        .count()
}

/// `P(Bin(2k+1, q) = t)` for each `t`, the null law of `T`.
pub fn sarrm_null_pmf(k: usize, q: f64) -> Vec<f64> {
    let s = 2 * k as u64 + 1;
    (0..=s).map(|t| binomial_pmf(s, t, q)).collect()
}
