//! Test of Tests: a Tulap-privatized count of block rejections.

use crate::budget::TestConfig;
use crate::dp_perm::{Mechanism, TestOutcome};
use crate::rng::{Purpose, RandomStream};
use crate::statistics::{Dataset, StatisticDescriptor};
use crate::{Error, Result};

use super::tulap::{tulap_cdf, tulap_sample, TulapParam};
use super::{binomial_pmf, subtest_decisions};

/// Overrides for the default `S = ⌊√n⌋` blocks and `α₀ = min(5α, ½)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TotOptions {
    pub blocks: Option<usize>,
    pub alpha0: Option<f64>,
}

/// `Σ_s C(S,s) α₀^s (1−α₀)^{S−s} F_b(s − z)`, i.e. `P(Bin(S, α₀) + N ≥ z)`
/// for `N ~ Tulap(b)`.
pub fn tot_p_value(z: f64, blocks: usize, alpha0: f64, param: &TulapParam) -> f64 {
    (0..=blocks as u64)
        .map(|s| binomial_pmf(blocks as u64, s, alpha0) * tulap_cdf(param, s as f64 - z))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

pub fn tot_test(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    config: &TestConfig,
    epsilon: f64,
) -> Result<TestOutcome> {
    tot_test_with(data, statistic, config, epsilon, TotOptions::default())
}

/// Tulap noise comes from `child(Tulap, 0)`. The outcome reports `z` as the
/// noisy statistic and `b` as the noise scale.
pub fn tot_test_with(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    config: &TestConfig,
    epsilon: f64,
    options: TotOptions,
) -> Result<TestOutcome> {
    config.validate()?;
    let param = TulapParam::from_epsilon(epsilon)?;
    let n = data.effective_size();
    let blocks = options.blocks.unwrap_or(((n as f64).sqrt().floor() as usize).max(1));
    let alpha0 = options.alpha0.unwrap_or((5.0 * config.alpha).min(0.5));
    if !(alpha0 > 0.0 && alpha0 < 1.0) {
        return Err(Error::InvalidParameter(format!("sub-test level must lie in (0, 1), got {alpha0}")));
    }
    let decisions = subtest_decisions(data, statistic, config, blocks, alpha0)?;
    let a = decisions.iter().filter(|&&t| t).count() as f64;
    let z = a + tulap_sample(&param, &RandomStream::root(config.seed).child(Purpose::Tulap, 0));
    let p_value = tot_p_value(z, blocks, alpha0, &param);
    Ok(TestOutcome {
        p_value,
        exceedances: None,
        reject: p_value <= config.alpha,
        randomized_reject: None,
        noisy_statistic: z,
        noise_scale: param.b(),
        alpha: config.alpha,
        num_permutations: config.num_permutations,
        seed: config.seed,
        mechanism: Mechanism::Tot,
        noisy_values: None,
    })
}
