//! Private permutation tests.
//!
//! With statistic values `T_0, …, T_B` (`T_0` on the unpermuted data) and
//! Laplace draws `ζ_0, …, ζ_B`, the test releases
//!
//! ```text
//! M_i = T_i + scale · ζ_i
//! p   = (1 + #{i ≥ 1 : M_i ≥ M_0}) / (B + 1)
//! ```
//!
//! and rejects when `p ≤ α`. The refined calibration uses `scale = 2Δ/ξ`,
//! the naive one `scale = Δ / (ε/(B+1) + ln(1/(1 − δ/(B+1))))`.
//!
//! Stream plan under `RandomStream::root(seed)`: permutation `i` uses
//! `child(Permutation, i)`, noise draw `i` uses `child(Noise, i)`, and the
//! exact-level coin uses `child(Randomization, 0)`.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{PrivacyBudget, TestConfig};
use crate::rng::{laplace_sample, random_permutation, Purpose, RandomStream};
use crate::statistics::{Dataset, PermutationStatistic, PreparedStatistic, StatisticDescriptor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Refined,
    Naive,
    NonPrivate,
    Tot,
    Sarrm,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Refined => "refined",
            Mechanism::Naive => "naive",
            Mechanism::NonPrivate => "nonprivate",
            Mechanism::Tot => "tot",
            Mechanism::Sarrm => "sarrm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub p_value: f64,
    /// Numerator of the permutation p-value over `B + 1`; `None` for the
    /// aggregation baselines, whose p-values are not lattice-valued.
    pub exceedances: Option<u64>,
    /// `p_value ≤ α`.
    pub reject: bool,
    /// Decision after exact-level randomization, when requested.
    pub randomized_reject: Option<bool>,
    /// `M_0` for permutation tests; the noisy aggregate for the baselines.
    pub noisy_statistic: f64,
    pub noise_scale: f64,
    pub alpha: f64,
    pub num_permutations: usize,
    pub seed: u64,
    pub mechanism: Mechanism,
    /// All `M_i`, only when `retain_noisy_values` is set.
    pub noisy_values: Option<Vec<f64>>,
}

impl TestOutcome {
    /// The p-value as an exact fraction, for permutation tests.
    pub fn p_value_ratio(&self) -> Option<Ratio<u64>> {
        self.exceedances
            .map(|c| Ratio::new(c, self.num_permutations as u64 + 1))
    }

    /// The final decision: the randomized one if present.
    pub fn decision(&self) -> bool {
        self.randomized_reject.unwrap_or(self.reject)
    }
}

/// Largest count `c` with `c/(B+1) ≤ α` in floating point, so the count
/// rule, the p-value rule and the quantile rule all agree.
pub fn max_rejecting_count(alpha: f64, num_permutations: usize) -> u64 {
    let total = num_permutations as u64 + 1;
    let tf = total as f64;
    let mut c = ((alpha * tf).floor().max(0.0) as u64).min(total);
    while c < total && ((c + 1) as f64) / tf <= alpha {
        c += 1;
    }
    while c > 0 && (c as f64) / tf > alpha {
        c -= 1;
    }
    c
}

/// Noise scale of the Laplace mechanism for statistic sensitivity `delta_t`.
///
/// `NonPrivate` and a missing budget give 0. `Naive` requires a budget.
pub fn noise_scale(
    mechanism: Mechanism,
    sensitivity: f64,
    budget: Option<&PrivacyBudget>,
    num_permutations: usize,
) -> Result<f64> {
    let budget = match (mechanism, budget) {
        (Mechanism::NonPrivate, _) | (Mechanism::Refined, None) => return Ok(0.0),
        (Mechanism::Naive, None) => {
            return Err(Error::InvalidParameter(
                "the naive mechanism needs a privacy budget".into(),
            ))
        }
        (Mechanism::Tot | Mechanism::Sarrm, _) => {
            return Err(Error::InvalidParameter(format!(
                "{} is not a Laplace permutation mechanism",
                mechanism.name()
            )))
        }
        (_, Some(b)) => b,
    };
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sensitivity must be positive and finite with a privacy budget, got {sensitivity}"
        )));
    }
    Ok(match mechanism {
        Mechanism::Refined => 2.0 * sensitivity / budget.xi(),
        _ => {
            let b1 = num_permutations as f64 + 1.0;
            sensitivity / (budget.epsilon() / b1 - (-budget.delta() / b1).ln_1p())
        }
    })
}

/// `[T_0, T_1, …, T_B]` with `T_0` on the identity and `T_i` on the
/// permutation drawn from `child(Permutation, i)`.
pub fn permuted_statistics<S: PermutationStatistic + ?Sized>(
    stat: &S,
    num_permutations: usize,
    seed: u64,
) -> Vec<f64> {
    let root = RandomStream::root(seed);
    let len = stat.permutation_len();
    (0..=num_permutations)
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                stat.evaluate_identity()
            } else {
                stat.evaluate(&random_permutation(len, &root.child(Purpose::Permutation, i as u64)))
            }
        })
        .collect()
}

/// V- and U-form values over the same permutations as
/// [`permuted_statistics`], from a single pass per permutation.
pub fn permuted_v_u_statistics(
    stat: &PreparedStatistic,
    num_permutations: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = stat.permutation_len();
    let identity: Vec<usize> = (0..len).collect();
    if stat.evaluate_v_u(&identity).is_none() {
        return Err(Error::InvalidParameter(format!(
            "{} has no U form for this sample size",
            stat.kind().name()
        )));
    }
    let root = RandomStream::root(seed);
    let pairs: Vec<(f64, f64)> = (0..=num_permutations)
        .into_par_iter()
        .map(|i| {
            let perm = if i == 0 {
                identity.clone()
            } else {
                random_permutation(len, &root.child(Purpose::Permutation, i as u64))
            };
            stat.evaluate_v_u(&perm).expect("size checked above")
        })
        .collect();
    Ok(pairs.into_iter().unzip())
}

/// Adds the seeded noise to precomputed statistics and forms the outcome.
pub fn outcome_from_statistics(
    values: &[f64],
    scale: f64,
    config: &TestConfig,
    mechanism: Mechanism,
) -> Result<TestOutcome> {
    config.validate()?;
    if values.len() != config.num_permutations + 1 {
        return Err(Error::SizeMismatch(format!(
            "{} statistic values for B = {}",
            values.len(),
            config.num_permutations
        )));
    }
    let root = RandomStream::root(config.seed);
    let noisy: Vec<f64> = if scale > 0.0 {
        values
            .iter()
            .enumerate()
            .map(|(i, t)| t + scale * laplace_sample(&root.child(Purpose::Noise, i as u64)))
            .collect()
    } else {
        values.to_vec()
    };
    let m0 = noisy[0];
    let exceed = 1 + noisy[1..].iter().filter(|&&m| m >= m0).count() as u64;
    let b1 = config.num_permutations as u64 + 1;
    let p_value = exceed as f64 / b1 as f64;
    let reject = exceed <= max_rejecting_count(config.alpha, config.num_permutations);
    let mut outcome = TestOutcome {
        p_value,
        exceedances: Some(exceed),
        reject,
        randomized_reject: None,
        noisy_statistic: m0,
        noise_scale: scale,
        alpha: config.alpha,
        num_permutations: config.num_permutations,
        seed: config.seed,
        mechanism,
        noisy_values: config.retain_noisy_values.then_some(noisy),
    };
    if config.exact_level_randomization {
        let coin = root.child(Purpose::Randomization, 0);
        outcome.randomized_reject = Some(randomize_exact_level(&outcome, config, &coin));
    }
    Ok(outcome)
}

/// Runs the permutation test on a prepared statistic.
pub fn permutation_test<S: PermutationStatistic + ?Sized>(
    stat: &S,
    config: &TestConfig,
    mechanism: Mechanism,
) -> Result<TestOutcome> {
    config.validate()?;
    let scale = noise_scale(mechanism, stat.sensitivity(), config.budget.as_ref(), config.num_permutations)?;
    let mechanism = if scale == 0.0 { Mechanism::NonPrivate } else { mechanism };
    let values = permuted_statistics(stat, config.num_permutations, config.seed);
    outcome_from_statistics(&values, scale, config, mechanism)
}

/// Like [`permutation_test`] but with caller-supplied permutations
/// `π_1, …, π_B` (the identity is always `π_0`), e.g. a full enumeration.
/// `config.num_permutations` must equal `perms.len()`.
pub fn permutation_test_with<S: PermutationStatistic + ?Sized>(
    stat: &S,
    config: &TestConfig,
    mechanism: Mechanism,
    perms: &[Vec<usize>],
) -> Result<TestOutcome> {
    if perms.len() != config.num_permutations {
        return Err(Error::SizeMismatch(format!(
            "{} permutations supplied for B = {}",
            perms.len(),
            config.num_permutations
        )));
    }
    let len = stat.permutation_len();
    for p in perms {
        crate::statistics::validate_permutation(p, len)?;
    }
    let scale = noise_scale(mechanism, stat.sensitivity(), config.budget.as_ref(), config.num_permutations)?;
    let mechanism = if scale == 0.0 { Mechanism::NonPrivate } else { mechanism };
    let mut values = Vec::with_capacity(perms.len() + 1);
    values.push(stat.evaluate_identity());
    values.par_extend(perms.par_iter().map(|p| stat.evaluate(p)));
    outcome_from_statistics(&values, scale, config, mechanism)
}

/// The private permutation test with noise scale `2Δ/ξ`. Without a budget
/// this is the classical Monte Carlo permutation test.
pub fn dp_permutation_test(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    config: &TestConfig,
) -> Result<TestOutcome> {
    let prepared = statistic.prepare(data)?;
    permutation_test(&prepared, config, Mechanism::Refined)
}

/// The private permutation test with each of the `B + 1` statistics
/// privatized separately under basic composition.
pub fn naive_dp_permutation_test(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    config: &TestConfig,
) -> Result<TestOutcome> {
    let prepared = statistic.prepare(data)?;
    permutation_test(&prepared, config, Mechanism::Naive)
}

/// The classical Monte Carlo permutation test, ignoring any budget.
pub fn nonprivate_permutation_test(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    config: &TestConfig,
) -> Result<TestOutcome> {
    let prepared = statistic.prepare(data)?;
    permutation_test(&prepared, config, Mechanism::NonPrivate)
}

/// Whether `M_0` exceeds the `(B+1−c)`-th smallest of all `B+1` values,
/// where `c` is [`max_rejecting_count`]. Equivalent to `p ≤ α`.
pub fn quantile_form_decision(values: &[f64], alpha: f64) -> bool {
    if values.is_empty() {
        return false;
    }
    let b = values.len() - 1;
    let c = max_rejecting_count(alpha, b) as usize;
    if c == 0 {
        return false;
    }
    let k = values.len() - c;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values[0] > sorted[k - 1]
}

/// Turns a non-rejection into a rejection with probability
/// `(α − γ)/(1 − γ)`, `γ = ⌊(B+1)α⌋/(B+1)`, using the first uniform of
/// `stream`. Rejections stay rejections.
pub fn randomize_exact_level(outcome: &TestOutcome, config: &TestConfig, stream: &RandomStream) -> bool {
    if outcome.reject {
        return true;
    }
    stream.uniform() < auxiliary_probability(config.alpha, config.num_permutations)
}

/// `(α − γ)/(1 − γ)` with `γ = ⌊(B+1)α⌋/(B+1)`.
pub fn auxiliary_probability(alpha: f64, num_permutations: usize) -> f64 {
    let gamma = max_rejecting_count(alpha, num_permutations) as f64 / (num_permutations as f64 + 1.0);
    ((alpha - gamma) / (1.0 - gamma)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::statistics::TwoSampleData;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;

    struct Fixed(Vec<f64>);

    /// Statistic equal to a fixed value per first permuted index; useful to
    /// force orderings.
    impl PermutationStatistic for Fixed {
        fn permutation_len(&self) -> usize {
            self.0.len()
        }
        fn evaluate(&self, perm: &[usize]) -> f64 {
            self.0[perm[0]]
        }
        fn sensitivity(&self) -> f64 {
            1.0
        }
    }

    fn config(b: usize, budget: Option<PrivacyBudget>) -> TestConfig {
        TestConfig::new(0.05, b, 7, budget).unwrap()
    }

    #[test]
    fn max_rejecting_count_examples() {
        assert_eq!(max_rejecting_count(0.05, 99), 5);
        assert_eq!(max_rejecting_count(0.05, 19), 1);
        assert_eq!(max_rejecting_count(0.05, 10), 0);
        assert_eq!(max_rejecting_count(0.29, 99), 29);
        assert_eq!(max_rejecting_count(0.055, 99), 5);
        assert_eq!(max_rejecting_count(0.999, 0), 0);
    }

    #[test]
    fn largest_statistic_gives_smallest_p_value() {
        let mut values = vec![0.0; 100];
        values[0] = 10.0;
        let o = outcome_from_statistics(&values, 0.0, &config(99, None), Mechanism::NonPrivate).unwrap();
        assert_eq!(o.p_value, 0.01);
        assert_eq!(o.p_value_ratio(), Some(Ratio::new(1, 100)));
        assert!(o.reject);
        assert!(o.noisy_values.is_none());
    }

    #[test]
    fn ties_count_toward_the_p_value() {
        let values = vec![1.0; 20];
        let o = outcome_from_statistics(&values, 0.0, &config(19, None), Mechanism::NonPrivate).unwrap();
        assert_eq!(o.p_value, 1.0);
        assert!(!o.reject);
    }

    #[test]
    fn noise_scales() {
        let b = PrivacyBudget::pure(0.5).unwrap();
        assert_eq!(noise_scale(Mechanism::Refined, 0.1, Some(&b), 99).unwrap(), 0.4);
        let naive = noise_scale(Mechanism::Naive, 0.1, Some(&b), 99).unwrap();
        assert_abs_diff_eq!(naive, 0.1 * 100.0 / 0.5, epsilon = 1e-12);
        let eq = PrivacyBudget::pure(2.0 * 0.5 / 100.0).unwrap();
        assert_abs_diff_eq!(naive, noise_scale(Mechanism::Refined, 0.1, Some(&eq), 99).unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            noise_scale(Mechanism::Naive, 0.1, Some(&b), 1).unwrap(),
            noise_scale(Mechanism::Refined, 0.1, Some(&b), 1).unwrap(),
            epsilon = 1e-15
        );
        assert_eq!(noise_scale(Mechanism::Refined, 0.1, None, 99).unwrap(), 0.0);
        assert!(noise_scale(Mechanism::Naive, 0.1, None, 99).is_err());
        assert!(noise_scale(Mechanism::Refined, 0.0, Some(&b), 99).is_err());
        let bd = PrivacyBudget::new(1.0, 0.5).unwrap();
        let expected = 0.1 / (1.0 / 100.0 + (1.0 / (1.0 - 0.005f64)).ln());
        assert_abs_diff_eq!(noise_scale(Mechanism::Naive, 0.1, Some(&bd), 99).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn engine_is_deterministic_and_retains_on_request() {
        let stat = Fixed((0..30).map(|i| i as f64).collect());
        let mut c = config(49, Some(PrivacyBudget::pure(1.0).unwrap()));
        c.retain_noisy_values = true;
        let a = permutation_test(&stat, &c, Mechanism::Refined).unwrap();
        let b = permutation_test(&stat, &c, Mechanism::Refined).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.noisy_values.as_ref().unwrap().len(), 50);
        assert_eq!(a.noise_scale, 2.0);
        assert_eq!(a.noisy_values.unwrap()[0], a.noisy_statistic);
        let np = permutation_test(&stat, &c.clone().with_budget(None), Mechanism::Refined).unwrap();
        assert_eq!(np.mechanism, Mechanism::NonPrivate);
        assert_eq!(np.noise_scale, 0.0);
    }

    #[test]
    fn quantile_form_matches_p_value_rule_on_random_instances() {
        let root = RandomStream::root(3);
        for i in 0..1000u64 {
            let mut rng = root.child(Purpose::Sample, i).rng();
            let b = rng.random_range(1..60usize);
            let alpha = rng.random_range(0.001..0.5);
            let values: Vec<f64> = (0..=b)
                .map(|j| rng.random::<f64>() + laplace_sample(&root.child(Purpose::Noise, i * 100 + j as u64)))
                .collect();
            let c = TestConfig::new(alpha, b, 0, None).unwrap();
            let o = outcome_from_statistics(&values, 0.0, &c, Mechanism::NonPrivate).unwrap();
            assert_eq!(o.reject, quantile_form_decision(&values, alpha));
        }
    }

    #[test]
    fn quantile_form_examples() {
        assert!(quantile_form_decision(&[5.0, 1.0, 2.0, 3.0], 0.25));
        assert!(!quantile_form_decision(&[5.0, 1.0, 2.0, 3.0], 0.2));
        assert!(!quantile_form_decision(&[1.0, 5.0, 2.0, 3.0], 0.25));
    }

    #[test]
    fn exact_level_randomization() {
        assert_eq!(auxiliary_probability(0.05, 99), 0.0);
        assert_abs_diff_eq!(auxiliary_probability(0.055, 99), 0.005 / 0.95, epsilon = 1e-12);
        let mut c = TestConfig::new(0.055, 99, 1, None).unwrap();
        c.exact_level_randomization = true;
        let mut values = vec![0.0; 100];
        values[0] = 1.0;
        let o = outcome_from_statistics(&values, 0.0, &c, Mechanism::NonPrivate).unwrap();
        assert_eq!(o.randomized_reject, Some(true));
        let root = RandomStream::root(8);
        let not_rejected = TestOutcome {
            reject: false,
            ..o
        };
        let hits = (0..200_000u64)
            .filter(|&i| randomize_exact_level(&not_rejected, &c, &root.child(Purpose::Randomization, i)))
            .count();
        let rate = hits as f64 / 200_000.0;
        assert!((rate - 0.005 / 0.95).abs() < 5e-4, "rate {rate}");
    }

    #[test]
    fn p_value_is_monotone_in_the_observed_statistic() {
        let mut rng = RandomStream::root(12).rng();
        let base: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let c = config(39, Some(PrivacyBudget::pure(1.0).unwrap()));
        let mut prev = f64::INFINITY;
        for step in 0..50 {
            let mut v = base.clone();
            v[0] = -2.0 + 0.1 * step as f64;
            let p = outcome_from_statistics(&v, 0.3, &c, Mechanism::Refined).unwrap().p_value;
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn joint_v_u_values_match_separate_passes() {
        let root = RandomStream::root(77);
        let y = Array2::from_shape_fn((6, 1), |_| root.child(Purpose::Data, 0).rng().random::<f64>());
        let mut rng = root.child(Purpose::Data, 1).rng();
        let z = Array2::from_shape_fn((5, 1), |_| rng.random::<f64>() + 0.3);
        let data: Dataset = TwoSampleData::new(y, z).unwrap().into();
        let v = crate::StatisticDescriptor::mmd_v(KernelSpec::gaussian(1.0, 1).unwrap()).prepare(&data).unwrap();
        let u = v.with_kind(crate::StatisticKind::MmdU).unwrap();
        let (jv, ju) = permuted_v_u_statistics(&v, 30, 4).unwrap();
        assert_eq!(jv, permuted_statistics(&v, 30, 4));
        assert_eq!(ju, permuted_statistics(&u, 30, 4));
    }

    #[test]
    fn end_to_end_two_sample() {
        let y = Array2::from_shape_fn((20, 1), |(i, _)| i as f64 / 20.0);
        let z = Array2::from_shape_fn((20, 1), |(i, _)| 3.0 + i as f64 / 20.0);
        let data: Dataset = TwoSampleData::new(y, z).unwrap().into();
        let stat = StatisticDescriptor::mmd_v(KernelSpec::gaussian(1.0, 1).unwrap());
        let c = TestConfig::new(0.05, 99, 5, None).unwrap();
        let o = dp_permutation_test(&data, &stat, &c).unwrap();
        assert!(o.reject);
        assert_eq!(o.p_value, 0.01);
        let private = c.clone().with_budget(Some(PrivacyBudget::pure(1e-3).unwrap()));
        let o = dp_permutation_test(&data, &stat, &private).unwrap();
        assert!(o.noise_scale > 1.0);
        assert!(naive_dp_permutation_test(&data, &stat, &c).is_err());
    }
}
