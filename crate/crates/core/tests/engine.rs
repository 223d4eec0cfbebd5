//! The permutation engine against exhaustive enumeration, its exact null
//! level, and the quantile form of the decision.

mod common;

use common::{random_kernel, stream, uniform_matrix, within_binomial_band};
use dpperm::dp_perm::{
    max_rejecting_count, outcome_from_statistics, permutation_test, permutation_test_with, quantile_form_decision,
};
use dpperm::oracle::{all_permutations, exhaustive_permutation_pvalue, OracleBudget};
use dpperm::rng::random_permutation;
use dpperm::{
    dp_permutation_test, naive_dp_permutation_test, Dataset, Mechanism, PairedData, PermutationStatistic,
    PrivacyBudget, Purpose, StatisticDescriptor, StatisticKind, TestConfig, TwoSampleData,
};
use ndarray::{Axis, Array2};
use rand::Rng;

fn config(alpha: f64, b: usize, seed: u64, budget: Option<PrivacyBudget>) -> TestConfig {
    TestConfig::new(alpha, b, seed, budget).unwrap()
}

fn random_instance(kind: StatisticKind, max_size: usize, rng: &mut dpperm::rng::StreamRng) -> (Dataset, StatisticDescriptor) {
    let d = rng.random_range(1..=2);
    match kind {
        StatisticKind::HsicV | StatisticKind::HsicU => {
            let lo = if kind == StatisticKind::HsicU { 4 } else { 2 };
            let n = rng.random_range(lo..=max_size);
            let dz = rng.random_range(1..=2);
            let data = PairedData::new(uniform_matrix(n, d, 3.0, rng), uniform_matrix(n, dz, 3.0, rng)).unwrap();
            let stat = if kind == StatisticKind::HsicV {
                StatisticDescriptor::hsic_v(random_kernel(d, rng), random_kernel(dz, rng))
            } else {
                StatisticDescriptor::hsic_u(random_kernel(d, rng), random_kernel(dz, rng))
            };
            (data.into(), stat)
        }
        _ => {
            let lo = if kind == StatisticKind::MmdU { 2 } else { 1 };
            let n = rng.random_range(lo..=max_size - lo);
            let m = rng.random_range(lo..=max_size - n);
            let data = TwoSampleData::new(uniform_matrix(n, d, 3.0, rng), uniform_matrix(m, d, 3.0, rng)).unwrap();
            let stat = match kind {
                StatisticKind::MmdV => StatisticDescriptor::mmd_v(random_kernel(d, rng)),
                StatisticKind::MmdU => StatisticDescriptor::mmd_u(random_kernel(d, rng)),
                _ => StatisticDescriptor::mean_diff([1.0, 2.0, f64::INFINITY][rng.random_range(0..3)], 3.0 * d as f64),
            };
            (data.into(), stat)
        }
    }
}

const KINDS: [StatisticKind; 5] = [
    StatisticKind::MmdV,
    StatisticKind::MmdU,
    StatisticKind::HsicV,
    StatisticKind::HsicU,
    StatisticKind::MeanDiff,
];

#[test]
fn permuted_evaluation_matches_permuted_data() {
    for (k, &kind) in KINDS.iter().enumerate() {
        for t in 0..100u64 {
            let s = stream(10 + k as u64, t);
            let mut rng = s.rng();
            let (data, stat) = random_instance(kind, 12, &mut rng);
            let prepared = stat.prepare(&data).unwrap();
            let perm = random_permutation(prepared.permutation_len(), &s.child(Purpose::Permutation, 0));
            let moved: Dataset = match &data {
                Dataset::TwoSample(d) => {
                    let pooled = d.pooled().select(Axis(0), &perm);
                    TwoSampleData::new(
                        pooled.slice(ndarray::s![..d.n(), ..]).to_owned(),
                        pooled.slice(ndarray::s![d.n().., ..]).to_owned(),
                    )
                    .unwrap()
                    .into()
                }
                Dataset::Paired(d) => PairedData::new(d.y().to_owned(), d.z().select(Axis(0), &perm)).unwrap().into(),
            };
            let direct = stat.prepare(&moved).unwrap().evaluate_identity();
            let via_perm = prepared.evaluate(&perm);
            assert!((direct - via_perm).abs() <= 1e-12, "{kind:?} trial {t}: {direct} vs {via_perm}");
        }
    }
}

#[test]
fn full_enumeration_matches_exhaustive_oracle() {
    for (k, &kind) in KINDS.iter().enumerate() {
        for t in 0..50u64 {
            let mut rng = stream(20 + k as u64, t).rng();
            let (data, stat) = random_instance(kind, 7, &mut rng);
            let prepared = stat.prepare(&data).unwrap();
            let perms = all_permutations(prepared.permutation_len());
            let cfg = config(0.05, perms.len() - 1, t, None);
            let outcome = permutation_test_with(&prepared, &cfg, Mechanism::NonPrivate, &perms[1..]).unwrap();
            let oracle = exhaustive_permutation_pvalue(&data, &stat, &OracleBudget::default()).unwrap();
            assert_eq!(outcome.p_value_ratio().unwrap(), oracle, "{kind:?} trial {t}");
        }
    }
}

fn null_two_sample(n: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed, 0).rng();
    TwoSampleData::new(uniform_matrix(n, 1, 1.0, &mut rng), uniform_matrix(n, 1, 1.0, &mut rng))
        .unwrap()
        .into()
}

#[test]
fn private_test_has_exact_null_level() {
    let reps = 2000;
    let stat = StatisticDescriptor::mmd_v(dpperm::KernelSpec::gaussian(2.0, 1).unwrap());
    let budget = PrivacyBudget::pure(1.0).unwrap();
    let (alpha, b) = (0.1, 19);
    let level = max_rejecting_count(alpha, b) as f64 / (b + 1) as f64;
    let mut hits = 0;
    let mut randomized = 0;
    for r in 0..reps {
        let data = null_two_sample(10, 1000 + r);
        let mut cfg = config(0.07, b, r, Some(budget));
        cfg.exact_level_randomization = true;
        let o = dp_permutation_test(&data, &stat, &cfg).unwrap();
        randomized += o.randomized_reject.unwrap() as usize;
        let o = dp_permutation_test(&data, &stat, &config(alpha, b, r, Some(budget))).unwrap();
        hits += o.reject as usize;
    }
    assert!(within_binomial_band(hits, reps as usize, level, 3.0), "{hits}/{reps}");
    assert!(within_binomial_band(randomized, reps as usize, 0.07, 3.0), "{randomized}/{reps}");
}

#[test]
fn private_independence_test_has_exact_null_level() {
    let reps = 2000;
    let g = dpperm::KernelSpec::gaussian(1.0, 1).unwrap();
    let stat = StatisticDescriptor::hsic_v(g.clone(), g);
    let budget = PrivacyBudget::new(0.5, 0.01).unwrap();
    let mut hits = 0;
    for r in 0..reps {
        let mut rng = stream(2000 + r, 0).rng();
        let data: Dataset =
            PairedData::new(uniform_matrix(12, 1, 1.0, &mut rng), uniform_matrix(12, 1, 1.0, &mut rng)).unwrap().into();
        hits += dp_permutation_test(&data, &stat, &config(0.05, 39, r, Some(budget))).unwrap().reject as usize;
    }
    assert!(within_binomial_band(hits, reps as usize, 0.05, 3.0), "{hits}/{reps}");
}

fn check_orderings(values: &[f64]) {
    let b = values.len() - 1;
    let total = (b + 1) as f64;
    let mut alphas: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    for c in 0..=b + 1 {
        let a = c as f64 / total;
        alphas.extend([a, a - 1e-12, a + 1e-12]);
    }
    for &alpha in alphas.iter().filter(|a| **a > 0.0 && **a < 1.0) {
        let cfg = config(alpha, b, 0, None);
        let by_p = outcome_from_statistics(values, 0.0, &cfg, Mechanism::NonPrivate).unwrap();
        assert_eq!(by_p.reject, by_p.p_value <= alpha);
        assert_eq!(quantile_form_decision(values, alpha), by_p.reject, "{values:?} at {alpha}");
    }
}

#[test]
fn quantile_form_agrees_on_every_ordering() {
    for b in 1..=6 {
        for order in all_permutations(b + 1) {
            let values: Vec<f64> = order.iter().map(|&r| r as f64 * 0.5 - 1.0).collect();
            check_orderings(&values);
        }
    }
}

#[test]
fn quantile_form_agrees_on_noisy_instances() {
    let stat = StatisticDescriptor::mmd_v(dpperm::KernelSpec::gaussian(1.0, 1).unwrap());
    for t in 0..1000u64 {
        let mut rng = stream(30, t).rng();
        let n = rng.random_range(2..=8);
        let data = null_two_sample(n, 40_000 + t);
        let b = rng.random_range(1..=60);
        let alpha = rng.random_range(0.005..0.5);
        let mut cfg = config(alpha, b, t, Some(PrivacyBudget::pure(rng.random_range(0.1..5.0)).unwrap()));
        cfg.retain_noisy_values = true;
        let o = dp_permutation_test(&data, &stat, &cfg).unwrap();
        let noisy = o.noisy_values.as_ref().unwrap();
        assert_eq!(quantile_form_decision(noisy, alpha), o.reject, "instance {t}");
    }
}

/// `⌈(1−α)B⌉`-th smallest of the permuted noisy values.
fn upper_quantile(noisy: &[f64], alpha: f64) -> f64 {
    let mut rest = noisy[1..].to_vec();
    rest.sort_by(f64::total_cmp);
    let k = ((1.0 - alpha) * rest.len() as f64).ceil().max(1.0) as usize;
    rest[k - 1]
}

#[test]
fn noisy_quantile_moves_by_at_most_the_sensitivity() {
    let kernel = dpperm::KernelSpec::gaussian(1.0, 2).unwrap();
    let stat = StatisticDescriptor::mmd_v(kernel);
    for t in 0..1000u64 {
        let mut rng = stream(31, t).rng();
        let (n, m) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let pooled = uniform_matrix(n + m, 2, 4.0, &mut rng);
        let mut other = pooled.clone();
        let r = rng.random_range(0..n + m);
        other.row_mut(r).fill(rng.random_range(-50.0..50.0));
        let split = |x: &Array2<f64>| -> Dataset {
            TwoSampleData::new(x.slice(ndarray::s![..n, ..]).to_owned(), x.slice(ndarray::s![n.., ..]).to_owned())
                .unwrap()
                .into()
        };
        let mut cfg = config(0.05, 49, t, Some(PrivacyBudget::pure(1.0).unwrap()));
        cfg.retain_noisy_values = true;
        let a = dp_permutation_test(&split(&pooled), &stat, &cfg).unwrap();
        let b = dp_permutation_test(&split(&other), &stat, &cfg).unwrap();
        let delta = stat.prepare(&split(&pooled)).unwrap().sensitivity();
        for alpha in [0.01, 0.05, 0.2, 0.5] {
            let qa = upper_quantile(a.noisy_values.as_ref().unwrap(), alpha);
            let qb = upper_quantile(b.noisy_values.as_ref().unwrap(), alpha);
            assert!((qa - qb).abs() <= delta + 1e-12, "pair {t}: {qa} vs {qb}, delta {delta}");
        }
    }
}

#[test]
fn naive_test_equals_refined_at_rescaled_budget() {
    let stat = StatisticDescriptor::mmd_v(dpperm::KernelSpec::gaussian(1.0, 1).unwrap());
    for t in 0..50u64 {
        let data = null_two_sample(15, 50_000 + t);
        let (eps, b) = (2.0, 99);
        let naive = naive_dp_permutation_test(&data, &stat, &config(0.05, b, t, Some(PrivacyBudget::pure(eps).unwrap()))).unwrap();
        let rescaled = PrivacyBudget::pure(2.0 * eps / (b as f64 + 1.0)).unwrap();
        let refined = dp_permutation_test(&data, &stat, &config(0.05, b, t, Some(rescaled))).unwrap();
        assert!((naive.noise_scale - refined.noise_scale).abs() <= 1e-14 * refined.noise_scale);
        assert_eq!(naive.p_value, refined.p_value);
        assert_eq!(naive.reject, refined.reject);
    }
}

#[test]
fn outcome_does_not_depend_on_thread_count() {
    let stat = StatisticDescriptor::hsic_v(dpperm::KernelSpec::gaussian(1.0, 1).unwrap(), dpperm::KernelSpec::laplacian(1.0, 1).unwrap());
    let mut rng = stream(60, 0).rng();
    let data: Dataset = PairedData::new(uniform_matrix(40, 1, 1.0, &mut rng), uniform_matrix(40, 1, 1.0, &mut rng)).unwrap().into();
    let prepared = stat.prepare(&data).unwrap();
    let mut cfg = config(0.05, 300, 17, Some(PrivacyBudget::pure(0.3).unwrap()));
    cfg.retain_noisy_values = true;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| permutation_test(&prepared, &cfg, Mechanism::Refined).unwrap())
    };
    let one = run(1);
    for threads in [2, 4, 8] {
        let other = run(threads);
        assert_eq!(one.p_value.to_bits(), other.p_value.to_bits());
        let bits = |o: &dpperm::TestOutcome| o.noisy_values.as_ref().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&one), bits(&other));
    }
}
