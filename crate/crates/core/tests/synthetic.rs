//! Generators against their densities and the closed-form population values.

mod common;

use common::stream;
use dpperm::dp_perm::permutation_test;
use dpperm::statistics::{hsic_v_streaming, mmd_v_streaming};
use dpperm::synthetic::{
    perturbation_1d, sample_dependent_two_point, sample_joint_perturbed_uniform, sample_perturbed_uniform,
    sample_two_point, two_point_hsic, two_point_mmd, DependentTwoPointSpec, PerturbedUniformSpec, TwoPointSpec,
};
use dpperm::{Dataset, KernelChoice, KernelSpec, Mechanism, PermutationStatistic, StatisticDescriptor, TestConfig};

fn ks_uniform(values: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// CDF of the one-dimensional perturbed uniform by midpoint quadrature.
fn perturbed_cdf(a: f64) -> impl Fn(f64) -> f64 {
    let cells = 200_000;
    let h = 1.0 / cells as f64;
    let mut cum = vec![0.0; cells + 1];
    for i in 0..cells {
        cum[i + 1] = cum[i] + h * perturbation_1d((i as f64 + 0.5) * h);
    }
    move |x: f64| {
        let x = x.clamp(0.0, 1.0);
        let pos = x / h;
        let i = (pos.floor() as usize).min(cells - 1);
        let frac = pos - i as f64;
        x + a * (cum[i] + frac * (cum[i + 1] - cum[i]))
    }
}

#[test]
fn rejection_sampler_matches_the_density() {
    for a in [0.3, 1.0] {
        let spec = PerturbedUniformSpec::new(1, a).unwrap();
        let x = sample_perturbed_uniform(100_000, &spec, &stream(90, (a * 10.0) as u64));
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        let mut v = x.iter().copied().collect::<Vec<_>>();
        let d = ks_uniform(&mut v, perturbed_cdf(a));
        assert!(d < 0.01, "a = {a}: KS distance {d}");
    }
}

#[test]
fn bump_shifts_mass_to_the_left_half() {
    let n = 100_000;
    let spec = PerturbedUniformSpec::new(1, 1.0).unwrap();
    let x = sample_perturbed_uniform(n, &spec, &stream(91, 0));
    let left = x.iter().filter(|&&v| v < 0.5).count() as f64 / n as f64;
    let mass = perturbed_cdf(1.0)(0.5) - 0.5;
    assert!(mass > 0.1);
    let sd = (0.25f64 / n as f64).sqrt();
    assert!((left - 0.5 - mass).abs() <= 3.0 * sd, "left {left}, shift {mass}");
}

#[test]
fn joint_sample_has_uniform_marginals() {
    let n = 100_000;
    let data = sample_joint_perturbed_uniform(n, 1, 2, 1.0, &stream(92, 0)).unwrap();
    let critical = 1.949 / (n as f64).sqrt();
    for col in [data.y().column(0), data.z().column(0), data.z().column(1)] {
        let mut v = col.to_vec();
        let d = ks_uniform(&mut v, |x| x.clamp(0.0, 1.0));
        assert!(d < critical, "KS {d} >= {critical}");
    }
    assert!(data.y().iter().chain(data.z().iter()).all(|v| (0.0..=1.0).contains(v)));
}

fn mmd_spec() -> TwoPointSpec {
    TwoPointSpec {
        x: vec![0.0],
        v: vec![1.0],
        p0: 0.75,
        q0: 0.25,
    }
}

fn hsic_spec() -> DependentTwoPointSpec {
    DependentTwoPointSpec {
        y1: vec![0.0],
        y2: vec![1.0],
        z1: vec![0.0],
        z2: vec![1.0],
        nu: 0.25,
    }
}

#[test]
fn large_sample_statistics_approach_population_values() {
    let k = KernelSpec::gaussian(1.0, 1).unwrap();
    let data = sample_two_point(10_000, 10_000, &mmd_spec(), &stream(93, 0)).unwrap();
    let empirical = mmd_v_streaming(&k, data.y(), data.z()).unwrap();
    let population = two_point_mmd(&mmd_spec(), &k).unwrap();
    assert!((empirical - population).abs() < 0.02, "{empirical} vs {population}");

    let spec = DependentTwoPointSpec { nu: 0.15, ..hsic_spec() };
    let paired = sample_dependent_two_point(10_000, &spec, &stream(94, 0)).unwrap();
    let empirical = hsic_v_streaming(&k, &k, paired.y(), paired.z()).unwrap();
    let population = two_point_hsic(&spec, &k, &k).unwrap();
    assert!((empirical - population).abs() < 0.02, "{empirical} vs {population}");
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn u_statistics_are_unbiased() {
    let k = KernelSpec::gaussian(1.0, 1).unwrap();
    let spec = TwoPointSpec { p0: 0.6, q0: 0.35, ..mmd_spec() };
    let stat = StatisticDescriptor::mmd_u(k.clone());
    let values: Vec<f64> = (0..5000)
        .map(|r| {
            let d: Dataset = sample_two_point(20, 15, &spec, &stream(95, r)).unwrap().into();
            stat.prepare(&d).unwrap().evaluate_identity()
        })
        .collect();
    let (mean, se) = mean_and_se(&values);
    let target = two_point_mmd(&spec, &k).unwrap().powi(2);
    assert!((mean - target).abs() <= 3.0 * se, "{mean} vs {target} (se {se})");

    let spec = DependentTwoPointSpec { nu: 0.1, ..hsic_spec() };
    let stat = StatisticDescriptor::hsic_u(k.clone(), k.clone());
    let values: Vec<f64> = (0..5000)
        .map(|r| {
            let d: Dataset = sample_dependent_two_point(20, &spec, &stream(96, r)).unwrap().into();
            stat.prepare(&d).unwrap().evaluate_identity()
        })
        .collect();
    let (mean, se) = mean_and_se(&values);
    let target = two_point_hsic(&spec, &k, &k).unwrap().powi(2);
    assert!((mean - target).abs() <= 3.0 * se, "{mean} vs {target} (se {se})");
}

#[test]
fn joint_perturbation_is_detected_at_large_n() {
    let data: Dataset = sample_joint_perturbed_uniform(3000, 1, 1, 0.4, &stream(97, 0)).unwrap().into();
    let g = KernelChoice::gaussian_median();
    let prepared = StatisticDescriptor::hsic_v(g, g).prepare(&data).unwrap();
    let cfg = TestConfig::new(0.05, 99, 5, None).unwrap();
    let outcome = permutation_test(&prepared, &cfg, Mechanism::NonPrivate).unwrap();
    assert!(outcome.reject, "p = {}", outcome.p_value);
    assert_eq!(outcome.p_value, 0.01);
}
