//! One test on user data, reported as a JSON object.

use clap::{Args, ValueEnum};
use dpperm::baselines::{sarrm_test, tot_test};
use dpperm::{
    dp_permutation_test, naive_dp_permutation_test, nonprivate_permutation_test, Bandwidth, Dataset,
    KernelChoice, KernelKind, PairedData, PrivacyBudget, StatisticDescriptor, StatisticKind, TestConfig,
    TestOutcome, TwoSampleData,
};
use ndarray::Array2;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Laplacian,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gaussian => KernelKind::Gaussian,
            KernelArg::Laplacian => KernelKind::Laplacian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    Mmd,
    MmdU,
    Hsic,
    HsicU,
    MeanDiff,
}

impl From<StatisticArg> for StatisticKind {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::Mmd => StatisticKind::MmdV,
            StatisticArg::MmdU => StatisticKind::MmdU,
            StatisticArg::Hsic => StatisticKind::HsicV,
            StatisticArg::HsicU => StatisticKind::HsicU,
            StatisticArg::MeanDiff => StatisticKind::MeanDiff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    Refined,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Tot,
    Sarrm,
}

/// `inf` (or `infinity`) or a positive number.
pub fn parse_epsilon(s: &str) -> Result<f64, String> {
    parse_positive_or_inf(s)
}

fn parse_positive_or_inf(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    if t == "inf" || t == "infinity" {
        return Ok(f64::INFINITY);
    }
    match t.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number or inf, got {s:?}")),
    }
}

/// `median` or a positive length scale.
pub fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    if s.trim().eq_ignore_ascii_case("median") {
        return Ok(Bandwidth::Median);
    }
    match s.trim().parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::LengthScale(h)),
        _ => Err(format!("expected `median` or a positive length scale, got {s:?}")),
    }
}

pub fn parse_p_norm(s: &str) -> Result<f64, String> {
    let v = parse_positive_or_inf(s)?;
    if v < 1.0 {
        return Err(format!("p-norm must be at least 1, got {s}"));
    }
    Ok(v)
}

/// Flags shared by `two-sample` and `independence`.
#[derive(Debug, Clone, Args)]
pub struct TestOptions {
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Privacy parameter; `inf` runs the non-private test.
    #[arg(long, default_value = "inf", value_parser = parse_epsilon)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Number of random permutations B. Cost grows as B times the squared sample size.
    #[arg(long, short = 'B', default_value_t = 500)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    pub kernel: KernelArg,
    /// `median` or a length scale h.
    #[arg(long, default_value = "median", value_parser = parse_bandwidth)]
    pub bandwidth: Bandwidth,
    /// Defaults to mmd for two-sample and hsic for independence.
    #[arg(long, value_enum)]
    pub statistic: Option<StatisticArg>,
    /// For mean-diff; `inf` allowed.
    #[arg(long, default_value = "2", value_parser = parse_p_norm)]
    pub p_norm: f64,
    /// Largest l_p distance between two points of the data domain, for mean-diff.
    #[arg(long)]
    pub domain_diameter: Option<f64>,
    #[arg(long, value_enum, default_value_t = MechanismArg::Refined)]
    pub mechanism: MechanismArg,
    /// Run a subsample-and-aggregate baseline instead (pure epsilon-DP).
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    /// Randomize non-rejections so the level is exactly alpha.
    #[arg(long)]
    pub exact_level: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            epsilon: f64::INFINITY,
            delta: 0.0,
            permutations: 500,
            seed: 0,
            kernel: KernelArg::Gaussian,
            bandwidth: Bandwidth::Median,
            statistic: None,
            p_norm: 2.0,
            domain_diameter: None,
            mechanism: MechanismArg::Refined,
            baseline: None,
            exact_level: false,
        }
    }
}

/// The JSON result. Field order is the output key order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    /// `null` for `ε = ∞`.
    pub epsilon: Option<f64>,
    pub delta: f64,
    #[serde(rename = "B")]
    pub permutations: usize,
    pub statistic: String,
    pub mechanism: String,
    pub noise_scale: f64,
    pub seed: u64,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn descriptor(opts: &TestOptions, kind: StatisticKind) -> CliResult<StatisticDescriptor> {
    let choice = KernelChoice {
        kind: opts.kernel.into(),
        bandwidth: opts.bandwidth,
    };
    Ok(match kind {
        StatisticKind::MmdV => StatisticDescriptor::mmd_v(choice),
        StatisticKind::MmdU => StatisticDescriptor::mmd_u(choice),
        StatisticKind::HsicV => StatisticDescriptor::hsic_v(choice, choice),
        StatisticKind::HsicU => StatisticDescriptor::hsic_u(choice, choice),
        StatisticKind::MeanDiff => {
            let diam = opts
                .domain_diameter
                .ok_or_else(|| CliError::Input("mean-diff needs --domain-diameter".into()))?;
            StatisticDescriptor::mean_diff(opts.p_norm, diam)
        }
    })
}

pub fn run_two_sample(y: Array2<f64>, z: Array2<f64>, opts: &TestOptions) -> CliResult<TestReport> {
    let data = TwoSampleData::new(y, z)?;
    run(&data.into(), opts)
}

/// `split` is the number of leading columns that form Y.
pub fn run_independence(data: Array2<f64>, split: usize, opts: &TestOptions) -> CliResult<TestReport> {
    let data = PairedData::from_columns(data.view(), split)?;
    run(&data.into(), opts)
}

pub fn run(data: &Dataset, opts: &TestOptions) -> CliResult<TestReport> {
    let two_sample = matches!(data, Dataset::TwoSample(_));
    let kind: StatisticKind = match opts.statistic {
        Some(s) => s.into(),
        None if two_sample => StatisticKind::MmdV,
        None => StatisticKind::HsicV,
    };
    if kind.is_two_sample() != two_sample {
        let shape = if two_sample { "two-sample" } else { "independence" };
        return Err(CliError::Input(format!("{} does not apply to {shape} data", kind.name())));
    }
    if !(0.0..1.0).contains(&opts.delta) {
        return Err(CliError::Input(format!("delta must lie in [0, 1), got {}", opts.delta)));
    }
    let stat = descriptor(opts, kind)?;
    let budget = if opts.epsilon.is_finite() {
        Some(PrivacyBudget::new(opts.epsilon, opts.delta)?)
    } else {
        None
    };
    let mut config = TestConfig::new(opts.alpha, opts.permutations, opts.seed, budget)?;
    config.exact_level_randomization = opts.exact_level;
    let outcome: TestOutcome = match opts.baseline {
        Some(baseline) => {
            if !opts.epsilon.is_finite() {
                return Err(CliError::Input("baselines need a finite --epsilon".into()));
            }
            if opts.delta != 0.0 {
                return Err(CliError::Input("baselines are pure epsilon-DP; --delta must be 0".into()));
            }
            match baseline {
                BaselineArg::Tot => tot_test(data, &stat, &config, opts.epsilon)?,
                BaselineArg::Sarrm => sarrm_test(data, &stat, &config, opts.epsilon)?,
            }
        }
        None if budget.is_none() => nonprivate_permutation_test(data, &stat, &config)?,
        None => match opts.mechanism {
            MechanismArg::Refined => dp_permutation_test(data, &stat, &config)?,
            MechanismArg::Naive => naive_dp_permutation_test(data, &stat, &config)?,
        },
    };
    Ok(TestReport {
        p_value: outcome.p_value,
        reject: outcome.decision(),
        alpha: opts.alpha,
        epsilon: opts.epsilon.is_finite().then_some(opts.epsilon),
        delta: opts.delta,
        permutations: opts.permutations,
        statistic: kind.name().to_string(),
        mechanism: outcome.mechanism.name().to_string(),
        noise_scale: outcome.noise_scale,
        seed: opts.seed,
    })
}
