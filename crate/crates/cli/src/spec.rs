//! The JSON experiment description.

use std::path::{Path, PathBuf};

use dpperm::{Bandwidth, KernelKind};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Uniform on `[0,1]^d` against the perturbed uniform with amplitude `a`.
    TwoSamplePerturbedUniform,
    /// `(Y, Z)` from the `2d`-dimensional perturbed uniform with amplitude `a`.
    IndependencePerturbedUniform,
    /// Two atoms `0` and `1` in `R^d`: weights `(1 ± a)/2` for two samples, or
    /// the dependent joint law with parameter `ν` for independence.
    TwoPoint,
    /// Fixed data from CSV files; repetitions only redraw permutations and noise.
    UserData,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::TwoSamplePerturbedUniform => "two_sample_perturbed_uniform",
            Scenario::IndependencePerturbedUniform => "independence_perturbed_uniform",
            Scenario::TwoPoint => "two_point",
            Scenario::UserData => "user_data",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    TwoSample,
    Independence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestName {
    /// The private permutation test on the V-statistic.
    #[serde(alias = "dpmmd", alias = "dphsic")]
    Dp,
    /// Per-statistic noise under basic composition.
    Naive,
    /// The private permutation test on the U-statistic.
    UStat,
    Nonprivate,
    Tot,
    Sarrm,
}

impl TestName {
    pub fn name(self) -> &'static str {
        match self {
            TestName::Dp => "dp",
            TestName::Naive => "naive",
            TestName::UStat => "u_stat",
            TestName::Nonprivate => "nonprivate",
            TestName::Tot => "tot",
            TestName::Sarrm => "sarrm",
        }
    }

    pub fn uses_permuted_values(self) -> bool {
        matches!(self, TestName::Dp | TestName::Naive | TestName::UStat | TestName::Nonprivate)
    }
}

/// A grid value for `ε`: a number, `"inf"`, or an expression in `n` such as
/// `"10/sqrt(n)"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EpsilonValue {
    Number(f64),
    Expr(String),
}

impl EpsilonValue {
    pub fn evaluate(&self, n: usize) -> CliResult<f64> {
        let v = match self {
            EpsilonValue::Number(v) => *v,
            EpsilonValue::Expr(s) => evaluate_expression(s, n)?,
        };
        if v > 0.0 {
            Ok(v)
        } else {
            Err(CliError::Input(format!("epsilon {self} evaluates to {v} at n = {n}; it must be positive")))
        }
    }
}

impl std::fmt::Display for EpsilonValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpsilonValue::Number(v) => write!(f, "{v}"),
            EpsilonValue::Expr(s) => write!(f, "{s:?}"),
        }
    }
}

fn evaluate_expression(s: &str, n: usize) -> CliResult<f64> {
    use exmex::Express;
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    let expr = exmex::parse::<f64>(t).map_err(|e| CliError::Input(format!("epsilon expression {s:?}: {e}")))?;
    let vars = expr.var_names();
    if vars.iter().any(|v| v != "n") {
        return Err(CliError::Input(format!("epsilon expression {s:?} may only use the variable n")));
    }
    let args = if vars.is_empty() { vec![] } else { vec![n as f64] };
    expr.eval(&args)
        .map_err(|e| CliError::Input(format!("epsilon expression {s:?}: {e}")))
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub epsilon: Option<Vec<EpsilonValue>>,
    pub delta: Option<Vec<f64>>,
    /// Per-sample size, `n = m`.
    pub n: Option<Vec<usize>>,
    pub d: Option<Vec<usize>>,
    pub amplitude: Option<Vec<f64>>,
    pub nu: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BandwidthValue {
    Scale(f64),
    Name(String),
}

impl BandwidthValue {
    pub fn to_bandwidth(&self) -> CliResult<Bandwidth> {
        match self {
            BandwidthValue::Scale(h) if *h > 0.0 && h.is_finite() => Ok(Bandwidth::LengthScale(*h)),
            BandwidthValue::Name(s) if s.eq_ignore_ascii_case("median") => Ok(Bandwidth::Median),
            other => Err(CliError::Input(format!("bandwidth must be \"median\" or a positive length scale, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    #[default]
    Gaussian,
    Laplacian,
}

impl From<KernelName> for KernelKind {
    fn from(k: KernelName) -> Self {
        match k {
            KernelName::Gaussian => KernelKind::Gaussian,
            KernelName::Laplacian => KernelKind::Laplacian,
        }
    }
}

/// CSV inputs for `user_data`: `y` and `z` for two samples, or `data` with a
/// column `split` for independence. Relative paths are resolved against the
/// spec file's directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserData {
    pub y: Option<PathBuf>,
    pub z: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub split: Option<usize>,
}

fn default_repetitions() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.05
}

fn default_permutations() -> usize {
    500
}

fn default_bandwidth() -> BandwidthValue {
    BandwidthValue::Name("median".into())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    /// Only read by `two_point`.
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub grid: Grid,
    pub tests: Vec<TestName>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_permutations", alias = "B")]
    pub permutations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelName,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: BandwidthValue,
    pub data: Option<UserData>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| CliError::Input(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec and makes its data paths absolute.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let mut spec = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(data) = spec.data.as_mut() {
            for p in [&mut data.y, &mut data.z, &mut data.data].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    /// Whether the statistic family is HSIC.
    pub fn is_independence(&self) -> bool {
        match self.scenario {
            Scenario::IndependencePerturbedUniform => true,
            Scenario::TwoPoint => self.family == Family::Independence,
            Scenario::UserData => self.data.as_ref().is_some_and(|d| d.data.is_some()),
            Scenario::TwoSamplePerturbedUniform => false,
        }
    }

    /// Which of `n`, `d`, `amplitude`, `nu` drive data generation.
    pub fn data_axes(&self) -> [bool; 4] {
        match self.scenario {
            Scenario::UserData => [false; 4],
            Scenario::TwoPoint if self.family == Family::Independence => [true, true, false, true],
            _ => [true, true, true, false],
        }
    }

    pub fn epsilons(&self) -> Vec<EpsilonValue> {
        self.grid.epsilon.clone().unwrap_or_else(|| vec![EpsilonValue::Number(f64::INFINITY)])
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.grid.delta.clone().unwrap_or_else(|| vec![0.0])
    }

    pub fn ns(&self) -> Vec<usize> {
        self.grid.n.clone().unwrap_or_else(|| vec![500])
    }

    pub fn ds(&self) -> Vec<usize> {
        self.grid.d.clone().unwrap_or_else(|| vec![1])
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.grid.amplitude.clone().unwrap_or_else(|| vec![0.0])
    }

    pub fn nus(&self) -> Vec<f64> {
        self.grid.nu.clone().unwrap_or_else(|| vec![0.0])
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Input(m));
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.permutations < 1 {
            return bad("permutations must be at least 1".into());
        }
        if self.tests.is_empty() {
            return bad("the test list is empty".into());
        }
        let mut tests = self.tests.clone();
        tests.sort();
        tests.dedup();
        if tests.len() != self.tests.len() {
            return bad("the test list has duplicates".into());
        }
        self.bandwidth.to_bandwidth()?;
        let g = &self.grid;
        let lens = [
            ("epsilon", g.epsilon.as_ref().map(Vec::len)),
            ("delta", g.delta.as_ref().map(Vec::len)),
            ("n", g.n.as_ref().map(Vec::len)),
            ("d", g.d.as_ref().map(Vec::len)),
            ("amplitude", g.amplitude.as_ref().map(Vec::len)),
            ("nu", g.nu.as_ref().map(Vec::len)),
        ];
        for (name, len) in lens {
            if len == Some(0) {
                return bad(format!("grid axis {name} is empty"));
            }
        }
        let used = self.data_axes();
        for (i, (name, len)) in lens[2..].iter().enumerate() {
            if !used[i] && len.is_some() {
                return bad(format!("grid axis {name} does not apply to scenario {}", self.scenario.name()));
            }
        }
        for e in self.epsilons() {
            if let EpsilonValue::Number(v) = e {
                if !(v > 0.0) {
                    return bad(format!("epsilon must be positive, got {v}"));
                }
            }
        }
        for d in self.deltas() {
            if !(0.0..1.0).contains(&d) {
                return bad(format!("delta must lie in [0, 1), got {d}"));
            }
        }
        if self.ns().contains(&0) || self.ds().contains(&0) {
            return bad("n and d must be positive".into());
        }
        for a in self.amplitudes() {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("amplitude must lie in [0, 1], got {a}"));
            }
        }
        for nu in self.nus() {
            if !(0.0..=0.25).contains(&nu) {
                return bad(format!("nu must lie in [0, 1/4], got {nu}"));
            }
        }
        match (self.scenario, &self.data) {
            (Scenario::UserData, None) => return bad("user_data needs a data section".into()),
            (Scenario::UserData, Some(d)) => match (&d.y, &d.z, &d.data, d.split) {
                (Some(_), Some(_), None, None) | (None, None, Some(_), Some(_)) => {}
                _ => return bad("user_data takes either y and z, or data and split".into()),
            },
            (_, Some(_)) => return bad("a data section only applies to user_data".into()),
            _ => {}
        }
        if self.family == Family::Independence && self.scenario != Scenario::TwoPoint {
            return bad("family only applies to the two_point scenario".into());
        }
        Ok(())
    }
}
