//! Level and power studies over a parameter grid.
//!
//! Every data cell (one point of the data axes) and repetition owns the
//! stream `root(seed).child(Cell, c).child(Repetition, r)`. The data is drawn
//! from it, and all tests and privacy levels of that repetition share the
//! test seed `child(Sample, 0)`, so the permuted statistics are computed once
//! per repetition and only the noise scale changes across `(ε, δ)`.

use std::time::Instant;

use dpperm::baselines::{sarrm_test, tot_test};
use dpperm::dp_perm::{noise_scale, outcome_from_statistics, permuted_statistics, permuted_v_u_statistics};
use dpperm::synthetic::{
    sample_dependent_two_point, sample_joint_perturbed_uniform, sample_two_point, sample_uniform_vs_perturbed,
    DependentTwoPointSpec, PerturbedUniformSpec, TwoPointSpec,
};
use dpperm::{
    Dataset, Error, KernelChoice, Mechanism, PairedData, PermutationStatistic, PrivacyBudget, Purpose,
    RandomStream, StatisticDescriptor, StatisticKind, TestConfig, TwoSampleData,
};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::input::read_matrix;
use crate::spec::{ExperimentSpec, Scenario, TestName};
use crate::table::{ResultRow, Status};

/// One point of the data axes. Unused axes are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DataCell {
    n: usize,
    d: usize,
    amplitude: Option<f64>,
    nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Verdict {
    Decision(bool),
    Infeasible,
    NotApplicable,
    Failed(String),
}

/// Verdicts of one repetition, indexed by `(privacy level, test)`, with the
/// seconds spent on each.
type UnitResult = Vec<Vec<(Verdict, f64)>>;

pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    /// One line per failed cell.
    pub failures: Vec<String>,
}

impl ExperimentOutput {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.status == Status::Failed)
    }
}

fn data_cells(spec: &ExperimentSpec, user: Option<&Dataset>) -> Vec<DataCell> {
    if let Some(data) = user {
        let (n, d) = match data {
            Dataset::TwoSample(t) => (t.n(), t.dimension()),
            Dataset::Paired(p) => (p.n(), p.y().ncols() + p.z().ncols()),
        };
        return vec![DataCell { n, d, amplitude: None, nu: None }];
    }
    let [_, _, use_a, use_nu] = spec.data_axes();
    let amplitudes: Vec<Option<f64>> =
        if use_a { spec.amplitudes().into_iter().map(Some).collect() } else { vec![None] };
    let nus: Vec<Option<f64>> = if use_nu { spec.nus().into_iter().map(Some).collect() } else { vec![None] };
    let mut cells = Vec::new();
    for &n in &spec.ns() {
        for &d in &spec.ds() {
            for &amplitude in &amplitudes {
                for &nu in &nus {
                    cells.push(DataCell { n, d, amplitude, nu });
                }
            }
        }
    }
    cells
}

fn load_user_data(spec: &ExperimentSpec) -> CliResult<Option<Dataset>> {
    let Some(d) = spec.data.as_ref() else {
        return Ok(None);
    };
    let data: Dataset = match (&d.y, &d.z, &d.data, d.split) {
        (Some(y), Some(z), _, _) => TwoSampleData::new(read_matrix(y)?, read_matrix(z)?)?.into(),
        (_, _, Some(path), Some(split)) => PairedData::from_columns(read_matrix(path)?.view(), split)?.into(),
        _ => return Err(CliError::Input("user_data takes either y and z, or data and split".into())),
    };
    Ok(Some(data))
}

fn generate(spec: &ExperimentSpec, cell: &DataCell, stream: &RandomStream) -> dpperm::Result<Dataset> {
    let ones = vec![1.0; cell.d];
    let zeros = vec![0.0; cell.d];
    Ok(match spec.scenario {
        Scenario::TwoSamplePerturbedUniform => {
            let p = PerturbedUniformSpec::new(cell.d, cell.amplitude.unwrap_or(0.0))?;
            sample_uniform_vs_perturbed(cell.n, cell.n, &p, stream)?.into()
        }
        Scenario::IndependencePerturbedUniform => {
            sample_joint_perturbed_uniform(cell.n, cell.d, cell.d, cell.amplitude.unwrap_or(0.0), stream)?.into()
        }
        Scenario::TwoPoint if spec.is_independence() => {
            let p = DependentTwoPointSpec {
                y1: zeros.clone(),
                y2: ones.clone(),
                z1: zeros,
                z2: ones,
                nu: cell.nu.unwrap_or(0.0),
            };
            sample_dependent_two_point(cell.n, &p, stream)?.into()
        }
        Scenario::TwoPoint => {
            let a = cell.amplitude.unwrap_or(0.0);
            let p = TwoPointSpec {
                x: zeros,
                v: ones,
                p0: 0.5 * (1.0 + a),
                q0: 0.5 * (1.0 - a),
            };
            sample_two_point(cell.n, cell.n, &p, stream)?.into()
        }
        Scenario::UserData => unreachable!("user data is loaded, not generated"),
    })
}

fn descriptor(spec: &ExperimentSpec) -> CliResult<StatisticDescriptor> {
    let choice = KernelChoice {
        kind: spec.kernel.into(),
        bandwidth: spec.bandwidth.to_bandwidth()?,
    };
    Ok(if spec.is_independence() {
        StatisticDescriptor::hsic_v(choice, choice)
    } else {
        StatisticDescriptor::mmd_v(choice)
    })
}

fn u_kind(v: StatisticKind) -> StatisticKind {
    match v {
        StatisticKind::MmdV => StatisticKind::MmdU,
        _ => StatisticKind::HsicU,
    }
}

/// Runs every test of one repetition at every privacy level.
fn run_unit(
    spec: &ExperimentSpec,
    stat: &StatisticDescriptor,
    data: &Dataset,
    levels: &[(f64, f64)],
    test_seed: u64,
) -> dpperm::Result<UnitResult> {
    let start = Instant::now();
    let b = spec.permutations;
    let needs_values = spec.tests.iter().any(|t| t.uses_permuted_values());
    let needs_u = spec.tests.contains(&TestName::UStat);
    let mut v_values = Vec::new();
    let mut u_values = Vec::new();
    let (mut sens_v, mut sens_u) = (0.0, 0.0);
    if needs_values {
        let prepared = stat.prepare(data)?;
        sens_v = prepared.sensitivity();
        if needs_u {
            sens_u = prepared.with_kind(u_kind(stat.kind))?.sensitivity();
            (v_values, u_values) = permuted_v_u_statistics(&prepared, b, test_seed)?;
        } else {
            v_values = permuted_statistics(&prepared, b, test_seed);
        }
    }
    let shared = start.elapsed().as_secs_f64();
    let mut out = Vec::with_capacity(levels.len());
    for &(epsilon, delta) in levels {
        let budget = if epsilon.is_finite() { Some(PrivacyBudget::new(epsilon, delta)?) } else { None };
        let config = TestConfig::new(spec.alpha, b, test_seed, budget)?;
        let mut row = Vec::with_capacity(spec.tests.len());
        for &test in &spec.tests {
            let t0 = Instant::now();
            let verdict = match test {
                TestName::Dp | TestName::Naive | TestName::UStat | TestName::Nonprivate => {
                    let (values, sens) = if test == TestName::UStat { (&u_values, sens_u) } else { (&v_values, sens_v) };
                    let mechanism = match test {
                        TestName::Naive => Mechanism::Naive,
                        TestName::Nonprivate => Mechanism::NonPrivate,
                        _ => Mechanism::Refined,
                    };
                    let scale = if budget.is_none() { 0.0 } else { noise_scale(mechanism, sens, budget.as_ref(), b)? };
                    let outcome = outcome_from_statistics(values, scale, &config, mechanism)?;
                    Verdict::Decision(outcome.decision())
                }
                TestName::Tot | TestName::Sarrm if !epsilon.is_finite() => Verdict::NotApplicable,
                TestName::Tot => Verdict::Decision(tot_test(data, stat, &config, epsilon)?.decision()),
                TestName::Sarrm => match sarrm_test(data, stat, &config, epsilon) {
                    Ok(o) => Verdict::Decision(o.decision()),
                    Err(Error::Infeasible(_)) => Verdict::Infeasible,
                    Err(e) => return Err(e),
                },
            };
            let own = t0.elapsed().as_secs_f64();
            let seconds = if test.uses_permuted_values() { own + shared } else { own };
            row.push((verdict, seconds));
        }
        out.push(row);
    }
    Ok(out)
}

/// Runs the whole grid on the current rayon pool. Rows are ordered by `n`,
/// `d`, amplitude, `ν`, `ε`, `δ` and then the spec's test order, and do not
/// depend on the number of threads.
pub fn run_experiment(spec: &ExperimentSpec) -> CliResult<ExperimentOutput> {
    spec.validate()?;
    let user = load_user_data(spec)?;
    let stat = descriptor(spec)?;
    let cells = data_cells(spec, user.as_ref());
    let epsilons = spec.epsilons();
    let deltas = spec.deltas();
    let mut cell_levels = Vec::with_capacity(cells.len());
    for cell in &cells {
        let mut levels = Vec::new();
        for e in &epsilons {
            let eps = e.evaluate(cell.n)?;
            for &delta in &deltas {
                levels.push((eps, delta));
            }
        }
        cell_levels.push(levels);
    }
    let reps = spec.repetitions;
    let root = RandomStream::root(spec.seed);
    let units: Vec<Result<UnitResult, String>> = (0..cells.len() * reps)
        .into_par_iter()
        .map(|u| {
            let (c, r) = (u / reps, u % reps);
            let stream = root.child(Purpose::Cell, c as u64).child(Purpose::Repetition, r as u64);
            let generated;
            let data = match &user {
                Some(d) => d,
                None => {
                    generated = generate(spec, &cells[c], &stream).map_err(|e| e.to_string())?;
                    &generated
                }
            };
            let test_seed = stream.child(Purpose::Sample, 0).derive_seed();
            run_unit(spec, &stat, data, &cell_levels[c], test_seed).map_err(|e| e.to_string())
        })
        .collect();

    let two_sample = !spec.is_independence();
    let v_kind = stat.kind;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let unit_results = &units[c * reps..(c + 1) * reps];
        for (j, &(epsilon, delta)) in cell_levels[c].iter().enumerate() {
            for (t, &test) in spec.tests.iter().enumerate() {
                let mut rejections = 0u64;
                let mut seconds = 0.0;
                let mut status = Status::Ok;
                let mut first_error = None;
                for res in unit_results {
                    let verdict = match res {
                        Ok(levels) => {
                            seconds += levels[j][t].1;
                            levels[j][t].0.clone()
                        }
                        Err(e) => Verdict::Failed(e.clone()),
                    };
                    match verdict {
                        Verdict::Decision(true) => rejections += 1,
                        Verdict::Decision(false) => {}
                        Verdict::Infeasible if status != Status::Failed => status = Status::Infeasible,
                        Verdict::NotApplicable if status != Status::Failed => status = Status::NotApplicable,
                        Verdict::Failed(e) => {
                            status = Status::Failed;
                            first_error.get_or_insert(e);
                        }
                        _ => {}
                    }
                }
                let row = ResultRow {
                    scenario: spec.scenario.name().to_string(),
                    test: test.name().to_string(),
                    statistic: if test == TestName::UStat { u_kind(v_kind) } else { v_kind }.name().to_string(),
                    epsilon,
                    delta,
                    n: cell.n,
                    m: match &user {
                        Some(Dataset::TwoSample(d)) => Some(d.m()),
                        Some(Dataset::Paired(_)) => None,
                        None => two_sample.then_some(cell.n),
                    },
                    d: cell.d,
                    amplitude: cell.amplitude,
                    nu: cell.nu,
                    alpha: spec.alpha,
                    permutations: spec.permutations,
                    rejections: if status == Status::Ok { rejections } else { 0 },
                    repetitions: reps,
                    status,
                    seconds,
                };
                if let Some(e) = first_error {
                    failures.push(format!(
                        "{} n={} d={} epsilon={} delta={}: {e}",
                        test.name(),
                        cell.n,
                        cell.d,
                        epsilon,
                        delta
                    ));
                }
                rows.push(row);
            }
        }
    }
    Ok(ExperimentOutput { rows, failures })
}
