//! Brute-force references for small problems: exact permutation p-values by
//! enumeration and sensitivity maximization over a finite grid.

use ndarray::Array2;
use num_rational::Ratio;
use rayon::prelude::*;

use crate::kernels::KernelSource;
use crate::rng::{random_permutation, Purpose, RandomStream};
use crate::statistics::{Dataset, PairedData, PermutationStatistic, StatisticDescriptor, TwoSampleData};
use crate::{Error, Result};

/// Hard limit on the enumerated size.
pub const MAX_ENUMERATION_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    /// Largest pooled size (two-sample) or `n` (paired) accepted; at most 8.
    pub max_pooled_size: usize,
    /// Largest number of candidate datasets `|grid|^N` for sensitivity search.
    pub max_grid_points: usize,
    /// Cap on `pairs × permutations` evaluations.
    pub max_evaluations: u64,
    /// Random permutations added to the identity and the first transposition.
    pub permutation_sample: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_pooled_size: MAX_ENUMERATION_SIZE,
            max_grid_points: 100_000,
            max_evaluations: 10_000_000,
            permutation_sample: 20,
        }
    }
}

/// All permutations of `0..n` in lexicographic order, the identity first.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![current.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).expect("pivot exists");
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

/// All `k`-subsets of `0..n`, each sorted, in lexicographic order.
pub fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + n - k) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

fn subset_to_permutation(subset: &[usize], total: usize) -> Vec<usize> {
    let mut in_first = vec![false; total];
    for &i in subset {
        in_first[i] = true;
    }
    subset
        .iter()
        .copied()
        .chain((0..total).filter(|&i| !in_first[i]))
        .collect()
}

/// Statistic values over the permutation group of the test: every split of
/// the pooled sample into sizes `(n, m)` for two-sample data, every
/// permutation of Z for paired data. The first entry is the observed value.
pub fn exhaustive_statistics(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    budget: &OracleBudget,
) -> Result<Vec<f64>> {
    let cap = budget.max_pooled_size.min(MAX_ENUMERATION_SIZE);
    let prepared = statistic.prepare(data)?;
    let len = prepared.permutation_len();
    if len > cap {
        return Err(Error::BudgetExceeded(format!(
            "enumeration over {len} observations exceeds the cap of {cap}"
        )));
    }
    let perms: Vec<Vec<usize>> = match data {
        Dataset::TwoSample(d) => all_subsets(len, d.n())
            .iter()
            .map(|s| subset_to_permutation(s, len))
            .collect(),
        Dataset::Paired(_) => all_permutations(len),
    };
    Ok(perms.par_iter().map(|p| prepared.evaluate(p)).collect())
}

/// `#{g : T(X^g) ≥ T(X)} / |G|` over the full permutation group, counting
/// the identity.
pub fn exhaustive_permutation_pvalue(
    data: &Dataset,
    statistic: &StatisticDescriptor,
    budget: &OracleBudget,
) -> Result<Ratio<u64>> {
    let values = exhaustive_statistics(data, statistic, budget)?;
    let observed = values[0];
    let count = values.iter().filter(|&&v| v >= observed).count() as u64;
    Ok(Ratio::new(count, values.len() as u64))
}

/// The same p-value via the sorted values: the number of values at least
/// `T(X)` is the total minus the rank of the first value `≥ T(X)`.
pub fn exhaustive_pvalue_by_sorting(values: &[f64]) -> Ratio<u64> {
    let observed = values[0];
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let below = sorted.partition_point(|&v| v < observed);
    Ratio::new((values.len() - below) as u64, values.len() as u64)
}

/// Shape of the candidate datasets for [`brute_force_sensitivity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleShape {
    /// `n` rows of Y and `m` rows of Z; grid points are single observations.
    TwoSample { n: usize, m: usize },
    /// `n` pairs; grid points are `(y, z)` concatenated, Y taking the first
    /// `split` coordinates.
    Paired { n: usize, split: usize },
}

impl SampleShape {
    fn rows(&self) -> usize {
        match *self {
            SampleShape::TwoSample { n, m } => n + m,
            SampleShape::Paired { n, .. } => n,
        }
    }
}

fn build_dataset(shape: SampleShape, grid: &[Vec<f64>], idx: &[usize]) -> Result<Dataset> {
    let d = grid[0].len();
    let rows = Array2::from_shape_fn((idx.len(), d), |(r, c)| grid[idx[r]][c]);
    Ok(match shape {
        SampleShape::TwoSample { n, .. } => TwoSampleData::new(
            rows.slice(ndarray::s![..n, ..]).to_owned(),
            rows.slice(ndarray::s![n.., ..]).to_owned(),
        )?
        .into(),
        SampleShape::Paired { split, .. } => PairedData::from_columns(rows.view(), split)?.into(),
    })
}

/// Largest `|T(X^π) − T(X̃^π)|` over all datasets with rows from `grid`,
/// all single-row replacements, and a fixed permutation sample (the
/// identity, the swap of the first two entries, and
/// `budget.permutation_sample` seeded draws).
///
/// Kernels must be fixed: a data-dependent bandwidth would change the
/// statistic between neighbours.
pub fn brute_force_sensitivity(
    statistic: &StatisticDescriptor,
    shape: SampleShape,
    grid: &[Vec<f64>],
    budget: &OracleBudget,
) -> Result<f64> {
    for k in [&statistic.kernel, &statistic.kernel_z].into_iter().flatten() {
        if !matches!(k, KernelSource::Fixed(_)) {
            return Err(Error::InvalidParameter(
                "sensitivity search needs fixed kernels".into(),
            ));
        }
    }
    if grid.len() < 2 || grid.iter().any(|g| g.len() != grid[0].len()) {
        return Err(Error::InvalidParameter(
            "grid needs at least two points of equal dimension".into(),
        ));
    }
    let rows = shape.rows();
    if rows < 2 {
        return Err(Error::InvalidParameter("need at least two rows".into()));
    }
    let datasets = (grid.len() as u64).checked_pow(rows as u32).unwrap_or(u64::MAX);
    if datasets > budget.max_grid_points as u64 {
        return Err(Error::BudgetExceeded(format!(
            "{datasets} candidate datasets exceed the cap of {}",
            budget.max_grid_points
        )));
    }
    let perm_len = match shape {
        SampleShape::TwoSample { .. } => rows,
        SampleShape::Paired { n, .. } => n,
    };
    let mut perms = vec![(0..perm_len).collect::<Vec<_>>()];
    let mut swap: Vec<usize> = (0..perm_len).collect();
    swap.swap(0, 1);
    perms.push(swap);
    let root = RandomStream::root(0x5e45);
    for i in 0..budget.permutation_sample {
        perms.push(random_permutation(perm_len, &root.child(Purpose::Permutation, i as u64)));
    }
    let pairs = datasets * rows as u64 * (grid.len() as u64 - 1) / 2;
    let evaluations = pairs.saturating_mul(perms.len() as u64);
    if evaluations > budget.max_evaluations {
        return Err(Error::BudgetExceeded(format!(
            "{evaluations} evaluations exceed the cap of {}",
            budget.max_evaluations
        )));
    }
    let decode = |mut code: u64| {
        let mut idx = vec![0usize; rows];
        for slot in idx.iter_mut() {
            *slot = (code % grid.len() as u64) as usize;
            code /= grid.len() as u64;
        }
        idx
    };
    let values: Vec<Vec<f64>> = (0..datasets)
        .into_par_iter()
        .map(|code| {
            let prepared = statistic.prepare(&build_dataset(shape, grid, &decode(code))?)?;
            Ok(perms.iter().map(|p| prepared.evaluate(p)).collect())
        })
        .collect::<Result<_>>()?;
    let mut best = 0.0f64;
    let base = grid.len() as u64;
    for code in 0..datasets {
        let mut place = 1u64;
        for _ in 0..rows {
            let digit = (code / place) % base;
            for other in digit + 1..base {
                let neighbour = code + (other - digit) * place;
                let a = &values[code as usize];
                let b = &values[neighbour as usize];
                for (x, y) in a.iter().zip(b) {
                    best = best.max((x - y).abs());
                }
            }
            place *= base;
        }
    }
    Ok(best)
}
