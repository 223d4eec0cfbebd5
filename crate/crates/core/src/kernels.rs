//! Bounded translation-invariant kernels and Gram matrices.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Kernel family with its bandwidth parameters.
///
/// * `GaussianIsotropic { sigma }`: `exp(-σ ‖x − y‖₂²)`
/// * `LaplacianIsotropic { sigma }`: `exp(-σ ‖x − y‖₁)`
/// * `GaussianProduct { lambdas }`: `Π_i (√(2π) λ_i)⁻¹ exp(-(x_i − y_i)² / (2 λ_i²))`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    GaussianIsotropic { sigma: f64 },
    LaplacianIsotropic { sigma: f64 },
    GaussianProduct { lambdas: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    dimension: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("kernel dimension must be positive".into()));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match &family {
            KernelFamily::GaussianIsotropic { sigma } | KernelFamily::LaplacianIsotropic { sigma } => {
                if !positive(*sigma) {
                    return Err(Error::InvalidParameter(format!(
                        "bandwidth must be positive and finite, got {sigma}"
                    )));
                }
            }
            KernelFamily::GaussianProduct { lambdas } => {
                if lambdas.len() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        found: lambdas.len(),
                    });
                }
                if let Some(bad) = lambdas.iter().find(|l| !positive(**l)) {
                    return Err(Error::InvalidParameter(format!(
                        "bandwidth must be positive and finite, got {bad}"
                    )));
                }
            }
        }
        Ok(Self { family, dimension })
    }

    pub fn gaussian(sigma: f64, dimension: usize) -> Result<Self> {
        Self::new(KernelFamily::GaussianIsotropic { sigma }, dimension)
    }

    pub fn laplacian(sigma: f64, dimension: usize) -> Result<Self> {
        Self::new(KernelFamily::LaplacianIsotropic { sigma }, dimension)
    }

    pub fn gaussian_product(lambdas: Vec<f64>) -> Result<Self> {
        let d = lambdas.len();
        Self::new(KernelFamily::GaussianProduct { lambdas }, d)
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `K = sup k(x, y) = k(x, x)`.
    pub fn bound(&self) -> f64 {
        kernel_bound(self)
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: len,
            });
        }
        Ok(())
    }

    /// Evaluates the kernel without dimension checks.
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.family {
            KernelFamily::GaussianIsotropic { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sigma * d2).exp()
            }
            KernelFamily::LaplacianIsotropic { sigma } => {
                let d1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                (-sigma * d1).exp()
            }
            KernelFamily::GaussianProduct { lambdas } => {
                let mut expo = 0.0;
                for ((a, b), l) in x.iter().zip(y).zip(lambdas) {
                    expo += (a - b) * (a - b) / (2.0 * l * l);
                }
                kernel_bound(self) * (-expo).exp()
            }
        }
    }
}

pub fn kernel_bound(kernel: &KernelSpec) -> f64 {
    match &kernel.family {
        KernelFamily::GaussianIsotropic { .. } | KernelFamily::LaplacianIsotropic { .. } => 1.0,
        KernelFamily::GaussianProduct { lambdas } => {
            let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
            lambdas.iter().map(|l| inv_sqrt_2pi / l).product()
        }
    }
}

pub fn evaluate(kernel: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    kernel.check_dim(x.len())?;
    kernel.check_dim(y.len())?;
    Ok(kernel.eval_unchecked(x, y))
}

fn row(points: &ArrayView2<f64>, i: usize) -> Vec<f64> {
    points.row(i).to_vec()
}

/// Dense `|A| × |B|` Gram matrix.
pub fn gram(kernel: &KernelSpec, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    kernel.check_dim(a.ncols())?;
    kernel.check_dim(b.ncols())?;
    let (na, nb) = (a.nrows(), b.nrows());
    let b_rows: Vec<Vec<f64>> = (0..nb).map(|j| row(&b, j)).collect();
    let data: Vec<f64> = (0..na)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = row(&a, i);
            let b_rows = &b_rows;
            (0..nb).map(move |j| kernel.eval_unchecked(&x, &b_rows[j]))
        })
        .collect();
    Ok(Array2::from_shape_vec((na, nb), data).expect("shape matches"))
}

/// Gram matrix of a point set with itself; the lower triangle is mirrored
/// from the upper one, so the result is exactly symmetric.
pub fn gram_symmetric(kernel: &KernelSpec, points: ArrayView2<f64>) -> Result<Array2<f64>> {
    kernel.check_dim(points.ncols())?;
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row(&points, i)).collect();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| kernel.eval_unchecked(&rows[i], &rows[j])).collect())
        .collect();
    let mut g = Array2::zeros((n, n));
    for (i, vals) in upper.into_iter().enumerate() {
        for (off, v) in vals.into_iter().enumerate() {
            g[[i, i + off]] = v;
            g[[i + off, i]] = v;
        }
    }
    Ok(g)
}

const MEDIAN_SUBSAMPLE_CAP: usize = 1000;

/// Median of pairwise Euclidean distances over all unordered pairs.
///
/// Above 1000 points, every `⌈N/1000⌉`-th point is used.
pub fn median_heuristic(points: ArrayView2<f64>) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::Degenerate(
            "median heuristic needs at least two points".into(),
        ));
    }
    let stride = n.div_ceil(MEDIAN_SUBSAMPLE_CAP);
    let rows: Vec<Vec<f64>> = (0..n).step_by(stride).map(|i| row(&points, i)).collect();
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let d2: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    let len = dists.len();
    let mid = len / 2;
    let (_, &mut upper_mid, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if len % 2 == 1 {
        upper_mid
    } else {
        let lower_mid = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_mid + upper_mid)
    };
    if !(median > 0.0) {
        return Err(Error::Degenerate(
            "median pairwise distance is zero (points are identical)".into(),
        ));
    }
    Ok(median)
}

/// Bandwidth given as a length scale `h`, or chosen by the median heuristic.
///
/// A length scale maps to `σ = 1/(2h²)` for the Gaussian kernel and
/// `σ = 1/h` for the Laplacian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Median,
    LengthScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Gaussian,
    Laplacian,
}

/// A kernel family whose bandwidth may still depend on the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelChoice {
    pub kind: KernelKind,
    pub bandwidth: Bandwidth,
}

impl KernelChoice {
    pub fn gaussian_median() -> Self {
        Self {
            kind: KernelKind::Gaussian,
            bandwidth: Bandwidth::Median,
        }
    }

    pub fn resolve(&self, points: ArrayView2<f64>) -> Result<KernelSpec> {
        let h = match self.bandwidth {
            Bandwidth::Median => median_heuristic(points)?,
            Bandwidth::LengthScale(h) => h,
        };
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "length scale must be positive and finite, got {h}"
            )));
        }
        match self.kind {
            KernelKind::Gaussian => KernelSpec::gaussian(1.0 / (2.0 * h * h), points.ncols()),
            KernelKind::Laplacian => KernelSpec::laplacian(1.0 / h, points.ncols()),
        }
    }
}

/// Either a fully specified kernel or one to be fitted to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelSource {
    Fixed(KernelSpec),
    Choice(KernelChoice),
}

impl KernelSource {
    pub fn resolve(&self, points: ArrayView2<f64>) -> Result<KernelSpec> {
        match self {
            KernelSource::Fixed(spec) => {
                spec.check_dim(points.ncols())?;
                Ok(spec.clone())
            }
            KernelSource::Choice(choice) => choice.resolve(points),
        }
    }
}

impl From<KernelSpec> for KernelSource {
    fn from(spec: KernelSpec) -> Self {
        KernelSource::Fixed(spec)
    }
}

impl From<KernelChoice> for KernelSource {
    fn from(choice: KernelChoice) -> Self {
        KernelSource::Choice(choice)
    }
}
