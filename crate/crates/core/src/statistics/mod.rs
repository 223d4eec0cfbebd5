//! Test statistics, their permuted evaluation and global sensitivities.
//!
//! A [`StatisticDescriptor`] names a statistic and its kernel(s). Calling
//! [`StatisticDescriptor::prepare`] on a [`Dataset`] resolves bandwidths,
//! builds the Gram matrices once, and returns a [`PreparedStatistic`] that
//! evaluates any permutation in `O(N²)` without touching the kernel again.

mod hsic;
mod mean_diff;
mod mmd;
mod streaming;

use std::sync::Arc;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::kernels::{gram_symmetric, KernelChoice, KernelSource, KernelSpec};
use crate::{Error, Result};

pub use hsic::{hsic_u, hsic_v, hsic_v_u_gap};
pub use mean_diff::mean_diff;
pub use mmd::{mmd_u, mmd_v, v_u_gap_mmd};
pub use streaming::{hsic_v_streaming, mmd_v_streaming};

use hsic::HsicMarginals;

pub(crate) fn validate_permutation(perm: &[usize], len: usize) -> Result<()> {
    if perm.len() != len {
        return Err(Error::SizeMismatch(format!(
            "permutation has length {}, expected {len}",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &p in perm {
        if p >= len || seen[p] {
            return Err(Error::InvalidParameter(
                "permutation is not a bijection".into(),
            ));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Two independent samples sharing a dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleData {
    y: Array2<f64>,
    z: Array2<f64>,
}

impl TwoSampleData {
    pub fn new(y: Array2<f64>, z: Array2<f64>) -> Result<Self> {
        if y.nrows() == 0 || z.nrows() == 0 {
            return Err(Error::SizeMismatch("both samples must be non-empty".into()));
        }
        if y.ncols() != z.ncols() {
            return Err(Error::DimensionMismatch {
                expected: y.ncols(),
                found: z.ncols(),
            });
        }
        if y.ncols() == 0 {
            return Err(Error::SizeMismatch("observations have no columns".into()));
        }
        check_finite(&y)?;
        check_finite(&z)?;
        Ok(Self { y, z })
    }

    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    pub fn z(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn m(&self) -> usize {
        self.z.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.y.ncols()
    }

    /// `Y` stacked on top of `Z`.
    pub fn pooled(&self) -> Array2<f64> {
        concatenate![Axis(0), self.y, self.z]
    }
}

/// Paired observations `(Y_i, Z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedData {
    y: Array2<f64>,
    z: Array2<f64>,
}

impl PairedData {
    pub fn new(y: Array2<f64>, z: Array2<f64>) -> Result<Self> {
        if y.nrows() == 0 {
            return Err(Error::SizeMismatch("sample must be non-empty".into()));
        }
        if y.nrows() != z.nrows() {
            return Err(Error::SizeMismatch(format!(
                "Y has {} rows but Z has {}",
                y.nrows(),
                z.nrows()
            )));
        }
        if y.ncols() == 0 || z.ncols() == 0 {
            return Err(Error::SizeMismatch("observations have no columns".into()));
        }
        check_finite(&y)?;
        check_finite(&z)?;
        Ok(Self { y, z })
    }

    /// Splits the columns of `data` at `split`: `[0, split)` is Y, the rest Z.
    pub fn from_columns(data: ArrayView2<f64>, split: usize) -> Result<Self> {
        if split == 0 || split >= data.ncols() {
            return Err(Error::InvalidParameter(format!(
                "column split {split} must lie in 1..{}",
                data.ncols()
            )));
        }
        Self::new(
            data.slice(ndarray::s![.., ..split]).to_owned(),
            data.slice(ndarray::s![.., split..]).to_owned(),
        )
    }

    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    pub fn z(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }
}

fn check_finite(a: &Array2<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("data contains non-finite values".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    TwoSample(TwoSampleData),
    Paired(PairedData),
}

impl Dataset {
    /// Number of rows a sub-sampling scheme can split: `min(n, m)` for two
    /// samples, `n` for paired data.
    pub fn effective_size(&self) -> usize {
        match self {
            Dataset::TwoSample(d) => d.n().min(d.m()),
            Dataset::Paired(d) => d.n(),
        }
    }
}

impl From<TwoSampleData> for Dataset {
    fn from(d: TwoSampleData) -> Self {
        Dataset::TwoSample(d)
    }
}

impl From<PairedData> for Dataset {
    fn from(d: PairedData) -> Self {
        Dataset::Paired(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    MmdV,
    MmdU,
    HsicV,
    HsicU,
    MeanDiff,
}

impl StatisticKind {
    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::MmdV => "mmd_v",
            StatisticKind::MmdU => "mmd_u",
            StatisticKind::HsicV => "hsic_v",
            StatisticKind::HsicU => "hsic_u",
            StatisticKind::MeanDiff => "mean_diff",
        }
    }

    pub fn is_two_sample(self) -> bool {
        matches!(self, StatisticKind::MmdV | StatisticKind::MmdU | StatisticKind::MeanDiff)
    }

    fn min_size(self) -> usize {
        match self {
            StatisticKind::MmdU => 2,
            StatisticKind::HsicU => 4,
            _ => 1,
        }
    }
}

/// Global sensitivity over neighbouring datasets, uniformly over permutations.
///
/// | kind | Δ |
/// |---|---|
/// | `mmd_v` | `√(2K) / min(n, m)` |
/// | `hsic_v` | `4(n−1)√(KL) / n²` |
/// | `mmd_u` | `8K / min(n, m)` |
/// | `hsic_u` | `24KL / n` |
/// | `mean_diff` | `diameter / min(n, m)` |
///
/// `m` is ignored for the HSIC kinds. The U-statistic constants are the upper
/// ends of the known ranges.
pub fn sensitivity(
    kind: StatisticKind,
    k_bound: f64,
    l_bound: f64,
    n: usize,
    m: usize,
    domain_diameter: f64,
) -> Result<f64> {
    let size = if kind.is_two_sample() { n.min(m) } else { n };
    if size < kind.min_size() {
        return Err(Error::InsufficientSamples {
            statistic: kind.name(),
            required: kind.min_size(),
            found: size,
        });
    }
    let s = size as f64;
    Ok(match kind {
        StatisticKind::MmdV => (2.0 * k_bound).sqrt() / s,
        StatisticKind::MmdU => 8.0 * k_bound / s,
        StatisticKind::HsicV => 4.0 * (s - 1.0) * (k_bound * l_bound).sqrt() / (s * s),
        StatisticKind::HsicU => 24.0 * k_bound * l_bound / s,
        StatisticKind::MeanDiff => domain_diameter / s,
    })
}

/// A statistic together with what is needed to compute its sensitivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticDescriptor {
    pub kind: StatisticKind,
    /// Pooled-sample kernel for MMD, Y kernel for HSIC.
    pub kernel: Option<KernelSource>,
    /// Z kernel for HSIC.
    pub kernel_z: Option<KernelSource>,
    /// `p` of the `ℓ_p` norm for `mean_diff`.
    pub p_norm: f64,
    /// `sup ‖x − x'‖_p` over the data domain, for `mean_diff`.
    pub domain_diameter: Option<f64>,
}

impl StatisticDescriptor {
    fn kernelized(kind: StatisticKind, k: KernelSource, l: Option<KernelSource>) -> Self {
        Self {
            kind,
            kernel: Some(k),
            kernel_z: l,
            p_norm: 2.0,
            domain_diameter: None,
        }
    }

    pub fn mmd_v(kernel: impl Into<KernelSource>) -> Self {
        Self::kernelized(StatisticKind::MmdV, kernel.into(), None)
    }

    pub fn mmd_u(kernel: impl Into<KernelSource>) -> Self {
        Self::kernelized(StatisticKind::MmdU, kernel.into(), None)
    }

    pub fn hsic_v(k: impl Into<KernelSource>, l: impl Into<KernelSource>) -> Self {
        Self::kernelized(StatisticKind::HsicV, k.into(), Some(l.into()))
    }

    pub fn hsic_u(k: impl Into<KernelSource>, l: impl Into<KernelSource>) -> Self {
        Self::kernelized(StatisticKind::HsicU, k.into(), Some(l.into()))
    }

    pub fn mean_diff(p_norm: f64, domain_diameter: f64) -> Self {
        Self {
            kind: StatisticKind::MeanDiff,
            kernel: None,
            kernel_z: None,
            p_norm,
            domain_diameter: Some(domain_diameter),
        }
    }

    /// Default kernel setup for `kind`: Gaussian with median bandwidth.
    /// `mean_diff` has no default and needs [`StatisticDescriptor::mean_diff`].
    pub fn with_default_kernels(kind: StatisticKind) -> Result<Self> {
        let g = KernelChoice::gaussian_median();
        Ok(match kind {
            StatisticKind::MmdV => Self::mmd_v(g),
            StatisticKind::MmdU => Self::mmd_u(g),
            StatisticKind::HsicV => Self::hsic_v(g, g),
            StatisticKind::HsicU => Self::hsic_u(g, g),
            StatisticKind::MeanDiff => {
                return Err(Error::InvalidParameter(
                    "mean_diff needs an explicit p-norm and domain diameter".into(),
                ))
            }
        })
    }

    /// Same kernels, different statistic of the same family.
    pub fn with_kind(&self, kind: StatisticKind) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }

    fn kernel_source(&self, which: &str) -> Result<&KernelSource> {
        let k = if which == "z" { &self.kernel_z } else { &self.kernel };
        k.as_ref().ok_or_else(|| {
            Error::InvalidParameter(format!("{} needs a {which} kernel", self.kind.name()))
        })
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        match (self.kind.is_two_sample(), data) {
            (true, Dataset::TwoSample(_)) | (false, Dataset::Paired(_)) => Ok(()),
            (true, _) => Err(Error::InvalidParameter(format!(
                "{} needs two-sample data",
                self.kind.name()
            ))),
            (false, _) => Err(Error::InvalidParameter(format!(
                "{} needs paired data",
                self.kind.name()
            ))),
        }
    }

    /// Replaces data-dependent bandwidths with the kernels they resolve to on
    /// `data`, so the descriptor can be reused on subsets.
    pub fn resolve(&self, data: &Dataset) -> Result<Self> {
        self.check_dataset(data)?;
        let mut out = self.clone();
        match data {
            Dataset::TwoSample(d) if self.kind != StatisticKind::MeanDiff => {
                let k = self.kernel_source("pooled")?.resolve(d.pooled().view())?;
                out.kernel = Some(k.into());
            }
            Dataset::Paired(d) => {
                let k = self.kernel_source("y")?.resolve(d.y())?;
                let l = self.kernel_source("z")?.resolve(d.z())?;
                out.kernel = Some(k.into());
                out.kernel_z = Some(l.into());
            }
            _ => {}
        }
        Ok(out)
    }

    /// Builds Gram matrices (or the pooled matrix for `mean_diff`) once.
    pub fn prepare(&self, data: &Dataset) -> Result<PreparedStatistic> {
        self.check_dataset(data)?;
        match data {
            Dataset::TwoSample(d) => self.prepare_two_sample(d),
            Dataset::Paired(d) => self.prepare_paired(d),
        }
    }

    fn prepare_two_sample(&self, d: &TwoSampleData) -> Result<PreparedStatistic> {
        let (n, m) = (d.n(), d.m());
        let pooled = d.pooled();
        if self.kind == StatisticKind::MeanDiff {
            mean_diff::check_p_norm(self.p_norm)?;
            let diam = self.domain_diameter.ok_or_else(|| {
                Error::InvalidParameter("mean_diff needs a domain diameter".into())
            })?;
            if !(diam > 0.0 && diam.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "domain diameter must be positive and finite, got {diam}"
                )));
            }
            let observed = mean_diff::empirical_diameter(pooled.view(), self.p_norm);
            if observed > diam * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "data spans an l{} distance of {observed}, beyond the declared domain diameter {diam}",
                    self.p_norm
                )));
            }
            let sens = sensitivity(self.kind, 0.0, 0.0, n, m, diam)?;
            return Ok(PreparedStatistic {
                kind: self.kind,
                sensitivity: sens,
                kernels: vec![],
                inner: Inner::MeanDiff {
                    pooled: Arc::new(pooled),
                    n,
                    p_norm: self.p_norm,
                },
            });
        }
        let kernel = self.kernel_source("pooled")?.resolve(pooled.view())?;
        let gram = gram_symmetric(&kernel, pooled.view())?;
        let row_sums = mmd::row_sums(gram.view());
        let sens = sensitivity(self.kind, kernel.bound(), 0.0, n, m, 0.0)?;
        Ok(PreparedStatistic {
            kind: self.kind,
            sensitivity: sens,
            kernels: vec![kernel],
            inner: Inner::Mmd {
                gram: Arc::new(gram),
                row_sums: Arc::new(row_sums),
                n,
                m,
            },
        })
    }

    fn prepare_paired(&self, d: &PairedData) -> Result<PreparedStatistic> {
        let n = d.n();
        let k_spec = self.kernel_source("y")?.resolve(d.y())?;
        let l_spec = self.kernel_source("z")?.resolve(d.z())?;
        let sens = sensitivity(self.kind, k_spec.bound(), l_spec.bound(), n, n, 0.0)?;
        let k = gram_symmetric(&k_spec, d.y())?;
        let l = gram_symmetric(&l_spec, d.z())?;
        let marg = HsicMarginals::new(k.view(), l.view());
        Ok(PreparedStatistic {
            kind: self.kind,
            sensitivity: sens,
            kernels: vec![k_spec, l_spec],
            inner: Inner::Hsic {
                k: Arc::new(k),
                l: Arc::new(l),
                marg: Arc::new(marg),
            },
        })
    }
}

/// A statistic evaluated under relabelling of a fixed dataset.
pub trait PermutationStatistic: Sync {
    /// Length of the permutations accepted by [`Self::evaluate`].
    fn permutation_len(&self) -> usize;
    /// Statistic of the dataset permuted by `perm` (`perm` must be a
    /// bijection on `0..permutation_len()`).
    fn evaluate(&self, perm: &[usize]) -> f64;
    fn sensitivity(&self) -> f64;

    fn evaluate_identity(&self) -> f64 {
        let id: Vec<usize> = (0..self.permutation_len()).collect();
        self.evaluate(&id)
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Mmd {
        gram: Arc<Array2<f64>>,
        row_sums: Arc<Vec<f64>>,
        n: usize,
        m: usize,
    },
    Hsic {
        k: Arc<Array2<f64>>,
        l: Arc<Array2<f64>>,
        marg: Arc<HsicMarginals>,
    },
    MeanDiff {
        pooled: Arc<Array2<f64>>,
        n: usize,
        p_norm: f64,
    },
}

/// A statistic bound to one dataset, with its Gram matrices precomputed.
#[derive(Debug, Clone)]
pub struct PreparedStatistic {
    kind: StatisticKind,
    sensitivity: f64,
    kernels: Vec<KernelSpec>,
    inner: Inner,
}

impl PreparedStatistic {
    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    /// The resolved kernels: one for MMD, `[k, ℓ]` for HSIC, none for
    /// `mean_diff`.
    pub fn kernels(&self) -> &[KernelSpec] {
        &self.kernels
    }

    /// Switches between the V and U forms without recomputing Gram matrices.
    pub fn with_kind(&self, kind: StatisticKind) -> Result<Self> {
        let compatible = matches!(
            (self.kind, kind),
            (StatisticKind::MmdV | StatisticKind::MmdU, StatisticKind::MmdV | StatisticKind::MmdU)
                | (StatisticKind::HsicV | StatisticKind::HsicU, StatisticKind::HsicV | StatisticKind::HsicU)
        ) || self.kind == kind;
        if !compatible {
            return Err(Error::InvalidParameter(format!(
                "cannot reinterpret {} as {}",
                self.kind.name(),
                kind.name()
            )));
        }
        let sens = match &self.inner {
            Inner::Mmd { n, m, .. } => sensitivity(kind, self.kernels[0].bound(), 0.0, *n, *m, 0.0)?,
            Inner::Hsic { marg, .. } => {
                let n = marg.row_k.len();
                sensitivity(kind, self.kernels[0].bound(), self.kernels[1].bound(), n, n, 0.0)?
            }
            Inner::MeanDiff { .. } => self.sensitivity,
        };
        Ok(Self {
            kind,
            sensitivity: sens,
            ..self.clone()
        })
    }
}

impl PreparedStatistic {
    /// V and U forms of a kernel statistic from one pass over the Gram
    /// matrices, bit-identical to evaluating each form separately. `None`
    /// for `mean_diff` or when the sample is too small for the U form.
    pub fn evaluate_v_u(&self, perm: &[usize]) -> Option<(f64, f64)> {
        match &self.inner {
            Inner::Mmd {
                gram,
                row_sums,
                n,
                m,
            } => {
                if (*n).min(*m) < StatisticKind::MmdU.min_size() {
                    return None;
                }
                let s = mmd::mmd_sums(gram.view(), row_sums, &mmd::group_weights(perm, *n));
                Some((mmd::v_from_sums(&s, *n, *m), mmd::u_from_sums(&s, *n, *m)))
            }
            Inner::Hsic { k, l, marg } => {
                let n = k.nrows();
                if n < StatisticKind::HsicU.min_size() {
                    return None;
                }
                let s = hsic::hsic_sums(k.view(), l.view(), marg, perm);
                Some((hsic::v_from_sums(&s, marg, n), hsic::u_from_sums(&s, marg, n)))
            }
            Inner::MeanDiff { .. } => None,
        }
    }
}

impl PermutationStatistic for PreparedStatistic {
    fn permutation_len(&self) -> usize {
        match &self.inner {
            Inner::Mmd { gram, .. } => gram.nrows(),
            Inner::Hsic { k, .. } => k.nrows(),
            Inner::MeanDiff { pooled, .. } => pooled.nrows(),
        }
    }

    fn evaluate(&self, perm: &[usize]) -> f64 {
        debug_assert!(validate_permutation(perm, self.permutation_len()).is_ok());
        match &self.inner {
            Inner::Mmd {
                gram,
                row_sums,
                n,
                m,
            } => {
                let s = mmd::mmd_sums(gram.view(), row_sums, &mmd::group_weights(perm, *n));
                if self.kind == StatisticKind::MmdU {
                    mmd::u_from_sums(&s, *n, *m)
                } else {
                    mmd::v_from_sums(&s, *n, *m)
                }
            }
            Inner::Hsic { k, l, marg } => {
                let s = hsic::hsic_sums(k.view(), l.view(), marg, perm);
                let n = k.nrows();
                if self.kind == StatisticKind::HsicU {
                    hsic::u_from_sums(&s, marg, n)
                } else {
                    hsic::v_from_sums(&s, marg, n)
                }
            }
            Inner::MeanDiff { pooled, n, p_norm } => {
                mean_diff::pooled_mean_diff(pooled.view(), *n, perm, *p_norm)
            }
        }
    }

    fn sensitivity(&self) -> f64 {
        self.sensitivity
    }
}
