//! HSIC statistics on the two marginal Gram matrices. Only the Z side is
//! permuted.

use ndarray::ArrayView2;

use crate::{Error, Result};

use super::validate_permutation;

/// Permutation-free summaries of the two Gram matrices.
#[derive(Debug, Clone)]
pub(crate) struct HsicMarginals {
    pub row_k: Vec<f64>,
    pub row_l: Vec<f64>,
    pub diag_k: Vec<f64>,
    pub diag_l: Vec<f64>,
    pub sum_k: f64,
    pub sum_l: f64,
}

impl HsicMarginals {
    pub fn new(k: ArrayView2<f64>, l: ArrayView2<f64>) -> Self {
        let row_k: Vec<f64> = k.outer_iter().map(|r| r.iter().sum()).collect();
        let row_l: Vec<f64> = l.outer_iter().map(|r| r.iter().sum()).collect();
        Self {
            sum_k: row_k.iter().sum(),
            sum_l: row_l.iter().sum(),
            row_k,
            row_l,
            diag_k: k.diag().to_vec(),
            diag_l: l.diag().to_vec(),
        }
    }
}

/// Sums that depend on the permutation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HsicSums {
    /// `Σ_{i,j} k_ij ℓ_{π_i π_j}`
    pub cross: f64,
    /// `Σ_i k_ii ℓ_{π_i π_i}`
    pub diag: f64,
    /// `Σ_i (Σ_j k_ij)(Σ_j ℓ_{π_i π_j})`
    pub rows: f64,
    /// `Σ_i (Σ_{j≠i} k_ij)(Σ_{j≠i} ℓ_{π_i π_j})`
    pub rows_off: f64,
}

pub(crate) fn hsic_sums(
    k: ArrayView2<f64>,
    l: ArrayView2<f64>,
    marg: &HsicMarginals,
    perm: &[usize],
) -> HsicSums {
    let mut cross = 0.0;
    let mut diag = 0.0;
    let mut rows = 0.0;
    let mut rows_off = 0.0;
    for (i, k_row) in k.outer_iter().enumerate() {
        let pi = perm[i];
        let l_row = l.row(pi);
        let mut acc = 0.0;
        for (j, kij) in k_row.iter().enumerate() {
            acc += kij * l_row[perm[j]];
        }
        cross += acc;
        diag += marg.diag_k[i] * marg.diag_l[pi];
        rows += marg.row_k[i] * marg.row_l[pi];
        rows_off += (marg.row_k[i] - marg.diag_k[i]) * (marg.row_l[pi] - marg.diag_l[pi]);
    }
    HsicSums {
        cross,
        diag,
        rows,
        rows_off,
    }
}

pub(crate) fn v_from_sums(s: &HsicSums, marg: &HsicMarginals, n: usize) -> f64 {
    let nf = n as f64;
    let n2 = nf * nf;
    let sq = s.cross / n2 + marg.sum_k * marg.sum_l / (n2 * n2) - 2.0 * s.rows / (n2 * nf);
    sq.max(0.0).sqrt()
}

/// Off-diagonal tuple sums `(s2, s3, s4)` over distinct pairs, triples and
/// quadruples.
pub(crate) fn tuple_sums(s: &HsicSums, marg: &HsicMarginals) -> (f64, f64, f64) {
    let trace_k: f64 = marg.diag_k.iter().sum();
    let trace_l: f64 = marg.diag_l.iter().sum();
    let s2 = s.cross - s.diag;
    let s3 = s.rows_off - s2;
    let s4 = (marg.sum_k - trace_k) * (marg.sum_l - trace_l) - 4.0 * s3 - 2.0 * s2;
    (s2, s3, s4)
}

pub(crate) fn u_from_sums(s: &HsicSums, marg: &HsicMarginals, n: usize) -> f64 {
    let nf = n as f64;
    let p2 = nf * (nf - 1.0);
    let p3 = p2 * (nf - 2.0);
    let p4 = p3 * (nf - 3.0);
    let (s2, s3, s4) = tuple_sums(s, marg);
    s2 / p2 + s4 / p4 - 2.0 * s3 / p3
}

fn check_shape(k: &ArrayView2<f64>, l: &ArrayView2<f64>) -> Result<usize> {
    let n = k.nrows();
    for (name, g) in [("Y", k), ("Z", l)] {
        if g.nrows() != g.ncols() {
            return Err(Error::SizeMismatch(format!("{name} Gram matrix is not square")));
        }
    }
    if l.nrows() != n {
        return Err(Error::SizeMismatch(format!(
            "Gram matrices have {} and {} rows",
            n,
            l.nrows()
        )));
    }
    if n == 0 {
        return Err(Error::SizeMismatch("empty sample".into()));
    }
    Ok(n)
}

fn need_four(n: usize, statistic: &'static str) -> Result<()> {
    if n < 4 {
        return Err(Error::InsufficientSamples {
            statistic,
            required: 4,
            found: n,
        });
    }
    Ok(())
}

/// Plug-in HSIC with Z rows permuted by `perm_z`.
pub fn hsic_v(gram_y: ArrayView2<f64>, gram_z: ArrayView2<f64>, perm_z: &[usize]) -> Result<f64> {
    let n = check_shape(&gram_y, &gram_z)?;
    validate_permutation(perm_z, n)?;
    let marg = HsicMarginals::new(gram_y, gram_z);
    let s = hsic_sums(gram_y, gram_z, &marg, perm_z);
    Ok(v_from_sums(&s, &marg, n))
}

/// Unbiased estimate of HSIC²; may be negative.
pub fn hsic_u(gram_y: ArrayView2<f64>, gram_z: ArrayView2<f64>, perm_z: &[usize]) -> Result<f64> {
    let n = check_shape(&gram_y, &gram_z)?;
    need_four(n, "hsic_u")?;
    validate_permutation(perm_z, n)?;
    let marg = HsicMarginals::new(gram_y, gram_z);
    let s = hsic_sums(gram_y, gram_z, &marg, perm_z);
    Ok(u_from_sums(&s, &marg, n))
}

/// The two parts `(D1, D2)` of `hsic_v² − hsic_u` for kernels with constant
/// diagonals `K = k(y,y)` and `L = ℓ(z,z)`:
///
/// ```text
/// D1 = (n−1)/n²·KL − L/n³·Σ_{i≠j} k_ij − K/n³·Σ_{i≠j} ℓ_ij
/// D2 = −(3n²−4n+2)/((n−1)n⁴)·s2
///      + 2(5n²−8n+4)/(n⁴(n−1)(n−2))·s3
///      − (6n²−11n+6)/(n⁴(n−1)(n−2)(n−3))·s4
/// ```
///
/// with `s2, s3, s4` the off-diagonal pair, triple and quadruple sums.
pub fn hsic_v_u_gap(gram_y: ArrayView2<f64>, gram_z: ArrayView2<f64>) -> Result<(f64, f64)> {
    let n = check_shape(&gram_y, &gram_z)?;
    need_four(n, "hsic_v_u_gap")?;
    let big_k = gram_y[[0, 0]];
    let big_l = gram_z[[0, 0]];
    let constant = |g: &ArrayView2<f64>, c: f64| g.diag().iter().all(|&v| (v - c).abs() <= 1e-12 * c.abs());
    if !constant(&gram_y, big_k) || !constant(&gram_z, big_l) {
        return Err(Error::InvalidParameter(
            "V-U decomposition needs Gram matrices with constant diagonals".into(),
        ));
    }
    let marg = HsicMarginals::new(gram_y, gram_z);
    let identity: Vec<usize> = (0..n).collect();
    let s = hsic_sums(gram_y, gram_z, &marg, &identity);
    let (s2, s3, s4) = tuple_sums(&s, &marg);
    let off_k = marg.sum_k - n as f64 * big_k;
    let off_l = marg.sum_l - n as f64 * big_l;
    let nf = n as f64;
    let n2 = nf * nf;
    let n3 = n2 * nf;
    let n4 = n2 * n2;
    let d1 = (nf - 1.0) / n2 * big_k * big_l - big_l / n3 * off_k - big_k / n3 * off_l;
    let d2 = -(3.0 * n2 - 4.0 * nf + 2.0) / ((nf - 1.0) * n4) * s2
        + 2.0 * (5.0 * n2 - 8.0 * nf + 4.0) / (n4 * (nf - 1.0) * (nf - 2.0)) * s3
        - (6.0 * n2 - 11.0 * nf + 6.0) / (n4 * (nf - 1.0) * (nf - 2.0) * (nf - 3.0)) * s4;
    Ok((d1, d2))
}
