//! MMD statistics on a pooled Gram matrix.
//!
//! A permutation only decides which pooled rows land in the first sample, so
//! every sum here is accumulated over the original row order with a 0/1 group
//! weight. Two permutations inducing the same split give bit-identical values.

use ndarray::ArrayView2;

use crate::{Error, Result};

use super::validate_permutation;

/// Block sums of a pooled Gram matrix under a group split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct MmdSums {
    pub syy: f64,
    pub szz: f64,
    pub syz: f64,
    pub diag_y: f64,
    pub diag_z: f64,
}

/// 1.0 for rows assigned to the first sample, 0.0 otherwise.
pub(crate) fn group_weights(perm: &[usize], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; perm.len()];
    for &p in &perm[..n] {
        w[p] = 1.0;
    }
    w
}

fn weighted_dot(row: &[f64], w: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = row.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += row[i] * w[i];
        acc[1] += row[i + 1] * w[i + 1];
        acc[2] += row[i + 2] * w[i + 2];
        acc[3] += row[i + 3] * w[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..row.len() {
        tail += row[i] * w[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn mmd_sums(gram: ArrayView2<f64>, row_sums: &[f64], w: &[f64]) -> MmdSums {
    let mut s = MmdSums {
        syy: 0.0,
        szz: 0.0,
        syz: 0.0,
        diag_y: 0.0,
        diag_z: 0.0,
    };
    for (a, row) in gram.outer_iter().enumerate() {
        let in_y = if let Some(slice) = row.as_slice() {
            weighted_dot(slice, w)
        } else {
            weighted_dot(&row.to_vec(), w)
        };
        let in_z = row_sums[a] - in_y;
        if w[a] == 1.0 {
            s.syy += in_y;
            s.syz += in_z;
            s.diag_y += row[a];
        } else {
            s.szz += in_z;
            s.diag_z += row[a];
        }
    }
    s
}

pub(crate) fn row_sums(gram: ArrayView2<f64>) -> Vec<f64> {
    gram.outer_iter().map(|r| r.iter().sum()).collect()
}

pub(crate) fn v_from_sums(s: &MmdSums, n: usize, m: usize) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let sq = s.syy / (nf * nf) + s.szz / (mf * mf) - 2.0 * s.syz / (nf * mf);
    sq.max(0.0).sqrt()
}

pub(crate) fn u_from_sums(s: &MmdSums, n: usize, m: usize) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    (s.syy - s.diag_y) / (nf * (nf - 1.0)) + (s.szz - s.diag_z) / (mf * (mf - 1.0))
        - 2.0 * s.syz / (nf * mf)
}

fn check_shape(gram: &ArrayView2<f64>, n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::SizeMismatch("both samples must be non-empty".into()));
    }
    if gram.nrows() != n + m || gram.ncols() != n + m {
        return Err(Error::SizeMismatch(format!(
            "pooled Gram is {}x{}, expected {}x{}",
            gram.nrows(),
            gram.ncols(),
            n + m,
            n + m
        )));
    }
    Ok(())
}

fn need_two(n: usize, m: usize) -> Result<()> {
    let found = n.min(m);
    if found < 2 {
        return Err(Error::InsufficientSamples {
            statistic: "mmd_u",
            required: 2,
            found,
        });
    }
    Ok(())
}

/// Plug-in MMD: the first `n` entries of `perm` index the first sample.
pub fn mmd_v(gram: ArrayView2<f64>, n: usize, m: usize, perm: &[usize]) -> Result<f64> {
    check_shape(&gram, n, m)?;
    validate_permutation(perm, n + m)?;
    let s = mmd_sums(gram, &row_sums(gram), &group_weights(perm, n));
    Ok(v_from_sums(&s, n, m))
}

/// Unbiased estimate of MMD²; may be negative.
pub fn mmd_u(gram: ArrayView2<f64>, n: usize, m: usize, perm: &[usize]) -> Result<f64> {
    check_shape(&gram, n, m)?;
    need_two(n, m)?;
    validate_permutation(perm, n + m)?;
    let s = mmd_sums(gram, &row_sums(gram), &group_weights(perm, n));
    Ok(u_from_sums(&s, n, m))
}

/// `mmd_v² − mmd_u` for the unpermuted split, from within-sample sums:
///
/// ```text
/// Σ_Y k(i,i)/n² + Σ_Z k(i,i)/m² − Σ_{Y,i≠j} k/(n²(n−1)) − Σ_{Z,i≠j} k/(m²(m−1))
/// ```
///
/// With a constant diagonal `K` the first two terms are `K/n + K/m`.
pub fn v_u_gap_mmd(gram: ArrayView2<f64>, n: usize, m: usize) -> Result<f64> {
    check_shape(&gram, n, m)?;
    need_two(n, m)?;
    let block = |lo: usize, hi: usize| {
        let mut diag = 0.0;
        let mut off = 0.0;
        for i in lo..hi {
            for j in lo..hi {
                if i == j {
                    diag += gram[[i, j]];
                } else {
                    off += gram[[i, j]];
                }
            }
        }
        (diag, off)
    };
    let (dy, oy) = block(0, n);
    let (dz, oz) = block(n, n + m);
    let (nf, mf) = (n as f64, m as f64);
    Ok(dy / (nf * nf) + dz / (mf * mf) - oy / (nf * nf * (nf - 1.0)) - oz / (mf * mf * (mf - 1.0)))
}
