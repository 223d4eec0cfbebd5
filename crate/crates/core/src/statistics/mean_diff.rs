use ndarray::{Array1, ArrayView2};

use crate::{Error, Result};

use super::{validate_permutation, TwoSampleData};

pub(crate) fn lp_norm(v: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        v.fold(0.0, |acc, x| acc.max(x.abs()))
    } else if p == 1.0 {
        v.map(f64::abs).sum()
    } else if p == 2.0 {
        v.map(|x| x * x).sum::<f64>().sqrt()
    } else {
        v.map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

pub(crate) fn check_p_norm(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p-norm must be at least 1, got {p}")));
    }
    Ok(())
}

/// Mean-difference norm over a pooled matrix; the first `n` entries of
/// `perm` select the first sample. Rows are summed in original order.
pub(crate) fn pooled_mean_diff(pooled: ArrayView2<f64>, n: usize, perm: &[usize], p: f64) -> f64 {
    let total = pooled.nrows();
    let m = total - n;
    let mut in_y = vec![false; total];
    for &i in &perm[..n] {
        in_y[i] = true;
    }
    let d = pooled.ncols();
    let mut sum_y = Array1::<f64>::zeros(d);
    let mut sum_z = Array1::<f64>::zeros(d);
    for (a, row) in pooled.outer_iter().enumerate() {
        if in_y[a] {
            sum_y += &row;
        } else {
            sum_z += &row;
        }
    }
    let (nf, mf) = (n as f64, m as f64);
    lp_norm(sum_y.iter().zip(sum_z.iter()).map(|(a, b)| a / nf - b / mf), p)
}

/// `‖mean(Y) − mean(Z)‖_p` after relabelling the pooled sample by `perm`.
pub fn mean_diff(data: &TwoSampleData, p_norm: f64, perm: &[usize]) -> Result<f64> {
    check_p_norm(p_norm)?;
    let pooled = data.pooled();
    validate_permutation(perm, pooled.nrows())?;
    Ok(pooled_mean_diff(pooled.view(), data.n(), perm, p_norm))
}

/// Largest pairwise `ℓ_p` distance among the rows.
pub(crate) fn empirical_diameter(points: ArrayView2<f64>, p: f64) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.nrows() {
        for j in (i + 1)..points.nrows() {
            let d = lp_norm(points.row(i).iter().zip(points.row(j).iter()).map(|(a, b)| a - b), p);
            best = best.max(d);
        }
    }
    best
}
