//! V-statistics evaluated straight from the kernel, one row at a time, for
//! samples too large for a dense Gram matrix. Memory is `O(n)`, time
//! `O(n²)` kernel evaluations.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::kernels::KernelSpec;
use crate::{Error, Result};

fn rows(a: ArrayView2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn block_sum(kernel: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.par_iter()
        .map(|x| b.iter().map(|y| kernel.eval_unchecked(x, y)).sum::<f64>())
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Unpermuted plug-in MMD between `y` and `z`.
pub fn mmd_v_streaming(kernel: &KernelSpec, y: ArrayView2<f64>, z: ArrayView2<f64>) -> Result<f64> {
    for d in [y.ncols(), z.ncols()] {
        if d != kernel.dimension() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dimension(),
                found: d,
            });
        }
    }
    let (n, m) = (y.nrows() as f64, z.nrows() as f64);
    if n == 0.0 || m == 0.0 {
        return Err(Error::SizeMismatch("empty sample".into()));
    }
    let (ry, rz) = (rows(y), rows(z));
    let syy = block_sum(kernel, &ry, &ry);
    let szz = block_sum(kernel, &rz, &rz);
    let syz = block_sum(kernel, &ry, &rz);
    Ok((syy / (n * n) + szz / (m * m) - 2.0 * syz / (n * m)).max(0.0).sqrt())
}

/// Unpermuted plug-in HSIC of the pairs `(y_i, z_i)`.
pub fn hsic_v_streaming(
    k: &KernelSpec,
    l: &KernelSpec,
    y: ArrayView2<f64>,
    z: ArrayView2<f64>,
) -> Result<f64> {
    if y.nrows() != z.nrows() || y.nrows() == 0 {
        return Err(Error::SizeMismatch(format!(
            "paired samples have {} and {} rows",
            y.nrows(),
            z.nrows()
        )));
    }
    for (spec, d) in [(k, y.ncols()), (l, z.ncols())] {
        if d != spec.dimension() {
            return Err(Error::DimensionMismatch {
                expected: spec.dimension(),
                found: d,
            });
        }
    }
    let (ry, rz) = (rows(y), rows(z));
    // per row i: (Σ_j k_ij, Σ_j ℓ_ij, Σ_j k_ij ℓ_ij)
    let per_row: Vec<(f64, f64, f64)> = (0..ry.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = (0.0, 0.0, 0.0);
            for j in 0..ry.len() {
                let kv = k.eval_unchecked(&ry[i], &ry[j]);
                let lv = l.eval_unchecked(&rz[i], &rz[j]);
                acc.0 += kv;
                acc.1 += lv;
                acc.2 += kv * lv;
            }
            acc
        })
        .collect();
    let n = ry.len() as f64;
    let sum_k: f64 = per_row.iter().map(|r| r.0).sum();
    let sum_l: f64 = per_row.iter().map(|r| r.1).sum();
    let cross: f64 = per_row.iter().map(|r| r.2).sum();
    let rows_term: f64 = per_row.iter().map(|r| r.0 * r.1).sum();
    let v2 = cross / (n * n) + sum_k * sum_l / (n * n * n * n) - 2.0 * rows_term / (n * n * n);
    Ok(v2.max(0.0).sqrt())
}
