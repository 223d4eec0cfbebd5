//! Synthetic data: perturbed uniform densities and two-point distributions
//! with closed-form population MMD and HSIC.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::KernelSpec;
use crate::rng::{Purpose, RandomStream, StreamRng};
use crate::statistics::{PairedData, TwoSampleData};
use crate::{Error, Result};

/// Smooth bump on `(0, ½)` minus its mirror image on `(½, 1)`:
///
/// ```text
/// P(x) = exp(1 − 1/(1 − (4x−1)²))  on (0, ½)
///      − exp(1 − 1/(1 − (4x−3)²))  on (½, 1)
/// ```
pub fn perturbation_1d(x: f64) -> f64 {
    let bump = |t: f64| {
        let r = 1.0 - t * t;
        if r <= 0.0 {
            0.0
        } else {
            (1.0 - 1.0 / r).exp()
        }
    };
    if x > 0.0 && x < 0.5 {
        bump(4.0 * x - 1.0)
    } else if x > 0.5 && x < 1.0 {
        -bump(4.0 * x - 3.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedUniformSpec {
    dimension: usize,
    amplitude: f64,
}

impl PerturbedUniformSpec {
    pub fn new(dimension: usize, amplitude: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(Error::InvalidParameter(format!(
                "amplitude must lie in [0, 1], got {amplitude}"
            )));
        }
        Ok(Self { dimension, amplitude })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
}

/// `𝟙[x ∈ [0,1]^d] (1 + a Π_i P(x_i))`.
pub fn perturbed_uniform_density(x: &[f64], spec: &PerturbedUniformSpec) -> Result<f64> {
    if x.len() != spec.dimension {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension,
            found: x.len(),
        });
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Ok(0.0);
    }
    Ok(1.0 + spec.amplitude * x.iter().map(|&v| perturbation_1d(v)).product::<f64>())
}

fn uniform01(rng: &mut StreamRng) -> f64 {
    rng.random::<f64>()
}

/// Rejection sampling from the `(1 + a)`-scaled uniform envelope.
pub fn sample_perturbed_uniform(n: usize, spec: &PerturbedUniformSpec, stream: &RandomStream) -> Array2<f64> {
    let d = spec.dimension;
    let mut rng = stream.rng();
    let mut out = Array2::zeros((n, d));
    let mut x = vec![0.0; d];
    for mut row in out.outer_iter_mut() {
        loop {
            for v in x.iter_mut() {
                *v = uniform01(&mut rng);
            }
            if spec.amplitude == 0.0 {
                break;
            }
            let density = 1.0 + spec.amplitude * x.iter().map(|&v| perturbation_1d(v)).product::<f64>();
            if uniform01(&mut rng) * (1.0 + spec.amplitude) <= density {
                break;
            }
        }
        row.assign(&ndarray::ArrayView1::from(&x[..]));
    }
    out
}

/// `Y ~ Uniform([0,1]^d)` (stream `child(Data, 0)`) against
/// `Z ~` perturbed uniform (stream `child(Data, 1)`).
pub fn sample_uniform_vs_perturbed(
    n: usize,
    m: usize,
    spec: &PerturbedUniformSpec,
    stream: &RandomStream,
) -> Result<TwoSampleData> {
    let flat = PerturbedUniformSpec::new(spec.dimension, 0.0)?;
    TwoSampleData::new(
        sample_perturbed_uniform(n, &flat, &stream.child(Purpose::Data, 0)),
        sample_perturbed_uniform(m, spec, &stream.child(Purpose::Data, 1)),
    )
}

/// Rows from the `(d_y + d_z)`-dimensional perturbed uniform, split into
/// the first `d_y` and last `d_z` coordinates. Both marginals are uniform.
pub fn sample_joint_perturbed_uniform(
    n: usize,
    d_y: usize,
    d_z: usize,
    amplitude: f64,
    stream: &RandomStream,
) -> Result<PairedData> {
    let spec = PerturbedUniformSpec::new(d_y + d_z, amplitude)?;
    let joint = sample_perturbed_uniform(n, &spec, stream);
    PairedData::from_columns(joint.view(), d_y)
}

/// `P₀ = p₀ δ_x + (1 − p₀) δ_v` and `Q₀ = q₀ δ_x + (1 − q₀) δ_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPointSpec {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub p0: f64,
    pub q0: f64,
}

impl TwoPointSpec {
    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.v.len() || self.x.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                found: self.v.len(),
            });
        }
        for w in [self.p0, self.q0] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidParameter(format!("weight {w} is not a probability")));
            }
        }
        Ok(())
    }
}

/// `√(2 (p₀ − q₀)² (κ(0) − κ(x − v)))`.
pub fn two_point_mmd(spec: &TwoPointSpec, kernel: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    let gap = kernel.bound() - crate::kernels::evaluate(kernel, &spec.x, &spec.v)?;
    let diff = spec.p0 - spec.q0;
    Ok((2.0 * diff * diff * gap).max(0.0).sqrt())
}

fn two_atoms(n: usize, a: &[f64], b: &[f64], weight_a: f64, rng: &mut StreamRng) -> Array2<f64> {
    let mut out = Array2::zeros((n, a.len()));
    for mut row in out.outer_iter_mut() {
        let atom = if uniform01(rng) < weight_a { a } else { b };
        row.assign(&ndarray::ArrayView1::from(atom));
    }
    out
}

/// `n` draws from `P₀` (stream `child(Data, 0)`) and `m` from `Q₀`
/// (stream `child(Data, 1)`).
pub fn sample_two_point(n: usize, m: usize, spec: &TwoPointSpec, stream: &RandomStream) -> Result<TwoSampleData> {
    spec.validate()?;
    let y = two_atoms(n, &spec.x, &spec.v, spec.p0, &mut stream.child(Purpose::Data, 0).rng());
    let z = two_atoms(m, &spec.x, &spec.v, spec.q0, &mut stream.child(Purpose::Data, 1).rng());
    TwoSampleData::new(y, z)
}

/// Joint law on `{y₁, y₂} × {z₁, z₂}` with mass `¼ + ν` on `(y₁, z₁)` and
/// `(y₂, z₂)` and `¼ − ν` on the other two cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependentTwoPointSpec {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub nu: f64,
}

impl DependentTwoPointSpec {
    pub fn validate(&self) -> Result<()> {
        if self.y1.len() != self.y2.len() || self.y1.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.y1.len(),
                found: self.y2.len(),
            });
        }
        if self.z1.len() != self.z2.len() || self.z1.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.z1.len(),
                found: self.z2.len(),
            });
        }
        if !(0.0..=0.25).contains(&self.nu) {
            return Err(Error::InvalidParameter(format!(
                "nu must lie in [0, 1/4], got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

/// `2ν √((κ_Y(0) − κ_Y(y₁ − y₂)) (κ_Z(0) − κ_Z(z₁ − z₂)))`.
pub fn two_point_hsic(spec: &DependentTwoPointSpec, k: &KernelSpec, l: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    let gy = k.bound() - crate::kernels::evaluate(k, &spec.y1, &spec.y2)?;
    let gz = l.bound() - crate::kernels::evaluate(l, &spec.z1, &spec.z2)?;
    Ok(2.0 * spec.nu * (gy * gz).max(0.0).sqrt())
}

pub fn sample_dependent_two_point(n: usize, spec: &DependentTwoPointSpec, stream: &RandomStream) -> Result<PairedData> {
    spec.validate()?;
    let mut rng = stream.rng();
    let mut y = Array2::zeros((n, spec.y1.len()));
    let mut z = Array2::zeros((n, spec.z1.len()));
    let same = 0.25 + spec.nu;
    for i in 0..n {
        let u = uniform01(&mut rng);
        let (yi, zi) = if u < same {
            (&spec.y1, &spec.z1)
        } else if u < 2.0 * same {
            (&spec.y2, &spec.z2)
        } else if u < 2.0 * same + (0.25 - spec.nu) {
            (&spec.y1, &spec.z2)
        } else {
            (&spec.y2, &spec.z1)
        };
        y.row_mut(i).assign(&ndarray::ArrayView1::from(&yi[..]));
        z.row_mut(i).assign(&ndarray::ArrayView1::from(&zi[..]));
    }
    PairedData::new(y, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gauss(d: usize) -> KernelSpec {
        KernelSpec::gaussian(1.0, d).unwrap()
    }

    #[test]
    fn perturbation_examples() {
        assert_eq!(perturbation_1d(0.5), 0.0);
        assert_eq!(perturbation_1d(0.25), 1.0);
        assert_eq!(perturbation_1d(0.75), -1.0);
        assert_eq!(perturbation_1d(0.0), 0.0);
        assert_eq!(perturbation_1d(1.2), 0.0);
        for i in 1..100 {
            let x = i as f64 / 200.0;
            assert_abs_diff_eq!(perturbation_1d(x), -perturbation_1d(1.0 - x), epsilon = 1e-15);
            assert!(perturbation_1d(x).abs() <= 1.0);
        }
    }

    #[test]
    fn density_examples() {
        let flat = PerturbedUniformSpec::new(2, 0.0).unwrap();
        assert_eq!(perturbed_uniform_density(&[0.3, 0.9], &flat).unwrap(), 1.0);
        let s = PerturbedUniformSpec::new(1, 0.5).unwrap();
        assert_eq!(perturbed_uniform_density(&[0.25], &s).unwrap(), 1.5);
        assert_eq!(perturbed_uniform_density(&[1.5], &s).unwrap(), 0.0);
        assert!(PerturbedUniformSpec::new(1, 1.5).is_err());
    }

    #[test]
    fn density_is_nonnegative_and_normalized() {
        for a in [0.0, 0.25, 0.5, 1.0] {
            for d in 1..=3usize {
                let s = PerturbedUniformSpec::new(d, a).unwrap();
                let side = (10_000f64.powf(1.0 / d as f64)).ceil() as usize;
                let mut idx = vec![0usize; d];
                'grid: loop {
                    let x: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) / side as f64).collect();
                    assert!(perturbed_uniform_density(&x, &s).unwrap() >= 0.0);
                    for j in 0..d {
                        idx[j] += 1;
                        if idx[j] < side {
                            continue 'grid;
                        }
                        idx[j] = 0;
                    }
                    break;
                }
            }
        }
        // midpoint rule with 10^6 cells
        let s1 = PerturbedUniformSpec::new(1, 1.0).unwrap();
        let n1 = 1_000_000;
        let i1: f64 = (0..n1)
            .map(|i| perturbed_uniform_density(&[(i as f64 + 0.5) / n1 as f64], &s1).unwrap())
            .sum::<f64>()
            / n1 as f64;
        assert_abs_diff_eq!(i1, 1.0, epsilon = 1e-3);
        let s2 = PerturbedUniformSpec::new(2, 1.0).unwrap();
        let side = 1000;
        let mut i2 = 0.0;
        for i in 0..side {
            for j in 0..side {
                let x = [(i as f64 + 0.5) / side as f64, (j as f64 + 0.5) / side as f64];
                i2 += perturbed_uniform_density(&x, &s2).unwrap();
            }
        }
        assert_abs_diff_eq!(i2 / (side * side) as f64, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn zero_amplitude_is_uniform_passthrough() {
        let s = PerturbedUniformSpec::new(2, 0.0).unwrap();
        let stream = RandomStream::root(3);
        let x = sample_perturbed_uniform(5, &s, &stream);
        let mut rng = stream.rng();
        for v in x.iter() {
            assert_eq!(*v, rng.random::<f64>());
        }
    }

    #[test]
    fn two_point_closed_forms() {
        let spec = TwoPointSpec {
            x: vec![0.0],
            v: vec![1.0],
            p0: 0.75,
            q0: 0.25,
        };
        assert_abs_diff_eq!(two_point_mmd(&spec, &gauss(1)).unwrap(), 0.562192, epsilon = 1e-6);
        let same = TwoPointSpec { q0: 0.75, ..spec.clone() };
        assert_eq!(two_point_mmd(&same, &gauss(1)).unwrap(), 0.0);
        let dep = DependentTwoPointSpec {
            y1: vec![0.0],
            y2: vec![1.0],
            z1: vec![0.0],
            z2: vec![1.0],
            nu: 0.25,
        };
        assert_abs_diff_eq!(two_point_hsic(&dep, &gauss(1), &gauss(1)).unwrap(), 0.316060, epsilon = 1e-6);
        let indep = DependentTwoPointSpec { nu: 0.0, ..dep };
        assert_eq!(two_point_hsic(&indep, &gauss(1), &gauss(1)).unwrap(), 0.0);
    }

    #[test]
    fn two_point_samplers() {
        let spec = TwoPointSpec {
            x: vec![1.0, 2.0],
            v: vec![3.0, 4.0],
            p0: 1.0,
            q0: 0.3,
        };
        let d = sample_two_point(100, 100_000, &spec, &RandomStream::root(5)).unwrap();
        assert!(d.y().outer_iter().all(|r| r.to_vec() == vec![1.0, 2.0]));
        let hits = d.z().outer_iter().filter(|r| r[0] == 1.0).count() as f64;
        let sd = (100_000.0 * 0.3 * 0.7f64).sqrt();
        assert!((hits - 30_000.0).abs() < 3.0 * sd);

        let dep = DependentTwoPointSpec {
            y1: vec![0.0],
            y2: vec![1.0],
            z1: vec![5.0],
            z2: vec![6.0],
            nu: 0.25,
        };
        let p = sample_dependent_two_point(1000, &dep, &RandomStream::root(6)).unwrap();
        for (a, b) in p.y().iter().zip(p.z().iter()) {
            assert_eq!(*b, a + 5.0);
        }
    }
}
