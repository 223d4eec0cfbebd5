//! Truncated-Uniform-Laplace noise.

use crate::rng::{uniform_open, RandomStream};
use crate::{Error, Result};

/// Tulap parameter `b ∈ (0, 1)`; privacy level `ε` corresponds to `b = e^{−ε}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TulapParam {
    b: f64,
}

impl TulapParam {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::InvalidParameter(format!("Tulap b must lie in (0, 1), got {b}")));
        }
        Ok(Self { b })
    }

    pub fn from_epsilon(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Self::new((-epsilon).exp())
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

/// CDF with nearest-integer rounding `r = [x]`:
///
/// ```text
/// x ≤ 0:  b^{−r} (b + (x − r + ½)(1 − b)) / (1 + b)
/// x > 0:  1 − b^{r} (b + (r − x + ½)(1 − b)) / (1 + b)
/// ```
pub fn tulap_cdf(param: &TulapParam, x: f64) -> f64 {
    let b = param.b;
    let r = x.round();
    if x <= 0.0 {
        b.powf(-r) * (b + (x - r + 0.5) * (1.0 - b)) / (1.0 + b)
    } else {
        1.0 - b.powf(r) * (b + (r - x + 0.5) * (1.0 - b)) / (1.0 + b)
    }
}

/// `g₁ − g₂ + u` with `g ~ Geom(1 − b)` on `{0, 1, …}` drawn as
/// `⌊ln v / ln b⌋` and `u ~ Unif(−½, ½)`, all from one stream.
pub fn tulap_sample(param: &TulapParam, stream: &RandomStream) -> f64 {
    let mut rng = stream.rng();
    let ln_b = param.b.ln();
    let g1 = (uniform_open(&mut rng).ln() / ln_b).floor();
    let g2 = (uniform_open(&mut rng).ln() / ln_b).floor();
    let u = uniform_open(&mut rng) - 0.5;
    g1 - g2 + u
}
