//! Privacy budgets and test configuration.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An `(ε, δ)` privacy budget with `ε > 0` and `0 ≤ δ < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }

    /// Pure `ε`-DP budget.
    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Laplace calibration parameter `ξ = ε + ln(1/(1−δ))`.
    pub fn xi(&self) -> f64 {
        xi_of(self)
    }
}

pub fn xi_of(budget: &PrivacyBudget) -> f64 {
    budget.epsilon - (-budget.delta).ln_1p()
}

/// Smallest `B` with `B ≥ 6 α⁻¹ ln(2/β)`.
pub fn min_permutations(alpha: f64, beta: f64) -> Result<usize> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must lie in (0, 1), got {v}"
            )));
        }
    }
    Ok((6.0 / alpha * (2.0 / beta).ln()).ceil() as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub num_permutations: usize,
    pub seed: u64,
    /// `None` runs the classical (non-private) Monte Carlo permutation test.
    pub budget: Option<PrivacyBudget>,
    /// Randomize non-rejections so the type I error equals `alpha` exactly.
    pub exact_level_randomization: bool,
    /// Keep the full vector of noisy statistics in the outcome.
    pub retain_noisy_values: bool,
}

impl TestConfig {
    pub fn new(
        alpha: f64,
        num_permutations: usize,
        seed: u64,
        budget: Option<PrivacyBudget>,
    ) -> Result<Self> {
        let config = Self {
            alpha,
            num_permutations,
            seed,
            budget,
            exact_level_randomization: false,
            retain_noisy_values: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.num_permutations < 1 {
            return Err(Error::InvalidParameter(
                "number of permutations must be at least 1".into(),
            ));
        }
        if !self.can_reject() {
            log::warn!(
                "B = {} permutations cannot reach a p-value of at most alpha = {}; \
                 the test never rejects (need B > 1/alpha - 1)",
                self.num_permutations,
                self.alpha
            );
        }
        Ok(())
    }

    /// Whether the smallest attainable p-value `1/(B+1)` is at most `alpha`.
    pub fn can_reject(&self) -> bool {
        1.0 / (self.num_permutations as f64 + 1.0) <= self.alpha
    }

    pub fn with_budget(mut self, budget: Option<PrivacyBudget>) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn xi_examples() {
        assert_eq!(PrivacyBudget::new(1.0, 0.0).unwrap().xi(), 1.0);
        let b = PrivacyBudget::new(0.5, 1.0 - (-0.5f64).exp()).unwrap();
        assert_abs_diff_eq!(b.xi(), 1.0, epsilon = 1e-12);
        let b = PrivacyBudget::new(1.0, 0.5).unwrap();
        assert_abs_diff_eq!(b.xi(), 1.0 + 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn budget_rejects_invalid_values() {
        assert!(PrivacyBudget::new(0.0, 0.0).is_err());
        assert!(PrivacyBudget::new(-1.0, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, -0.1).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn min_permutations_examples() {
        assert_eq!(min_permutations(0.05, 0.5).unwrap(), 167);
        assert_eq!(min_permutations(0.05, 0.05).unwrap(), 443);
        assert!(min_permutations(0.0, 0.5).is_err());
        assert!(min_permutations(0.05, 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TestConfig::new(0.05, 99, 0, None).is_ok());
        assert!(TestConfig::new(0.0, 99, 0, None).is_err());
        assert!(TestConfig::new(0.05, 0, 0, None).is_err());
        let c = TestConfig::new(0.05, 10, 0, None).unwrap();
        assert!(!c.can_reject());
        assert!(TestConfig::new(0.05, 19, 0, None).unwrap().can_reject());
    }

    proptest! {
        #[test]
        fn xi_dominates_epsilon(eps in 1e-6f64..100.0, delta in 0.0f64..0.999) {
            let b = PrivacyBudget::new(eps, delta).unwrap();
            prop_assert!(b.xi() >= eps);
            prop_assert!(b.xi().is_finite());
        }

        #[test]
        fn min_permutations_allows_rejection(alpha in 1e-3f64..0.999, beta in 1e-3f64..0.999) {
            let b = min_permutations(alpha, beta).unwrap() as f64;
            prop_assert!(b > 1.0 / alpha - 1.0);
        }
    }
}
