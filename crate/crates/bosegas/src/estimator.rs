//! Monte Carlo estimate records and run parameters.

/// One Monte Carlo (or exact) result with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    /// Number of samples behind the estimate (0 for analytic values).
    pub samples: u64,
    pub seed: u64,
    /// True when the value is analytic or exact-DP; then `stderr == 0`.
    pub exact: bool,
}

impl EstimatorResult {
    pub fn exact(value: f64, seed: u64) -> Self {
        EstimatorResult {
            mean: value,
            stderr: 0.0,
            samples: 0,
            seed,
            exact: true,
        }
    }

    pub fn estimated(mean: f64, stderr: f64, samples: u64, seed: u64) -> Self {
        EstimatorResult {
            mean,
            stderr,
            samples,
            seed,
            exact: false,
        }
    }

    /// Two-estimate z-comparison: |m1 - m2| <= k sqrt(se1^2 + se2^2).
    pub fn agrees_within(&self, other: &EstimatorResult, k_sigma: f64) -> bool {
        let se = self.stderr.hypot(other.stderr);
        (self.mean - other.mean).abs() <= k_sigma * se.max(1e-300)
    }
}

/// Parameters shared by the stochastic estimators.
#[derive(Debug, Clone, Copy)]
pub struct McParams {
    pub samples: u64,
    pub seed: u64,
    /// Attempt cap for rejection samplers (Dirichlet bridges).
    pub rejection_cap: u64,
}

impl Default for McParams {
    fn default() -> Self {
        McParams {
            samples: 10_000,
            seed: 1,
            rejection_cap: 1_000_000,
        }
    }
}

impl McParams {
    pub fn new(samples: u64, seed: u64) -> Self {
        McParams {
            samples,
            seed,
            ..Default::default()
        }
    }
}
