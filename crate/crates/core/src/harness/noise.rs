use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Additive observation noise. Both nonzero families have variance `σ²`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseModel {
    #[default]
    None,
    Gaussian {
        sigma: f64,
    },
    Laplace {
        sigma: f64,
    },
}

impl NoiseModel {
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } | NoiseModel::Laplace { sigma } => sigma,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.sigma() == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma();
        if s >= 0.0 && s.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("noise sigma = {s} must be finite and nonnegative")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            NoiseModel::Laplace { sigma } => {
                // inverse CDF with scale b = σ/√2
                let b = sigma / std::f64::consts::SQRT_2;
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }

    /// `‖ξ‖_ψ1 = inf{c : E exp(|ξ|/c) <= 2}`; zero for silent noise.
    pub fn psi1(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Laplace { sigma } => std::f64::consts::SQRT_2 * sigma,
            NoiseModel::Gaussian { sigma } => sigma * *GAUSSIAN_PSI1_UNIT.get_or_init(gaussian_psi1_unit),
        }
    }
}

static GAUSSIAN_PSI1_UNIT: OnceLock<f64> = OnceLock::new();

/// ψ₁ norm of a standard normal: `E exp(|Z| s) = 2 e^{s²/2} Φ(s)`, so the
/// norm is `1/s` for the root of `e^{s²/2} Φ(s) = 1`.
fn gaussian_psi1_unit() -> f64 {
    let phi = Normal::standard();
    let f = |s: f64| (s * s / 2.0).exp() * phi.cdf(s) - 1.0;
    let (mut lo, mut hi) = (0.0, 4.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    1.0 / (0.5 * (lo + hi))
}
