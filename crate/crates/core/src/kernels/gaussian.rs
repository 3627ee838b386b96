use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::{KernelSupport, SamplingKernel};
use crate::error::{FriError, Result};
use crate::signal::PulseShape;

/// `exp(−t²/2σ²)` truncated to its support.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussianKernel {
    sigma: f64,
    support: KernelSupport,
}

impl TruncatedGaussianKernel {
    pub fn new(sigma: f64, support: KernelSupport) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(FriError::config(format!("gaussian sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma, support })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl SamplingKernel for TruncatedGaussianKernel {
    fn support(&self) -> KernelSupport {
        self.support
    }

    fn evaluate(&self, t: f64) -> f64 {
        if !self.support.contains(t) {
            return 0.0;
        }
        gauss(t, 0.0, self.sigma)
    }

    fn pulse_response(&self, pulse: PulseShape, t: f64) -> f64 {
        match pulse {
            PulseShape::Dirac => self.evaluate(t),
            PulseShape::Rectangle { width } => match self.support.clip(t - width, t) {
                Some((a, b)) => gauss_integral(a, b, 0.0, self.sigma),
                None => 0.0,
            },
        }
    }

    fn param_gradient(&self, _t: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// `A·exp(−(t−t₁)²/2σ²) + B·exp(−(t−t₂)²/2σ²)` truncated to its support.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPairKernel {
    gain_a: f64,
    gain_b: f64,
    center_a: f64,
    center_b: f64,
    sigma: f64,
    support: KernelSupport,
}

impl GaussianPairKernel {
    pub fn new(
        gain_a: f64,
        gain_b: f64,
        center_a: f64,
        center_b: f64,
        sigma: f64,
        support: KernelSupport,
    ) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(FriError::config(format!("gaussian sigma must be positive, got {sigma}")));
        }
        for c in [center_a, center_b] {
            if !(c > support.t_min && c < support.t_max) {
                return Err(FriError::config(format!(
                    "gaussian center {c} must lie inside the support ({}, {})",
                    support.t_min, support.t_max
                )));
            }
        }
        if !(gain_a.is_finite() && gain_b.is_finite()) {
            return Err(FriError::config("gaussian gains must be finite"));
        }
        Ok(Self {
            gain_a,
            gain_b,
            center_a,
            center_b,
            sigma,
            support,
        })
    }

    pub fn gains(&self) -> (f64, f64) {
        (self.gain_a, self.gain_b)
    }

    pub fn centers(&self) -> (f64, f64) {
        (self.center_a, self.center_b)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl SamplingKernel for GaussianPairKernel {
    fn support(&self) -> KernelSupport {
        self.support
    }

    fn evaluate(&self, t: f64) -> f64 {
        if !self.support.contains(t) {
            return 0.0;
        }
        self.gain_a * gauss(t, self.center_a, self.sigma) + self.gain_b * gauss(t, self.center_b, self.sigma)
    }

    fn pulse_response(&self, pulse: PulseShape, t: f64) -> f64 {
        match pulse {
            PulseShape::Dirac => self.evaluate(t),
            PulseShape::Rectangle { width } => match self.support.clip(t - width, t) {
                Some((a, b)) => {
                    self.gain_a * gauss_integral(a, b, self.center_a, self.sigma)
                        + self.gain_b * gauss_integral(a, b, self.center_b, self.sigma)
                }
                None => 0.0,
            },
        }
    }

    fn param_gradient(&self, _t: f64) -> Vec<f64> {
        Vec::new()
    }
}

fn gauss(t: f64, center: f64, sigma: f64) -> f64 {
    let z = (t - center) / sigma;
    (-0.5 * z * z).exp()
}

/// `∫_a^b exp(−(u−c)²/2σ²) du`, using the complementary error function in the
/// tails so that far-off intervals keep full relative precision.
pub(crate) fn gauss_integral(a: f64, b: f64, center: f64, sigma: f64) -> f64 {
    let scale = sigma * (0.5 * PI).sqrt();
    let za = (a - center) / sigma * FRAC_1_SQRT_2;
    let zb = (b - center) / sigma * FRAC_1_SQRT_2;
    let diff = if za >= 0.0 {
        libm::erfc(za) - libm::erfc(zb)
    } else if zb <= 0.0 {
        libm::erfc(-zb) - libm::erfc(-za)
    } else {
        libm::erf(zb) - libm::erf(za)
    };
    scale * diff
}
