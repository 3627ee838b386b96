use super::{KernelSupport, SamplingKernel};
use crate::error::{FriError, Result};
use crate::signal::PulseShape;

/// Default pole bounds in 1/s.
pub const DEFAULT_ALPHA_MIN: f64 = 1.0;
pub const DEFAULT_ALPHA_MAX: f64 = 100.0;
/// Minimum pole separation; keeps the gain `α₁α₂/(α₂−α₁)` finite.
pub const DEFAULT_MIN_GAP: f64 = 1e-2;
/// The impulse response is cut at `HORIZON_DECAYS / α₁` seconds.
pub const HORIZON_DECAYS: f64 = 20.0;

/// Pole box `α_min ≤ α₁ < α₂ ≤ α_max` with a minimum gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleBounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub min_gap: f64,
}

impl Default for PoleBounds {
    fn default() -> Self {
        Self {
            alpha_min: DEFAULT_ALPHA_MIN,
            alpha_max: DEFAULT_ALPHA_MAX,
            min_gap: DEFAULT_MIN_GAP,
        }
    }
}

impl PoleBounds {
    fn validate(&self) -> Result<()> {
        let ok = self.alpha_min > 0.0
            && self.min_gap > 0.0
            && self.alpha_max.is_finite()
            && self.alpha_max - self.alpha_min > self.min_gap;
        if ok {
            Ok(())
        } else {
            Err(FriError::config(format!("invalid pole bounds {self:?}")))
        }
    }

    fn admits(&self, a1: f64, a2: f64) -> bool {
        a1 >= self.alpha_min && a2 <= self.alpha_max && a2 - a1 >= self.min_gap
    }
}

/// Two-real-pole impulse response `A₀(e^{−α₁t} − e^{−α₂t})u(t)` with unity DC gain.
///
/// Learning happens on unconstrained logits `(p₁, p₂)`:
///
/// ```text
/// α₁ = α_min + (α_max − α_min − ε)·s(p₁)
/// α₂ = α₁ + ε + (α_max − α₁ − ε)·s(p₂)
/// ```
///
/// with `s` the logistic map, so every parameter update stays inside the pole box.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoExpKernel {
    alpha1: f64,
    alpha2: f64,
    bounds: PoleBounds,
}

impl TwoExpKernel {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        Self::with_bounds(alpha1, alpha2, PoleBounds::default())
    }

    pub fn with_bounds(alpha1: f64, alpha2: f64, bounds: PoleBounds) -> Result<Self> {
        bounds.validate()?;
        if !(alpha1.is_finite() && alpha2.is_finite()) || !bounds.admits(alpha1, alpha2) {
            return Err(FriError::config(format!(
                "poles ({alpha1}, {alpha2}) violate {} <= a1 < a2 <= {} with gap >= {}",
                bounds.alpha_min, bounds.alpha_max, bounds.min_gap
            )));
        }
        Ok(Self { alpha1, alpha2, bounds })
    }

    /// Builds the kernel from logits.
    pub fn from_logits(p1: f64, p2: f64, bounds: PoleBounds) -> Result<Self> {
        bounds.validate()?;
        let (alpha1, alpha2) = poles_from_logits(p1, p2, &bounds)?;
        Ok(Self { alpha1, alpha2, bounds })
    }

    pub fn alphas(&self) -> (f64, f64) {
        (self.alpha1, self.alpha2)
    }

    pub fn bounds(&self) -> PoleBounds {
        self.bounds
    }

    /// `A₀ = α₁α₂/(α₂ − α₁)`.
    pub fn gain(&self) -> f64 {
        self.alpha1 * self.alpha2 / (self.alpha2 - self.alpha1)
    }

    pub fn horizon(&self) -> f64 {
        HORIZON_DECAYS / self.alpha1
    }

    /// Time of the impulse-response maximum, `ln(α₂/α₁)/(α₂ − α₁)`.
    pub fn peak_time(&self) -> f64 {
        peak_time(self.alpha1, self.alpha2)
    }

    /// Inverse of the logistic parameterisation.
    pub fn logits(&self) -> (f64, f64) {
        let b = &self.bounds;
        let s1 = (self.alpha1 - b.alpha_min) / (b.alpha_max - b.alpha_min - b.min_gap);
        let s2 = (self.alpha2 - self.alpha1 - b.min_gap) / (b.alpha_max - self.alpha1 - b.min_gap);
        (logit(s1), logit(s2))
    }

    /// `∂(α₁, α₂)/∂(p₁, p₂)` as `[[∂α₁/∂p₁, ∂α₁/∂p₂], [∂α₂/∂p₁, ∂α₂/∂p₂]]`.
    pub fn logit_jacobian(&self) -> [[f64; 2]; 2] {
        let b = &self.bounds;
        let (p1, p2) = self.logits();
        let (s1, s2) = (logistic(p1), logistic(p2));
        let da1_dp1 = (b.alpha_max - b.alpha_min - b.min_gap) * s1 * (1.0 - s1);
        let da2_dp1 = da1_dp1 * (1.0 - s2);
        let da2_dp2 = (b.alpha_max - self.alpha1 - b.min_gap) * s2 * (1.0 - s2);
        [[da1_dp1, 0.0], [da2_dp1, da2_dp2]]
    }

    /// Antiderivative `F(x) = ∫_0^x h` (untruncated) and `∂F/∂α`.
    fn step_response(&self, x: f64) -> (f64, [f64; 2]) {
        if x <= 0.0 {
            return (0.0, [0.0, 0.0]);
        }
        let (a1, a2) = (self.alpha1, self.alpha2);
        let gap = a2 - a1;
        let gain = self.gain();
        let (e1, e2) = ((-a1 * x).exp(), (-a2 * x).exp());
        let q = -(-a1 * x).exp_m1() / a1 + (-a2 * x).exp_m1() / a2;
        let dq1 = (x * e1 * a1 + (-a1 * x).exp_m1()) / (a1 * a1);
        let dq2 = -(x * e2 * a2 + (-a2 * x).exp_m1()) / (a2 * a2);
        let dgain1 = a2 * a2 / (gap * gap);
        let dgain2 = -a1 * a1 / (gap * gap);
        (gain * q, [dgain1 * q + gain * dq1, dgain2 * q + gain * dq2])
    }

    /// `(∂h/∂α₁, ∂h/∂α₂)` at `t`, zero outside the support.
    pub fn alpha_gradient(&self, t: f64) -> [f64; 2] {
        if !self.support().contains(t) {
            return [0.0, 0.0];
        }
        let (a1, a2) = (self.alpha1, self.alpha2);
        let gap = a2 - a1;
        let gain = self.gain();
        let (e1, e2) = ((-a1 * t).exp(), (-a2 * t).exp());
        let diff = e1 - e2;
        [
            a2 * a2 / (gap * gap) * diff - gain * t * e1,
            -a1 * a1 / (gap * gap) * diff + gain * t * e2,
        ]
    }

    /// `∂(h ∗ g)(t)/∂α` for a unit pulse.
    pub fn pulse_alpha_gradient(&self, pulse: PulseShape, t: f64) -> [f64; 2] {
        match pulse {
            PulseShape::Dirac => self.alpha_gradient(t),
            PulseShape::Rectangle { width } => match self.support().clip(t - width, t) {
                Some((a, b)) => {
                    let (_, gb) = self.step_response(b);
                    let (_, ga) = self.step_response(a);
                    [gb[0] - ga[0], gb[1] - ga[1]]
                }
                None => [0.0, 0.0],
            },
        }
    }

    /// Adds `weight · ∂(h ∗ g)(t)/∂(p₁, p₂)` into `out`.
    pub(crate) fn accumulate_pulse_logit_gradient(
        &self,
        pulse: PulseShape,
        t: f64,
        weight: f64,
        jac: &[[f64; 2]; 2],
        out: &mut [f64],
    ) {
        let g = self.pulse_alpha_gradient(pulse, t);
        out[0] += weight * (g[0] * jac[0][0] + g[1] * jac[1][0]);
        out[1] += weight * (g[0] * jac[0][1] + g[1] * jac[1][1]);
    }
}

impl SamplingKernel for TwoExpKernel {
    fn support(&self) -> KernelSupport {
        KernelSupport {
            t_min: 0.0,
            t_max: self.horizon(),
        }
    }

    fn evaluate(&self, t: f64) -> f64 {
        if !self.support().contains(t) {
            return 0.0;
        }
        self.gain() * ((-self.alpha1 * t).exp() - (-self.alpha2 * t).exp())
    }

    fn pulse_response(&self, pulse: PulseShape, t: f64) -> f64 {
        match pulse {
            PulseShape::Dirac => self.evaluate(t),
            PulseShape::Rectangle { width } => match self.support().clip(t - width, t) {
                Some((a, b)) => self.step_response(b).0 - self.step_response(a).0,
                None => 0.0,
            },
        }
    }

    fn param_gradient(&self, t: f64) -> Vec<f64> {
        self.alpha_gradient(t).to_vec()
    }
}

/// `ln(α₂/α₁)/(α₂ − α₁)`; tends to `1/α₁` as the poles merge.
pub fn peak_time(alpha1: f64, alpha2: f64) -> f64 {
    let r = alpha2 / alpha1 - 1.0;
    if r.abs() < 1e-12 {
        return 1.0 / alpha1;
    }
    r.ln_1p() / (alpha2 - alpha1)
}

fn logistic(p: f64) -> f64 {
    1.0 / (1.0 + (-p).exp())
}

fn logit(s: f64) -> f64 {
    let s = s.clamp(1e-12, 1.0 - 1e-12);
    (s / (1.0 - s)).ln()
}

/// Maps logits to poles and nudges the result by ulps so that the box and gap
/// constraints hold exactly in floating point.
fn poles_from_logits(p1: f64, p2: f64, b: &PoleBounds) -> Result<(f64, f64)> {
    if !(p1.is_finite() && p2.is_finite()) {
        return Err(FriError::numeric(format!("non-finite pole logits ({p1}, {p2})")));
    }
    let mut a1 = b.alpha_min + (b.alpha_max - b.alpha_min - b.min_gap) * logistic(p1);
    a1 = a1.max(b.alpha_min);
    while b.alpha_max - a1 < b.min_gap {
        a1 = a1.next_down();
    }
    let mut a2 = a1 + b.min_gap + (b.alpha_max - a1 - b.min_gap) * logistic(p2);
    a2 = a2.min(b.alpha_max);
    while a2 - a1 < b.min_gap {
        a2 = a2.next_up();
    }
    debug_assert!(b.admits(a1, a2));
    Ok((a1, a2))
}
