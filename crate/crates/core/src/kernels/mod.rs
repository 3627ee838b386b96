//! Parameterised sampling kernels `g_θ(t)`.
//!
//! Every kernel has compact support, point evaluation, a closed-form response to
//! the supported pulse shapes, and analytic parameter gradients. Only the
//! B-spline and two-exponential kernels are learnable.
//!
//! | kernel | learnable parameters | support |
//! |--------|----------------------|---------|
//! | [`TruncatedGaussianKernel`] | none | configured |
//! | [`GaussianPairKernel`] | none | configured |
//! | [`BSplineKernel`] | `2K+1` coefficients | `[−KT, KT]` |
//! | [`TwoExpKernel`] | two pole logits | `[0, 20/α₁]` |

mod bspline;
mod gaussian;
mod two_exp;

pub use bspline::BSplineKernel;
pub use gaussian::{GaussianPairKernel, TruncatedGaussianKernel};
pub use two_exp::{peak_time, PoleBounds, TwoExpKernel, HORIZON_DECAYS};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{FriError, Result};
use crate::signal::PulseShape;

/// Closed interval outside which a kernel is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSupport {
    pub t_min: f64,
    pub t_max: f64,
}

impl KernelSupport {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min < t_max) || !t_min.is_finite() || !t_max.is_finite() {
            return Err(FriError::config(format!("invalid kernel support [{t_min}, {t_max}]")));
        }
        Ok(Self { t_min, t_max })
    }

    pub fn len(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }

    /// Intersection of `[a, b]` with the support, if non-empty.
    pub fn clip(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        let lo = a.max(self.t_min);
        let hi = b.min(self.t_max);
        (hi > lo).then_some((lo, hi))
    }
}

/// Point evaluation, pulse response and parameter gradient of a kernel.
pub trait SamplingKernel {
    fn support(&self) -> KernelSupport;

    /// `g_θ(t)`; exactly zero outside the support.
    fn evaluate(&self, t: f64) -> f64;

    /// `(h ∗ g_θ)(t)` for a unit pulse `h` at the origin.
    fn pulse_response(&self, pulse: PulseShape, t: f64) -> f64;

    /// `∂g_θ(t)/∂θ` in the kernel's natural parameters; empty for fixed kernels.
    fn param_gradient(&self, t: f64) -> Vec<f64>;
}

/// Any of the supported kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    TruncatedGaussian(TruncatedGaussianKernel),
    GaussianPair(GaussianPairKernel),
    BSpline(BSplineKernel),
    TwoExp(TwoExpKernel),
}

impl From<TruncatedGaussianKernel> for Kernel {
    fn from(k: TruncatedGaussianKernel) -> Self {
        Kernel::TruncatedGaussian(k)
    }
}

impl From<GaussianPairKernel> for Kernel {
    fn from(k: GaussianPairKernel) -> Self {
        Kernel::GaussianPair(k)
    }
}

impl From<BSplineKernel> for Kernel {
    fn from(k: BSplineKernel) -> Self {
        Kernel::BSpline(k)
    }
}

impl From<TwoExpKernel> for Kernel {
    fn from(k: TwoExpKernel) -> Self {
        Kernel::TwoExp(k)
    }
}

macro_rules! dispatch {
    ($self:expr, $k:ident => $body:expr) => {
        match $self {
            Kernel::TruncatedGaussian($k) => $body,
            Kernel::GaussianPair($k) => $body,
            Kernel::BSpline($k) => $body,
            Kernel::TwoExp($k) => $body,
        }
    };
}

impl SamplingKernel for Kernel {
    fn support(&self) -> KernelSupport {
        dispatch!(self, k => k.support())
    }

    fn evaluate(&self, t: f64) -> f64 {
        dispatch!(self, k => k.evaluate(t))
    }

    fn pulse_response(&self, pulse: PulseShape, t: f64) -> f64 {
        dispatch!(self, k => k.pulse_response(pulse, t))
    }

    fn param_gradient(&self, t: f64) -> Vec<f64> {
        dispatch!(self, k => k.param_gradient(t))
    }
}

/// Support `[−0.3, 0.3]` used by the Gaussian and B-spline experiments.
pub fn standard_support() -> KernelSupport {
    KernelSupport {
        t_min: -0.3,
        t_max: 0.3,
    }
}

impl Kernel {
    /// Truncated Gaussian with `σ = 0.038` on `[−0.3, 0.3]`.
    pub fn standard_gaussian() -> Self {
        TruncatedGaussianKernel::new(0.038, standard_support())
            .expect("valid constants")
            .into()
    }

    /// Gaussian pair `A = B = 1.4`, centres `∓0.2`, `σ = 0.038`, on `[−0.3, 0.3]`.
    pub fn standard_gaussian_pair() -> Self {
        GaussianPairKernel::new(1.4, 1.4, -0.2, 0.2, 0.038, standard_support())
            .expect("valid constants")
            .into()
    }

    /// Stable lowercase name used in JSON configs.
    pub fn type_name(&self) -> &'static str {
        match self {
            Kernel::TruncatedGaussian(_) => "truncated_gaussian",
            Kernel::GaussianPair(_) => "gaussian_pair",
            Kernel::BSpline(_) => "bspline",
            Kernel::TwoExp(_) => "two_exp",
        }
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, Kernel::BSpline(_) | Kernel::TwoExp(_))
    }

    /// Number of trainable (unconstrained) parameters.
    pub fn trainable_len(&self) -> usize {
        match self {
            Kernel::BSpline(k) => k.coefficients().len(),
            Kernel::TwoExp(_) => 2,
            _ => 0,
        }
    }

    /// Unconstrained parameters seen by the optimiser: B-spline coefficients or
    /// two-exponential pole logits.
    pub fn trainable_params(&self) -> Vec<f64> {
        match self {
            Kernel::BSpline(k) => k.coefficients().to_vec(),
            Kernel::TwoExp(k) => {
                let (p1, p2) = k.logits();
                vec![p1, p2]
            }
            _ => Vec::new(),
        }
    }

    pub fn set_trainable_params(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.trainable_len() {
            return Err(FriError::Shape {
                op: "kernel.set_trainable_params",
                left: vec![self.trainable_len()],
                right: vec![raw.len()],
            });
        }
        match self {
            Kernel::BSpline(k) => k.set_coefficients(raw),
            Kernel::TwoExp(k) => {
                *k = TwoExpKernel::from_logits(raw[0], raw[1], k.bounds())?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// A reusable helper for repeated trainable-gradient accumulation.
    pub fn trainable_gradient_context(&self) -> TrainableGradient<'_> {
        let jac = match self {
            Kernel::TwoExp(k) => k.logit_jacobian(),
            _ => [[0.0; 2]; 2],
        };
        TrainableGradient { kernel: self, jac }
    }

    /// `∂(h ∗ g)(t)/∂(trainable parameters)`.
    pub fn pulse_trainable_gradient(&self, pulse: PulseShape, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.trainable_len()];
        self.trainable_gradient_context().accumulate(pulse, t, 1.0, &mut out);
        out
    }

    /// JSON form `{"type": ..., "params": {...}, "support": [t_min, t_max]}`.
    pub fn to_json(&self) -> Value {
        let params = match self {
            Kernel::TruncatedGaussian(k) => json!({ "sigma": k.sigma() }),
            Kernel::GaussianPair(k) => {
                let (a, b) = k.gains();
                let (t1, t2) = k.centers();
                json!({ "a": a, "b": b, "t1": t1, "t2": t2, "sigma": k.sigma() })
            }
            Kernel::BSpline(k) => json!({ "coefficients": k.coefficients(), "spacing": k.spacing() }),
            Kernel::TwoExp(k) => {
                let (a1, a2) = k.alphas();
                let b = k.bounds();
                json!({
                    "alpha1": a1,
                    "alpha2": a2,
                    "alpha_min": b.alpha_min,
                    "alpha_max": b.alpha_max,
                    "min_gap": b.min_gap,
                })
            }
        };
        let s = self.support();
        json!({ "type": self.type_name(), "params": params, "support": [s.t_min, s.t_max] })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let cfg: KernelConfig = serde_json::from_value(value.clone())?;
        let support = || -> Result<KernelSupport> {
            let [a, b] = cfg
                .support
                .ok_or_else(|| FriError::config(format!("kernel type {} needs a support", cfg.kind)))?;
            KernelSupport::new(a, b)
        };
        let kernel = match cfg.kind.as_str() {
            "truncated_gaussian" => {
                let p: GaussianParams = serde_json::from_value(cfg.params)?;
                TruncatedGaussianKernel::new(p.sigma, support()?)?.into()
            }
            "gaussian_pair" => {
                let p: PairParams = serde_json::from_value(cfg.params)?;
                GaussianPairKernel::new(p.a, p.b, p.t1, p.t2, p.sigma, support()?)?.into()
            }
            "bspline" => {
                let p: BSplineParams = serde_json::from_value(cfg.params)?;
                match p {
                    BSplineParams::Explicit { coefficients, spacing } => BSplineKernel::new(coefficients, spacing)?,
                    BSplineParams::Init(BSplineInit::Gaussian { k, half_width, sigma }) => {
                        BSplineKernel::gaussian_init(k, half_width, sigma)?
                    }
                    BSplineParams::Init(BSplineInit::Smooth { k, half_width, seed }) => {
                        BSplineKernel::smooth_init(k, half_width, seed)?
                    }
                }
                .into()
            }
            "two_exp" => {
                let p: TwoExpParams = serde_json::from_value(cfg.params)?;
                let d = PoleBounds::default();
                let bounds = PoleBounds {
                    alpha_min: p.alpha_min.unwrap_or(d.alpha_min),
                    alpha_max: p.alpha_max.unwrap_or(d.alpha_max),
                    min_gap: p.min_gap.unwrap_or(d.min_gap),
                };
                TwoExpKernel::with_bounds(p.alpha1, p.alpha2, bounds)?.into()
            }
            other => return Err(FriError::config(format!("unknown kernel type '{other}'"))),
        };
        Ok(kernel)
    }

    /// `(t, g(t))` on `points` evenly spaced instants covering the support.
    pub fn dump(&self, points: usize) -> Vec<(f64, f64)> {
        let s = self.support();
        if points < 2 {
            return vec![(s.t_min, self.evaluate(s.t_min))];
        }
        (0..points)
            .map(|i| {
                let t = s.t_min + s.len() * i as f64 / (points - 1) as f64;
                (t, self.evaluate(t))
            })
            .collect()
    }
}

/// Accumulates pulse-response gradients with respect to the trainable parameters.
pub struct TrainableGradient<'a> {
    kernel: &'a Kernel,
    jac: [[f64; 2]; 2],
}

impl TrainableGradient<'_> {
    /// Adds `weight · ∂(h ∗ g)(t)/∂(trainable parameters)` into `out`.
    pub fn accumulate(&self, pulse: PulseShape, t: f64, weight: f64, out: &mut [f64]) {
        match self.kernel {
            Kernel::BSpline(k) => k.accumulate_pulse_gradient(pulse, t, weight, out),
            Kernel::TwoExp(k) => k.accumulate_pulse_logit_gradient(pulse, t, weight, &self.jac, out),
            _ => {}
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelConfig {
    #[serde(rename = "type")]
    kind: String,
    params: Value,
    #[serde(default)]
    support: Option<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianParams {
    sigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairParams {
    a: f64,
    b: f64,
    t1: f64,
    t2: f64,
    sigma: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BSplineParams {
    Explicit {
        coefficients: Vec<f64>,
        spacing: f64,
    },
    Init(BSplineInit),
}

/// Generated coefficients: `{"init": "gaussian", "k": 52, "half_width": 0.3, "sigma": 0.038}`
/// or `{"init": "smooth", "k": 52, "half_width": 0.3, "seed": 1}`.
#[derive(Deserialize)]
#[serde(tag = "init", rename_all = "snake_case", deny_unknown_fields)]
enum BSplineInit {
    Gaussian { k: usize, half_width: f64, sigma: f64 },
    Smooth { k: usize, half_width: f64, seed: u64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoExpParams {
    alpha1: f64,
    alpha2: f64,
    alpha_min: Option<f64>,
    alpha_max: Option<f64>,
    min_gap: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kernels() -> Vec<Kernel> {
        vec![
            Kernel::standard_gaussian(),
            Kernel::standard_gaussian_pair(),
            BSplineKernel::smooth_init(52, 0.3, 1).unwrap().into(),
            TwoExpKernel::new(13.23, 24.44).unwrap().into(),
        ]
    }

    #[test]
    fn json_round_trip() {
        for k in all_kernels() {
            let back = Kernel::from_json(&k.to_json()).unwrap();
            assert_eq!(back, k);
        }
    }

    #[test]
    fn bspline_from_init() {
        let v = json!({"type": "bspline", "params": {"init": "gaussian", "k": 52, "half_width": 0.3, "sigma": 0.038}});
        let k = Kernel::from_json(&v).unwrap();
        assert_eq!(k, BSplineKernel::gaussian_init(52, 0.3, 0.038).unwrap().into());
        let v = json!({"type": "bspline", "params": {"init": "smooth", "k": 52, "half_width": 0.3, "seed": 4}});
        assert_eq!(Kernel::from_json(&v).unwrap().trainable_len(), 105);
    }

    #[test]
    fn json_rejects_unknown() {
        let v = json!({"type": "sinc", "params": {}});
        assert!(matches!(Kernel::from_json(&v), Err(FriError::Config(_))));
        let v = json!({"type": "truncated_gaussian", "params": {"sigma": 0.1, "extra": 1}, "support": [-1, 1]});
        assert!(Kernel::from_json(&v).is_err());
    }

    #[test]
    fn fixed_kernels_have_no_gradient() {
        assert!(Kernel::standard_gaussian().param_gradient(0.0).is_empty());
        assert!(Kernel::standard_gaussian_pair().param_gradient(0.1).is_empty());
        assert_eq!(Kernel::standard_gaussian().trainable_len(), 0);
    }

    #[test]
    fn dirac_response_is_evaluation() {
        for k in all_kernels() {
            for i in 0..50 {
                let t = -0.4 + i as f64 * 0.021;
                assert_eq!(k.pulse_response(PulseShape::Dirac, t), k.evaluate(t));
            }
        }
    }

    #[test]
    fn dump_covers_support() {
        let d = Kernel::standard_gaussian().dump(601);
        assert_eq!(d.len(), 601);
        assert!((d[0].0 + 0.3).abs() < 1e-15);
        assert!((d[300].1 - 1.0).abs() < 1e-12);
    }
}
