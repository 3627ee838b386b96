use rand::Rng;
use rand_distr::StandardNormal;

use super::{KernelSupport, SamplingKernel};
use crate::error::{FriError, Result};
use crate::seed;
use crate::signal::PulseShape;

/// Piecewise-linear kernel `Σ_{k=−K}^{K} c_k β₁((t − kT)/T)` with `β₁(t) = max(0, 1 − |t|)`.
///
/// The kernel is truncated to `[−KT, KT]`; the outer halves of the two end
/// triangles are cut off. It is linear in its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineKernel {
    coefficients: Vec<f64>,
    spacing: f64,
}

impl BSplineKernel {
    /// `coefficients[i]` is `c_{i−K}`; the length must be odd.
    pub fn new(coefficients: Vec<f64>, spacing: f64) -> Result<Self> {
        if coefficients.len() % 2 == 0 {
            return Err(FriError::config(format!(
                "b-spline needs 2K+1 coefficients, got {}",
                coefficients.len()
            )));
        }
        if coefficients.len() < 3 {
            return Err(FriError::config("b-spline needs K >= 1"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(FriError::config(format!("knot spacing must be positive, got {spacing}")));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(FriError::numeric("non-finite b-spline coefficient"));
        }
        Ok(Self { coefficients, spacing })
    }

    /// Knot spacing chosen so that `[−KT, KT]` equals `[−half_width, half_width]`.
    pub fn spacing_for(half_width: f64, k: usize) -> f64 {
        half_width / k as f64
    }

    /// Coefficients sampled from a unit-height Gaussian of width `sigma`.
    pub fn gaussian_init(k: usize, half_width: f64, sigma: f64) -> Result<Self> {
        let spacing = Self::spacing_for(half_width, k);
        let coefficients = (-(k as i64)..=k as i64)
            .map(|i| {
                let t = i as f64 * spacing;
                (-(t * t) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        Self::new(coefficients, spacing)
    }

    /// Constant `0.1` plus a low-amplitude smooth perturbation (moving-average
    /// filtered Gaussian noise scaled to a standard deviation of `0.01`).
    pub fn smooth_init(k: usize, half_width: f64, seed_value: u64) -> Result<Self> {
        let spacing = Self::spacing_for(half_width, k);
        let n = 2 * k + 1;
        let mut rng = seed::rng_for(seed_value, seed::stream::INIT, 0xb5);
        let raw: Vec<f64> = (0..n + 8).map(|_| rng.sample(StandardNormal)).collect();
        let smooth: Vec<f64> = (0..n).map(|i| raw[i..i + 9].iter().sum::<f64>() / 9.0).collect();
        let mean = smooth.iter().sum::<f64>() / n as f64;
        let std = (smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let coefficients = smooth.iter().map(|v| 0.1 + 0.01 * (v - mean) / std).collect();
        Self::new(coefficients, spacing)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `K`, the number of knots on each side of the origin.
    pub fn half_count(&self) -> usize {
        self.coefficients.len() / 2
    }

    pub fn set_coefficients(&mut self, coefficients: &[f64]) -> Result<()> {
        if coefficients.len() != self.coefficients.len() {
            return Err(FriError::Shape {
                op: "bspline.set_coefficients",
                left: vec![self.coefficients.len()],
                right: vec![coefficients.len()],
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(FriError::numeric("non-finite b-spline coefficient"));
        }
        self.coefficients.copy_from_slice(coefficients);
        Ok(())
    }

    fn coefficient(&self, knot: i64) -> f64 {
        self.index(knot).map_or(0.0, |i| self.coefficients[i])
    }

    fn index(&self, knot: i64) -> Option<usize> {
        let i = knot + self.half_count() as i64;
        (i >= 0 && (i as usize) < self.coefficients.len()).then_some(i as usize)
    }

    fn half_width(&self) -> f64 {
        self.half_count() as f64 * self.spacing
    }

    /// Visits `(coefficient index, ∂g(t)/∂c)` for the two active basis functions.
    fn point_weights(&self, t: f64, mut visit: impl FnMut(usize, f64)) {
        if !self.support().contains(t) {
            return;
        }
        let u = t / self.spacing;
        let j = u.floor();
        let f = u - j;
        let j = j as i64;
        if let Some(i) = self.index(j) {
            visit(i, 1.0 - f);
        }
        if let Some(i) = self.index(j + 1) {
            visit(i, f);
        }
    }

    /// Visits `(coefficient index, ∂/∂c ∫_a^b g)`. Each segment between knots is
    /// linear, so the trapezoid rule is exact.
    fn interval_weights(&self, a: f64, b: f64, mut visit: impl FnMut(usize, f64)) {
        let Some((lo, hi)) = self.support().clip(a, b) else {
            return;
        };
        let first = (lo / self.spacing).floor() as i64;
        let last = (hi / self.spacing).ceil() as i64;
        for j in first..last {
            let x0 = lo.max(j as f64 * self.spacing);
            let x1 = hi.min((j + 1) as f64 * self.spacing);
            if x1 <= x0 {
                continue;
            }
            let f0 = x0 / self.spacing - j as f64;
            let f1 = x1 / self.spacing - j as f64;
            let half = 0.5 * (x1 - x0);
            if let Some(i) = self.index(j) {
                visit(i, half * ((1.0 - f0) + (1.0 - f1)));
            }
            if let Some(i) = self.index(j + 1) {
                visit(i, half * (f0 + f1));
            }
        }
    }

    /// Adds `weight · ∂(h ∗ g)(t)/∂c` into `out`.
    pub(crate) fn accumulate_pulse_gradient(&self, pulse: PulseShape, t: f64, weight: f64, out: &mut [f64]) {
        match pulse {
            PulseShape::Dirac => self.point_weights(t, |i, w| out[i] += weight * w),
            PulseShape::Rectangle { width } => self.interval_weights(t - width, t, |i, w| out[i] += weight * w),
        }
    }
}

impl SamplingKernel for BSplineKernel {
    fn support(&self) -> KernelSupport {
        let h = self.half_width();
        KernelSupport { t_min: -h, t_max: h }
    }

    fn evaluate(&self, t: f64) -> f64 {
        if !self.support().contains(t) {
            return 0.0;
        }
        let u = t / self.spacing;
        let j = u.floor();
        let f = u - j;
        let j = j as i64;
        self.coefficient(j) * (1.0 - f) + self.coefficient(j + 1) * f
    }

    fn pulse_response(&self, pulse: PulseShape, t: f64) -> f64 {
        match pulse {
            PulseShape::Dirac => self.evaluate(t),
            PulseShape::Rectangle { width } => {
                let mut acc = 0.0;
                self.interval_weights(t - width, t, |i, w| acc += self.coefficients[i] * w);
                acc
            }
        }
    }

    fn param_gradient(&self, t: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.coefficients.len()];
        self.point_weights(t, |i, w| g[i] += w);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel() -> BSplineKernel {
        let c: Vec<f64> = (0..105).map(|i| ((i as f64) * 0.37).sin()).collect();
        BSplineKernel::new(c, 0.3 / 52.0).unwrap()
    }

    #[test]
    fn default_geometry() {
        let k = BSplineKernel::gaussian_init(52, 0.3, 0.038).unwrap();
        assert_eq!(k.coefficients().len(), 105);
        let s = k.support();
        assert!((s.t_min + 0.3).abs() < 1e-15 && (s.t_max - 0.3).abs() < 1e-15);
    }

    #[test]
    fn knot_values_are_coefficients() {
        let k = kernel();
        for knot in -52i64..=52 {
            let t = knot as f64 * k.spacing();
            let c = k.coefficients()[(knot + 52) as usize];
            assert!((k.evaluate(t) - c).abs() < 1e-12, "knot {knot}");
            let g = k.param_gradient(t);
            for (i, gi) in g.iter().enumerate() {
                let expect = if i == (knot + 52) as usize { 1.0 } else { 0.0 };
                assert!((gi - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn piecewise_linear_between_knots() {
        let k = kernel();
        let t0 = 3.0 * k.spacing();
        let t1 = 4.0 * k.spacing();
        let mid = 0.5 * (t0 + t1);
        assert!((k.evaluate(mid) - 0.5 * (k.evaluate(t0) + k.evaluate(t1))).abs() < 1e-12);
    }

    #[test]
    fn rectangle_matches_fine_trapezoid() {
        let k = kernel();
        let w = 0.013;
        for &t in &[-0.31f64, -0.2954, 0.0, 0.1234, 0.3, 0.305] {
            let (lo, hi) = ((t - w).max(-0.3), t.min(0.3));
            let n = 20_000;
            let h = (hi - lo).max(0.0) / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let a = lo + i as f64 * h;
                acc += 0.5 * h * (k.evaluate(a) + k.evaluate(a + h));
            }
            assert!((k.pulse_response(PulseShape::Rectangle { width: w }, t) - acc).abs() < 1e-9);
        }
    }

    #[test]
    fn odd_length_required() {
        assert!(BSplineKernel::new(vec![0.0; 4], 0.1).is_err());
        assert!(BSplineKernel::new(vec![0.0; 5], 0.0).is_err());
    }
}
