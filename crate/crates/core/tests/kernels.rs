use fri_forge::kernels::{
    standard_support, BSplineKernel, GaussianPairKernel, Kernel, KernelSupport, SamplingKernel, TruncatedGaussianKernel,
    TwoExpKernel,
};
use fri_forge::seed::rng_for;
use fri_forge::signal::PulseShape;
use rand::Rng;

fn every_kernel() -> Vec<Kernel> {
    vec![
        TruncatedGaussianKernel::new(0.038, standard_support()).unwrap().into(),
        GaussianPairKernel::new(1.0, -0.6, -0.1, 0.12, 0.038, standard_support()).unwrap().into(),
        BSplineKernel::gaussian_init(52, 0.3, 0.038).unwrap().into(),
        BSplineKernel::smooth_init(52, 0.3, 3).unwrap().into(),
        TwoExpKernel::new(13.23, 24.44).unwrap().into(),
    ]
}

#[test]
fn zero_outside_support() {
    let mut rng = rng_for(1, 0, 0);
    for k in every_kernel() {
        let s = k.support();
        for _ in 0..10_000 {
            let off = rng.gen_range(1e-9..5.0);
            let t = if rng.gen_bool(0.5) { s.t_min - off } else { s.t_max + off };
            assert_eq!(k.evaluate(t), 0.0, "{} at {t}", k.type_name());
        }
    }
}

#[test]
fn two_exp_has_unit_area() {
    for (a1, a2) in [(13.23, 24.44), (2.0, 3.0), (40.0, 90.0)] {
        let k = TwoExpKernel::new(a1, a2).unwrap();
        let horizon = 20.0 / a1;
        let m = 200_000;
        let h = horizon / m as f64;
        // Simpson's rule.
        let mut sum = k.evaluate(0.0) + k.evaluate(horizon);
        for i in 1..m {
            sum += k.evaluate(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let area = sum * h / 3.0;
        assert!((area - 1.0).abs() < 1e-4, "area {area} for ({a1}, {a2})");
    }
}

// Central differences of the pulse response against the analytic trainable
// gradient, over both pulse shapes.
#[test]
fn trainable_gradients_match_finite_differences() {
    let mut rng = rng_for(2, 0, 0);
    let learnable: Vec<Kernel> = vec![
        BSplineKernel::smooth_init(52, 0.3, 5).unwrap().into(),
        BSplineKernel::gaussian_init(24, 0.3, 0.05).unwrap().into(),
        TwoExpKernel::new(13.23, 24.44).unwrap().into(),
        TwoExpKernel::new(5.0, 60.0).unwrap().into(),
    ];
    let pulses = [PulseShape::Dirac, PulseShape::rectangle(0.013).unwrap()];
    let mut checked = 0;
    while checked < 100 {
        let k = &learnable[rng.gen_range(0..learnable.len())];
        let pulse = pulses[rng.gen_range(0..2)];
        let s = k.support();
        let t = rng.gen_range(s.t_min..s.t_max.min(s.t_min + 1.0));
        let grad = k.pulse_trainable_gradient(pulse, t);
        let theta = k.trainable_params();
        let i = rng.gen_range(0..theta.len());
        let h = 1e-6;
        let at = |d: f64| {
            let mut p = theta.clone();
            p[i] += d;
            let mut kk = k.clone();
            kk.set_trainable_params(&p).unwrap();
            kk.pulse_response(pulse, t)
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        // Piecewise-linear kernels have kinks at knots; skip points too close to one.
        if let Kernel::BSpline(b) = k {
            let u = t / b.spacing();
            if pulse == PulseShape::Dirac && (u - u.round()).abs() < 1e-4 {
                continue;
            }
        }
        let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
        assert!(err < 1e-4, "{} t={t} i={i}: fd {fd} vs {}", k.type_name(), grad[i]);
        checked += 1;
    }
}

#[test]
fn bspline_is_linear_in_coefficients() {
    let mut rng = rng_for(3, 0, 0);
    let c1: Vec<f64> = (0..41).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c2: Vec<f64> = (0..41).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + b).collect();
    let (k1, k2, ks) = (
        BSplineKernel::new(c1, 0.015).unwrap(),
        BSplineKernel::new(c2, 0.015).unwrap(),
        BSplineKernel::new(sum, 0.015).unwrap(),
    );
    for _ in 0..1000 {
        let t = rng.gen_range(-0.35..0.35);
        let lhs = ks.evaluate(t);
        let rhs = k1.evaluate(t) + k2.evaluate(t);
        assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn gaussian_matches_formula() {
    let k = TruncatedGaussianKernel::new(0.038, KernelSupport::new(-0.3, 0.3).unwrap()).unwrap();
    for t in [-0.2, -0.05, 0.0, 0.01, 0.29] {
        let want = (-(t * t) / (2.0 * 0.038f64.powi(2))).exp();
        assert!((k.evaluate(t) - want).abs() < 1e-15);
    }
}
