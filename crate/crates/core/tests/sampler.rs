use fri_forge::kernels::{standard_support, BSplineKernel, Kernel, SamplingKernel};
use fri_forge::sampler::{add_noise, build_grid, forward_samples, SampleGrid, SampleVector};
use fri_forge::seed::rng_for;
use fri_forge::signal::{draw_signal, FriSignal, GenerationRanges, PulseShape};
use rand::Rng;

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn samples_match_direct_sum() {
    let k = Kernel::standard_gaussian();
    let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
    let s = FriSignal::new(vec![2.0, -1.5], vec![-0.1, 0.27]).unwrap();
    let y = forward_samples(&s, PulseShape::Dirac, &k, &grid);
    let sigma = 0.038f64;
    for (i, v) in y.values.iter().enumerate() {
        let t = -0.78 + i as f64 * (1.6 / 21.0);
        let g = |u: f64| if u.abs() <= 0.3 { (-u * u / (2.0 * sigma * sigma)).exp() } else { 0.0 };
        let want = 2.0 * g(t + 0.1) - 1.5 * g(t - 0.27);
        assert!((v - want).abs() < 1e-12, "sample {i}: {v} vs {want}");
    }
}

#[test]
fn superposition() {
    let k = BSplineKernel::smooth_init(52, 0.3, 9).unwrap();
    let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
    let mut rng = rng_for(11, 0, 0);
    let ranges = GenerationRanges::standard(2);
    for pulse in [PulseShape::Dirac, PulseShape::rectangle(0.02).unwrap()] {
        for _ in 0..50 {
            let s1 = draw_signal(&ranges, &mut rng).unwrap();
            let s2 = draw_signal(&ranges, &mut rng).unwrap();
            let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let mut pairs: Vec<(f64, f64)> = s1
                .delays()
                .iter()
                .zip(s1.amplitudes())
                .map(|(t, x)| (*t, a * x))
                .chain(s2.delays().iter().zip(s2.amplitudes()).map(|(t, x)| (*t, b * x)))
                .collect();
            pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
            let joint = FriSignal::new(pairs.iter().map(|p| p.1).collect(), pairs.iter().map(|p| p.0).collect()).unwrap();
            let y = forward_samples(&joint, pulse, &k, &grid).values;
            let y1 = forward_samples(&s1, pulse, &k, &grid).values;
            let y2 = forward_samples(&s2, pulse, &k, &grid).values;
            for i in 0..grid.n {
                let want = a * y1[i] + b * y2[i];
                assert!((y[i] - want).abs() < 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}

#[test]
fn shift_moves_the_continuous_response() {
    let k = Kernel::standard_gaussian_pair();
    let s = FriSignal::new(vec![1.0, 3.0], vec![-0.2, 0.1]).unwrap();
    let delta = 0.0371;
    let moved = s.shifted(delta);
    let dense = SampleGrid::new(-1.0, 1e-3, 2000).unwrap();
    let dense_moved = SampleGrid::new(-1.0 + delta, 1e-3, 2000).unwrap();
    let a = forward_samples(&s, PulseShape::Dirac, &k, &dense).values;
    let b = forward_samples(&moved, PulseShape::Dirac, &k, &dense_moved).values;
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn each_pulse_reaches_two_samples() {
    let k = Kernel::standard_gaussian();
    let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
    assert!(grid.t_s < k.support().len());
    for i in 0..=1000 {
        let tau = -0.48 + i as f64 * 1e-3;
        let s = FriSignal::new(vec![1.0], vec![tau]).unwrap();
        let y = forward_samples(&s, PulseShape::Dirac, &k, &grid);
        let hits = y.values.iter().filter(|v| **v != 0.0).count();
        assert!(hits >= 2, "tau {tau} touches {hits} samples");
    }
}

#[test]
fn realized_snr_is_calibrated() {
    let grid = SampleGrid::new(0.0, 0.05, 21).unwrap();
    let clean = SampleVector::new((0..21).map(|i| (i as f64 * 0.4).sin() + 0.3).collect(), grid, None).unwrap();
    let p = clean.power();
    let mut rng = rng_for(12, 0, 0);
    for target in [0.0, 15.0, 40.0] {
        let mut noise_power = 0.0;
        let draws = 100_000;
        for _ in 0..draws {
            let noisy = add_noise(&clean, target, &mut rng).unwrap();
            noise_power += noisy.values.iter().zip(&clean.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        noise_power /= (draws * 21) as f64;
        let realized = 10.0 * (p / noise_power).log10();
        assert!((realized - target).abs() < 0.1, "target {target} realized {realized}");
    }
}

#[test]
fn noise_is_gaussian() {
    let grid = SampleGrid::new(0.0, 0.05, 2).unwrap();
    let clean = SampleVector::new(vec![1.0, -1.0], grid, None).unwrap();
    let mut rng = rng_for(13, 0, 0);
    // 0 dB on unit power: σ = 1.
    let xs: Vec<f64> = (0..10_000)
        .flat_map(|_| {
            let v = add_noise(&clean, 0.0, &mut rng).unwrap().values;
            [v[0] - 1.0, v[1] + 1.0]
        })
        .collect();
    let d = ks_statistic(xs, |x| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2));
    assert!(d < 0.015, "KS {d}");
}

#[test]
fn amplitudes_are_uniform() {
    let ranges = GenerationRanges::standard(1);
    let mut rng = rng_for(14, 0, 0);
    let xs: Vec<f64> = (0..100_000).map(|_| draw_signal(&ranges, &mut rng).unwrap().amplitudes()[0]).collect();
    let d = ks_statistic(xs, |x| ((x - 0.5) / 9.5).clamp(0.0, 1.0));
    assert!(d < 0.01, "KS {d}");
}
