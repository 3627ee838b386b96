use fri_forge::encoder::{Encoder, EncoderConfig};
use fri_forge::hardware::{
    poles_to_rc, rc_to_poles, realization_report, round_to_series, series_realization, simulate_bench, BenchScenario,
    ESeries, EncoderCheck,
};
use fri_forge::sampler::SampleGrid;
use fri_forge::seed::rng_for;
use fri_forge::signal::GenerationRanges;
use rand::Rng;

#[test]
fn equal_capacitors_give_reciprocal_resistors() {
    let mut rng = rng_for(31, 0, 0);
    for _ in 0..1000 {
        let a1 = rng.gen_range(1.0..90.0);
        let a2 = a1 + rng.gen_range(0.01..50.0);
        let c = 10f64.powf(rng.gen_range(-9.0..-4.0));
        let rc = poles_to_rc(a1, a2, c, c).unwrap();
        let want = [1.0 / (a1 * c), 1.0 / (a2 * c)];
        assert!((rc.r1 - want[0]).abs() <= 1e-12 * want[0] && (rc.r2 - want[1]).abs() <= 1e-12 * want[1]);
        let (b1, b2) = rc_to_poles(rc.r1, rc.r2, c, c).unwrap();
        assert!((b1 - a1).abs() <= 1e-12 * a1, "{a1} -> {b1}");
        assert!((b2 - a2).abs() <= 1e-12 * a2, "{a2} -> {b2}");
    }
}

#[test]
fn rounding_stays_within_one_series_step() {
    let mut rng = rng_for(32, 0, 0);
    for series in [ESeries::E12, ESeries::E24, ESeries::E96] {
        // Nearest on a log scale: at most half a step either way.
        let bound = series.max_step_ratio().sqrt() * (1.0 + 1e-12);
        for _ in 0..2000 {
            let v = 10f64.powf(rng.gen_range(0.0..7.0));
            let r = round_to_series(v, series).unwrap();
            let ratio = if r > v { r / v } else { v / r };
            assert!(ratio <= bound, "{v} -> {r} ({series:?})");
        }
    }
    // 13 -> 15 is the widest E24 gap, so no value moves by more than about 7.4%.
    assert!((ESeries::E24.max_step_ratio() - 15.0 / 13.0).abs() < 1e-12);
}

#[test]
fn bench_recovers_the_pulse_pair_with_an_untrained_encoder_shape() {
    // Only checks the plumbing: shapes, capture length and finite output.
    let grid = SampleGrid::causal_window(-0.48, 0.52, 21).unwrap();
    let enc = Encoder::new(EncoderConfig::standard(21, 2), 1).unwrap();
    let rc = series_realization((13.23, 24.44), 1e-6, 1e-6, ESeries::E24).unwrap();
    let res = simulate_bench(&rc.kernel().unwrap(), &enc, &grid, &BenchScenario::default(), 3).unwrap();
    assert_eq!(res.samples.len(), 21);
    assert_eq!(res.estimate.len(), 2);
    assert!(res.nmse_db.is_finite());
    assert!(res.capture.len() >= 190);
    let learned = fri_forge::kernels::TwoExpKernel::new(13.23, 24.44).unwrap();
    let ranges = GenerationRanges::standard(2);
    let report = realization_report(
        &learned,
        &rc,
        Some(EncoderCheck {
            encoder: &enc,
            grid: &grid,
            ranges: &ranges,
            trials: 20,
            seed: 1,
        }),
    )
    .unwrap();
    assert!(report.response.max_abs > 0.0);
}
