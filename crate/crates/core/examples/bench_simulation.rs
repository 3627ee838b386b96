//! Jointly trains two-exponential poles with the encoder on the hardware grid,
//! rounds the poles to E24 resistors and replays the two-pulse bench test.
//!
//!     cargo run --release --example bench_simulation -- 10

use fri_forge::encoder::{Encoder, EncoderConfig};
use fri_forge::hardware::{realization_report, series_realization, simulate_bench, BenchScenario, ESeries, EncoderCheck};
use fri_forge::kernels::{Kernel, TwoExpKernel};
use fri_forge::sampler::SampleGrid;
use fri_forge::signal::GenerationRanges;
use fri_forge::trainer::{train, TrainConfig, TrainMode};

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(10, |s| s.parse().expect("epochs"));
    let grid = SampleGrid::causal_window(-0.48, 0.52, 21).unwrap();
    let mut cfg = TrainConfig::desk(TrainMode::Joint, grid, 2);
    cfg.epochs = epochs;
    cfg.examples_per_epoch = 16_384;
    cfg.batch_size = 2048;
    cfg.lr_kernel = 2e-2;
    let init = TwoExpKernel::new(8.0, 30.0).unwrap();
    let encoder = Encoder::new(EncoderConfig::standard(21, 2), cfg.seed).unwrap();
    let out = train(&cfg, init.into(), encoder, None).unwrap();
    let Kernel::TwoExp(learned) = &out.kernel else { unreachable!() };
    let poles = learned.alphas();
    println!("learned poles ({:.3}, {:.3}), held-out {:.2} dB", poles.0, poles.1, out.report.best_heldout_nmse_db);

    let rc = series_realization(poles, 1e-6, 1e-6, ESeries::E24).unwrap();
    let ranges = GenerationRanges::standard(2);
    let check = EncoderCheck {
        encoder: &out.encoder,
        grid: &grid,
        ranges: &ranges,
        trials: 500,
        seed: 1,
    };
    let report = realization_report(learned, &rc, Some(check)).unwrap();
    println!(
        "E24: R1 = {:.0}, R2 = {:.0}, drift {:.1}% / {:.1}%",
        rc.r1,
        rc.r2,
        100.0 * rc.drift[0],
        100.0 * rc.drift[1]
    );
    println!("{}", serde_json::to_string_pretty(&report).unwrap());

    let bench = simulate_bench(&rc.kernel().unwrap(), &out.encoder, &grid, &BenchScenario::default(), 3).unwrap();
    println!("bench: truth {:?}, estimate {:.4?}, NMSE {:.2} dB", bench.truth, bench.estimate, bench.nmse_db);
}
