//! Short joint training run of a B-spline kernel and the encoder, then the
//! fixed-Gaussian baseline on the same budget.
//!
//!     cargo run --release --example train_joint -- 5

use fri_forge::encoder::{Encoder, EncoderConfig};
use fri_forge::kernels::{standard_support, BSplineKernel, Kernel};
use fri_forge::sampler::build_grid;
use fri_forge::trainer::{train, TrainConfig, TrainMode};

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(5, |s| s.parse().expect("epochs"));
    let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();

    let runs: [(&str, TrainMode, Kernel); 2] = [
        ("joint b-spline", TrainMode::Joint, BSplineKernel::gaussian_init(52, 0.3, 0.038).unwrap().into()),
        ("fixed gaussian", TrainMode::EncoderOnly, Kernel::standard_gaussian()),
    ];
    for (name, mode, kernel) in runs {
        let mut cfg = TrainConfig::desk(mode, grid, 2);
        cfg.epochs = epochs;
        cfg.examples_per_epoch = 16_384;
        cfg.batch_size = 2048;
        let encoder = Encoder::new(EncoderConfig::standard(21, 2), cfg.seed).unwrap();
        let out = train(&cfg, kernel, encoder, None).unwrap();
        println!("{name}:");
        for e in &out.report.epochs {
            println!("  epoch {:>3}  loss {:.4}  held-out {:>7.2} dB", e.epoch, e.train_loss, e.heldout_nmse_db);
        }
        println!("  best epoch {} ({:.1} s)", out.report.best_epoch, out.report.wall_clock_s);
    }
}
