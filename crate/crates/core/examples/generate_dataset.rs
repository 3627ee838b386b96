//! Draws a few noisy two-pulse examples and writes them as NDJSON.
//!
//!     cargo run --example generate_dataset -- 5 20

use fri_forge::kernels::{standard_support, Kernel};
use fri_forge::sampler::{build_grid, stream_dataset, write_ndjson, ExampleRecord, SnrPolicy};
use fri_forge::signal::{GenerationRanges, PulseShape};

fn main() {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(5, |s| s.parse().expect("count"));
    let snr: f64 = args.next().map_or(20.0, |s| s.parse().expect("snr in dB"));

    let kernel = Kernel::standard_gaussian_pair();
    let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
    let records: Vec<_> = stream_dataset(
        &GenerationRanges::standard(2),
        PulseShape::Dirac,
        &kernel,
        &grid,
        SnrPolicy::fixed(snr),
        count,
        42,
    )
    .unwrap()
    .map(|r| r.map(|(samples, signal)| ExampleRecord::new(&samples, &signal)))
    .collect::<Result<_, _>>()
    .unwrap();
    let mut out = std::io::stdout().lock();
    write_ndjson(&mut out, &records).unwrap();
}
