//! Grid-search delays and both amplitude estimators on one noisy example.

use fri_forge::amplitude::{estimate_amplitudes_gd, estimate_amplitudes_ls, AmplitudeProblem, GdOptions};
use fri_forge::eval::{nmse_db, nmse_db_paired};
use fri_forge::kernels::{standard_support, Kernel};
use fri_forge::oracle::grid_search;
use fri_forge::sampler::{add_noise, build_grid, forward_samples};
use fri_forge::seed::rng_for;
use fri_forge::signal::{FriSignal, PulseShape};

fn main() {
    let kernel = Kernel::standard_gaussian();
    let grid = build_grid(standard_support(), -0.48, 0.52, 21).unwrap();
    let truth = FriSignal::new(vec![3.0, 7.5], vec![-0.137, 0.241]).unwrap();
    let clean = forward_samples(&truth, PulseShape::Dirac, &kernel, &grid);
    let y = add_noise(&clean, 30.0, &mut rng_for(1, 0, 0)).unwrap();

    let step = grid.t_s / 32.0;
    let best = grid_search(&y.values, &kernel, PulseShape::Dirac, &grid, 2, -0.48, 0.52, step).unwrap();
    println!("true delays   {:?}", truth.delays());
    println!("oracle delays {:?}  (step {step:.5}, residual {:.3e})", best.delays, best.residual);
    println!("delay NMSE    {:.2} dB", nmse_db(truth.delays(), &best.delays).unwrap());

    let p = AmplitudeProblem {
        samples: &y.values,
        delays: &best.delays,
        kernel: &kernel,
        pulse: PulseShape::Dirac,
        grid: &grid,
    };
    let ls = estimate_amplitudes_ls(&p).unwrap();
    let gd = estimate_amplitudes_gd(&p, GdOptions::default(), 0).unwrap();
    println!("LS amplitudes {ls:.4?}  NMSE {:.2} dB", nmse_db_paired(truth.amplitudes(), &ls).unwrap());
    println!("GD amplitudes {:.4?}  ({} steps, converged {})", gd.amplitudes, gd.steps, gd.converged);
}
