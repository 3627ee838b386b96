//! Trains a small joint model, sweeps SNR with delay and amplitude targets and
//! prints the summary table next to the published reference columns.

use fri_forge::eval::{reference_values, run_snr_sweep, summary_csv, train_suite_model, Budget, KernelChoice, Targets};

fn main() {
    let dir = std::env::temp_dir().join("fri_forge_evaluate_snr");
    let bundle = train_suite_model(KernelChoice::LearnableGaussian, 2, 21, Budget::Tiny, 7, &dir).unwrap();
    let snrs = [Some(5.0), Some(15.0), Some(25.0), Some(40.0)];
    let cells = run_snr_sweep(&bundle, &snrs, 200, 7, Targets::ALL).unwrap();
    let reference = reference_values();
    print!("{}", summary_csv(&cells, reference.suites.get("table2")));
}
