//! Prints every kernel family on a common time axis as CSV.

use fri_forge::kernels::{BSplineKernel, Kernel, SamplingKernel, TwoExpKernel};

fn main() {
    let kernels: Vec<(&str, Kernel)> = vec![
        ("gaussian", Kernel::standard_gaussian()),
        ("gaussian_pair", Kernel::standard_gaussian_pair()),
        ("bspline_gaussian_init", BSplineKernel::gaussian_init(52, 0.3, 0.038).unwrap().into()),
        ("bspline_smooth_init", BSplineKernel::smooth_init(52, 0.3, 1).unwrap().into()),
        ("two_exp", TwoExpKernel::new(13.23, 24.44).unwrap().into()),
    ];
    let names: Vec<&str> = kernels.iter().map(|k| k.0).collect();
    println!("t,{}", names.join(","));
    for i in 0..=300 {
        let t = -0.3 + i as f64 * 0.002;
        let row: Vec<String> = kernels.iter().map(|(_, k)| format!("{:.6}", k.evaluate(t))).collect();
        println!("{t:.3},{}", row.join(","));
    }
}
