//! Maps the learned poles to Sallen-Key components and reports the drift
//! introduced by standard resistor values.

use fri_forge::hardware::{poles_to_rc, realize, response_deviation, series_realization, ESeries};
use fri_forge::kernels::TwoExpKernel;

fn main() {
    let (a1, a2, c) = (13.23, 24.44, 1e-6);
    let ideal = poles_to_rc(a1, a2, c, c).unwrap();
    println!("ideal:  R1 = {:.0} ohm, R2 = {:.0} ohm", ideal.r1, ideal.r2);

    let learned = TwoExpKernel::new(a1, a2).unwrap();
    for series in [ESeries::E12, ESeries::E24, ESeries::E96] {
        let r = series_realization((a1, a2), c, c, series).unwrap();
        let dev = response_deviation(&learned, &r.kernel().unwrap(), 2001);
        println!(
            "{series:?}: R1 = {:.0}, R2 = {:.0}, poles ({:.3}, {:.3}), drift {:.1}% / {:.1}%, max |dh| {:.3}",
            r.r1,
            r.r2,
            r.alpha1,
            r.alpha2,
            100.0 * r.drift[0],
            100.0 * r.drift[1],
            dev.max_abs
        );
    }

    // The components fitted to the bench board.
    let built = realize(85e3, 36.5e3, c, c, (a1, a2)).unwrap();
    println!(
        "built:  poles ({:.3}, {:.3}), drift {:.1}% / {:.1}%",
        built.alpha1,
        built.alpha2,
        100.0 * built.drift[0],
        100.0 * built.drift[1]
    );
}
