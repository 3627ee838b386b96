//! Layer table of the standard encoder for a few (N, L) settings.

use fri_forge::encoder::{Encoder, EncoderConfig};

fn main() {
    for (n, l) in [(21, 2), (11, 2), (42, 5), (84, 10)] {
        let enc = Encoder::new(EncoderConfig::standard(n, l), 0).unwrap();
        println!("N = {n}, L = {l}: {} parameters", enc.param_count());
        for row in enc.layer_table() {
            println!("  {:<7} {:<12} {:<10} {:>7}", row.name, row.kind, format!("{:?}", row.output_shape), row.params);
        }
    }
}
