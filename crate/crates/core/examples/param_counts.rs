// Parameter counts of every family in every convolution mode.

use v4d::model::{build_model, Family, ModelSpec};
use v4d::ops::ConvMode;

pub fn run_example() -> v4d::Result<()> {
    println!("{:<10} {:>9} {:>9} {:>9} {:>9}", "family", "3d", "3d-c", "f-4d", "4d");
    for family in Family::ALL {
        let mut counts = Vec::new();
        for mode in ConvMode::ALL {
            let spec = ModelSpec::new(family, mode);
            let net = build_model(&spec, &spec.input_shape(5, [16; 3], 1))?;
            counts.push(net.parameter_count());
        }
        println!("{:<10} {:>9} {:>9} {:>9} {:>9}", family.label(), counts[0], counts[1], counts[2], counts[3]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
