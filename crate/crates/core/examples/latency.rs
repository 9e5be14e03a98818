// Single-sample inference latency of one family in each mode.

use v4d::metrics::measure_latency;
use v4d::model::{build_model, Family, ModelSpec};
use v4d::ops::ConvMode;
use v4d::Tensor;

pub fn run_example() -> v4d::Result<()> {
    run(8, 3)
}

fn run(extent: usize, reps: usize) -> v4d::Result<()> {
    for mode in ConvMode::ALL {
        let mut spec = ModelSpec::new(Family::Inception, mode);
        spec.stem_channels = 4;
        let shape = spec.input_shape(5, [extent; 3], 1);
        let net = build_model(&spec, &shape)?;
        let mut batch = vec![1];
        batch.extend(&shape);
        let x = Tensor::full(&batch, 0.5)?;
        let ms = measure_latency(&net, &x, 1, reps)?;
        println!("{:<5} {:>8} params  {:>9.3} ms", mode, net.parameter_count(), ms);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    let extent = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    run(extent, 7).unwrap();
}
