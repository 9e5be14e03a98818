// Adam on a linear regression problem with an exact solution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use v4d::metrics::Normalization;
use v4d::model::Network;
use v4d::optim::{fit, TrainConfig};
use v4d::samples::TensorSet;
use v4d::Tensor;

pub fn run_example() -> v4d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, f) = (64, 6);
    let x: Vec<f64> = (0..n * f).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..f * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut y = Vec::with_capacity(n * 3);
    for i in 0..n {
        for o in 0..3 {
            y.push((0..f).map(|k| x[i * f + k] * w[k * 3 + o]).sum::<f64>() + 0.5);
        }
    }
    let data = TensorSet::new(Tensor::new(&[n, f], x)?, Tensor::new(&[n, 3], y)?)?;

    // 125 epochs of 4 batches = 500 Adam steps.
    let cfg = TrainConfig { epochs: 125, batch_size: 16, lr: 0.02, seed: 1, report_every: 25, ..TrainConfig::default() };
    let out = fit(Network::linear(f, 3, 0)?, &data, &data, &cfg, &Normalization::identity(), |r| {
        println!("epoch {:>3}  train mse {:.3e}", r.epoch + 1, r.train_mse);
    })?;
    println!("{} steps, final train mse {:.3e}", out.steps, out.history.last().unwrap().train_mse);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
