// Train a small 4D ResNet on a tiny phantom dataset, checkpoint it and
// evaluate the reloaded checkpoint on the test split.

use v4d::checkpoint::Checkpoint;
use v4d::experiment::{checkpoint_of, evaluate_checkpoint, train, Preset};
use v4d::metrics::EvalOptions;
use v4d::model::{Family, ModelSpec};
use v4d::ops::ConvMode;
use v4d::optim::TrainConfig;
use v4d::phantom::build_dataset;

pub fn run_example() -> v4d::Result<()> {
    let mut data = Preset::Desk.data_config(4);
    data.phantom.extent = [8; 3];
    data.split = [18, 6, 6];
    data.trajectory.samples_per_spline = 40;
    let splits = build_dataset(&data)?;

    let mut spec = ModelSpec::new(Family::ResNet, ConvMode::Mode4D).with_seed(4);
    spec.stem_channels = 2;
    spec.module_channel_multipliers = vec![1];
    spec.blocks_per_module = vec![1];
    let cfg = TrainConfig { epochs: 2, batch_size: 6, lr: 1e-3, seed: 4, ..TrainConfig::default() };

    let outcome = train(&splits, &spec, &cfg, |r| {
        println!("epoch {}  train mse {:.4}  val mae {:.4}", r.epoch + 1, r.train_mse, r.val_mae_units);
    })?;
    println!("best epoch {} of {}", outcome.best_epoch + 1, outcome.history.len());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("tiny.ckpt");
    checkpoint_of(&outcome, &cfg, splits.normalization()).save(&path)?;
    let ck = Checkpoint::load(&path)?;
    assert_eq!(ck.network.params(), outcome.network.params());

    let opts = EvalOptions { latency_reps: 3, latency_warmup: 1, ..EvalOptions::default() };
    print!("{}", evaluate_checkpoint(&ck, &splits, &opts)?.to_text());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
