// A miniature family × mode sweep and its median-over-seeds table.

use v4d::experiment::{mode_ordering, render_table, run_sweep, table, Preset, SweepOptions};
use v4d::metrics::EvalOptions;
use v4d::model::{Family, ModelSpec};
use v4d::ops::ConvMode;
use v4d::optim::TrainConfig;
use v4d::phantom::build_dataset;

pub fn run_example() -> v4d::Result<()> {
    let mut data = Preset::Desk.data_config(8);
    data.phantom.extent = [6; 3];
    data.split = [12, 6, 6];
    data.trajectory.samples_per_spline = 30;
    let splits = build_dataset(&data)?;

    let mut model = ModelSpec::new(Family::ResNet, ConvMode::Mode3D);
    model.stem_channels = 3;
    model.module_channel_multipliers = vec![1];
    model.blocks_per_module = vec![1];
    model.cardinality = 2;
    model.growth_rate = 2;
    let train = TrainConfig { epochs: 1, batch_size: 6, lr: 1e-3, ..TrainConfig::default() };

    let mut opts = SweepOptions::new(model, train);
    opts.seeds = vec![0];
    opts.eval = EvalOptions { latency_reps: 3, latency_warmup: 0, ..EvalOptions::default() };
    let cells = run_sweep(&splits, &opts, |c| {
        println!("{} {} seed {}: {:.1} um", c.report.family, c.report.mode, c.report.seed, c.report.mae_um_mean);
    })?;

    let reports: Vec<_> = cells.into_iter().map(|c| c.report).collect();
    let t = table(&reports);
    print!("{}", render_table(&t));
    for v in mode_ordering(&t, 0.0) {
        println!("{}: 4d gain over 3d {:.1}%", v.family, 100.0 * v.gain_4d);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
