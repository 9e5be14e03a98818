// Generate a small phantom dataset, write it to disk and read it back.

use v4d::experiment::Preset;
use v4d::ops::ConvMode;
use v4d::phantom::{build_dataset, SplitTag, Splits};
use v4d::samples::Samples;

pub fn run_example() -> v4d::Result<()> {
    let mut cfg = Preset::Desk.data_config(11);
    cfg.phantom.extent = [8; 3];
    cfg.split = [40, 10, 10];
    cfg.trajectory.samples_per_spline = 30;

    let splits = build_dataset(&cfg)?;
    let dir = tempfile::tempdir()?;
    splits.save(dir.path())?;
    let loaded = Splits::load(dir.path())?;
    for tag in SplitTag::ALL {
        let d = loaded.get(tag);
        println!("{:<5} {:>3} sequences of {} frames {:?}", tag.name(), d.len(), d.seq_len(), d.volume_shape());
    }
    println!("target normalization {:?}", loaded.normalization());

    for mode in ConvMode::ALL {
        println!("{:>5} input shape {:?}", mode.label(), loaded.train.view(mode).sample_shape());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
