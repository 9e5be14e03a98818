//! Presets, the train-then-evaluate pipeline and the family × mode sweep
//! with its results table.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::error::{invalid, Error, Result};
use crate::metrics::{self, EvalOptions, EvalReport, Normalization};
use crate::model::{build_model, Family, ModelSpec};
use crate::ops::ConvMode;
use crate::optim::{fit, EpochRecord, TrainConfig, TrainOutcome};
use crate::phantom::{DataConfig, PhantomConfig, Splits, TrajectoryConfig};
use crate::rng::derive_seed;
use crate::samples::Samples;

/// Named bundles of data and training defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 16³ volumes, 2000/400/400 sequences, 60 epochs.
    Desk,
    /// 32³ volumes, 5000/1000/1000 sequences, 350 epochs.
    PaperScale,
}

impl Preset {
    pub fn label(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::PaperScale => "paper-scale",
        }
    }

    pub fn data_config(self, seed: u64) -> DataConfig {
        let (extent, split, samples) = match self {
            Preset::Desk => (16, [2000, 400, 400], 200),
            Preset::PaperScale => (32, [5000, 1000, 1000], 500),
        };
        DataConfig {
            seq_len: 5,
            split,
            trajectory: TrajectoryConfig { samples_per_spline: samples, seed, ..TrajectoryConfig::default() },
            phantom: PhantomConfig { extent: [extent; 3], seed: derive_seed(seed, &[0x9a]), ..PhantomConfig::default() },
        }
    }

    pub fn train_config(self, seed: u64) -> TrainConfig {
        let epochs = match self {
            Preset::Desk => 60,
            Preset::PaperScale => 350,
        };
        TrainConfig { epochs, batch_size: 18, lr: 1e-4, seed, ..TrainConfig::default() }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper-scale" => Ok(Preset::PaperScale),
            _ => Err(invalid!("unknown preset {s:?} (expected desk or paper-scale)")),
        }
    }
}

/// Builds the model for `spec` on the dataset geometry and trains it.
pub fn train(splits: &Splits, spec: &ModelSpec, cfg: &TrainConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    spec.validate()?;
    let train = splits.train.view(spec.mode);
    let val = splits.val.view(spec.mode);
    let net = build_model(spec, &train.sample_shape())?;
    fit(net, &train, &val, cfg, splits.normalization(), on_epoch)
}

/// Checkpoint carrying the trained network and its provenance.
pub fn checkpoint_of(outcome: &TrainOutcome, cfg: &TrainConfig, norm: &Normalization) -> Checkpoint {
    let best = &outcome.history[outcome.best_epoch];
    Checkpoint {
        network: outcome.network.clone(),
        meta: CheckpointMeta {
            normalization: *norm,
            train: Some(cfg.clone()),
            best_epoch: Some(outcome.best_epoch),
            best_val_mae_um: Some(best.val_mae_units),
        },
        optimizer: Some(outcome.optimizer.clone()),
    }
}

/// Evaluates a checkpoint on the test split.
pub fn evaluate_checkpoint(ck: &Checkpoint, splits: &Splits, opts: &EvalOptions) -> Result<EvalReport> {
    let mode = ck.network.spec().map(|s| s.mode).ok_or_else(|| invalid!("checkpoint has no model spec"))?;
    if ck.meta.normalization != *splits.normalization() {
        return Err(invalid!("checkpoint was trained with a different target normalization than this dataset"));
    }
    metrics::evaluate(&ck.network, &splits.test.view(mode), splits.normalization(), opts)
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub families: Vec<Family>,
    pub modes: Vec<ConvMode>,
    pub seeds: Vec<u64>,
    /// Architecture template; family, mode and seed are set per cell.
    pub model: ModelSpec,
    /// Training settings; the seed is set per cell.
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub parallel: bool,
    pub checkpoint_dir: Option<PathBuf>,
}

impl SweepOptions {
    pub fn new(model: ModelSpec, train: TrainConfig) -> Self {
        Self {
            families: Family::ALL.to_vec(),
            modes: ConvMode::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            model,
            train,
            eval: EvalOptions::default(),
            parallel: false,
            checkpoint_dir: None,
        }
    }

    fn cells(&self) -> Vec<(Family, ConvMode, u64)> {
        let mut out = Vec::new();
        for &f in &self.families {
            for &m in &self.modes {
                for &s in &self.seeds {
                    out.push((f, m, s));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub report: EvalReport,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub truncated: bool,
    pub train_secs: f64,
}

fn run_cell(splits: &Splits, opts: &SweepOptions, family: Family, mode: ConvMode, seed: u64) -> Result<CellResult> {
    let spec = ModelSpec { family, mode, seed, ..opts.model.clone() };
    let cfg = TrainConfig { seed, ..opts.train.clone() };
    let start = Instant::now();
    let outcome = train(splits, &spec, &cfg, |_| {})?;
    let train_secs = start.elapsed().as_secs_f64();
    let ck = checkpoint_of(&outcome, &cfg, splits.normalization());
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        ck.save(&dir.join(format!("{family}-{mode}-seed{seed}.ckpt")))?;
    }
    let report = evaluate_checkpoint(&ck, splits, &opts.eval)?;
    Ok(CellResult { report, best_epoch: outcome.best_epoch, epochs_run: outcome.history.len(), truncated: outcome.truncated, train_secs })
}

/// Trains and evaluates every family × mode × seed cell on shared data.
/// `on_cell` sees each result as it completes.
pub fn run_sweep(splits: &Splits, opts: &SweepOptions, on_cell: impl Fn(&CellResult) + Sync) -> Result<Vec<CellResult>> {
    let cells = opts.cells();
    if cells.is_empty() {
        return Err(invalid!("sweep has no cells"));
    }
    let run = |&(f, m, s): &(Family, ConvMode, u64)| {
        let r = run_cell(splits, opts, f, m, s)?;
        on_cell(&r);
        Ok(r)
    };
    if opts.parallel {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    }
}

/// Median over seeds of one family × mode cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub family: String,
    pub mode: String,
    /// The report whose MAE is the median over seeds.
    pub median: EvalReport,
    pub seeds: usize,
}

/// Groups reports by family and mode and picks the median-MAE run of each.
pub fn table(reports: &[EvalReport]) -> Vec<TableCell> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in reports {
        let k = (r.family.clone(), r.mode.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(family, mode)| {
            let mut runs: Vec<&EvalReport> = reports.iter().filter(|r| r.family == family && r.mode == mode).collect();
            runs.sort_by(|a, b| a.mae_um_mean.total_cmp(&b.mae_um_mean));
            TableCell { median: runs[runs.len() / 2].clone(), seeds: runs.len(), family, mode }
        })
        .collect()
}

/// Text table with one row per family and one column group per mode.
pub fn render_table(cells: &[TableCell]) -> String {
    let mut out = String::new();
    let modes: Vec<&str> = ConvMode::ALL.iter().map(|m| m.label()).filter(|m| cells.iter().any(|c| c.mode == *m)).collect();
    let _ = write!(out, "{:<10}", "family");
    for m in &modes {
        let _ = write!(out, " | {:^34}", format!("{m}: MAE (um) / rMAE / params"));
    }
    out.push('\n');
    let mut families: Vec<&str> = Vec::new();
    for c in cells {
        if !families.contains(&c.family.as_str()) {
            families.push(&c.family);
        }
    }
    for f in families {
        let _ = write!(out, "{f:<10}");
        for m in &modes {
            match cells.iter().find(|c| c.family == f && c.mode == *m) {
                Some(c) => {
                    let r = &c.median;
                    let _ = write!(out, " | {:>15} {:>6.3} {:>10}", format!("{:.2}±{:.2}", r.mae_um_mean, r.mae_um_std), r.rmae_mean, r.n_params);
                }
                None => {
                    let _ = write!(out, " | {:^34}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Whether the spatio-temporal modes beat the single-volume baseline for
/// one family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyVerdict {
    pub family: String,
    pub mae_3d: f64,
    pub mae_f4d: f64,
    pub mae_4d: f64,
    /// Relative improvement of 4D over 3D.
    pub gain_4d: f64,
    pub holds: bool,
}

/// Checks per family that median MAE(4D) and MAE(F-4D) are below MAE(3D)
/// and that 4D improves on 3D by at least `min_gain` (relative).
pub fn mode_ordering(cells: &[TableCell], min_gain: f64) -> Vec<FamilyVerdict> {
    let mut out = Vec::new();
    for f in Family::ALL {
        let get = |m: ConvMode| cells.iter().find(|c| c.family == f.label() && c.mode == m.label()).map(|c| c.median.mae_um_mean);
        if let (Some(d3), Some(f4), Some(d4)) = (get(ConvMode::Mode3D), get(ConvMode::ModeF4D), get(ConvMode::Mode4D)) {
            let gain = (d3 - d4) / d3;
            out.push(FamilyVerdict {
                family: f.label().into(),
                mae_3d: d3,
                mae_f4d: f4,
                mae_4d: d4,
                gain_4d: gain,
                holds: d4 < d3 && f4 < d3 && gain >= min_gain,
            });
        }
    }
    out
}

/// Writes reports as CSV rows, with a header only when `header` is set.
pub fn write_reports<W: std::io::Write>(rows: &[EvalReport], w: W, header: bool) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(header).from_writer(w);
    for r in rows {
        csv.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_reports<R: std::io::Read>(r: R) -> Result<Vec<EvalReport>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(|e| Error::Format(e.to_string()))).collect()
}
