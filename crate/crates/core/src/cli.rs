//! The `v4d` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
//! `V4D_THREADS` caps the worker threads used for data generation and
//! batched convolutions.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::error::{invalid, Error, Result};
use crate::experiment::{self, Preset, SweepOptions};
use crate::gradcheck::{self, Fault, GradcheckOptions};
use crate::metrics::{self, EvalOptions, EvalReport, MeanStd};
use crate::model::{build_model, Family, ModelSpec};
use crate::ops::{self, ConvMode, ConvParams, FactorOrder, Padding};
use crate::optim::{write_history, TrainConfig};
use crate::phantom::{build_dataset, DataConfig, SplitTag, Splits};
use crate::rng;
use crate::tensor::Tensor;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "v4d", version, about = "Marker position regression from volume sequences with 3D, channel-stacked, factorized and full 4D CNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom dataset directory.
    Generate(GenerateArgs),
    /// Train one model and write its best-validation checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split and append a report row.
    Eval(EvalArgs),
    /// Finite-difference check of every layer and of small networks.
    Gradcheck(GradcheckArgs),
    /// Time the convolution kernels and per-mode model inference.
    Bench(BenchArgs),
    /// Train and evaluate every family and mode over several seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Preset supplying data and training defaults.
    #[arg(long, default_value = "desk", value_parser = parse_preset)]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cubic volume edge in voxels [default: 16 desk, 32 paper-scale].
    #[arg(long)]
    pub volume: Option<usize>,
    /// Frames per sequence [default: 5].
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// Train,val,test sequence counts [default: 2000,400,400 desk; 5000,1000,1000 paper-scale].
    #[arg(long, value_parser = parse_split)]
    pub split: Option<[usize; 3]>,
    /// Points sampled per spline [default: 200 desk, 500 paper-scale].
    #[arg(long)]
    pub samples_per_spline: Option<usize>,
    /// Multiplicative speckle standard deviation [default: 0.05].
    #[arg(long)]
    pub speckle: Option<f64>,
}

impl DataArgs {
    pub fn config(&self) -> DataConfig {
        let mut c = self.preset.data_config(self.seed);
        if let Some(v) = self.volume {
            c.phantom.extent = [v; 3];
        }
        if let Some(t) = self.seq_len {
            c.seq_len = t;
        }
        if let Some(s) = self.split {
            c.split = s;
        }
        if let Some(n) = self.samples_per_spline {
            c.trajectory.samples_per_spline = n;
        }
        if let Some(s) = self.speckle {
            c.phantom.speckle_std = s;
        }
        c
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 8)]
    pub stem_channels: usize,
    /// Blocks in each of the three modules.
    #[arg(long, default_value_t = 2)]
    pub blocks: usize,
    /// Order of the factorized stages.
    #[arg(long, default_value = "spatial-first", value_parser = parse_order)]
    pub factor_order: FactorOrder,
}

impl ModelArgs {
    fn spec(&self, family: Family, mode: ConvMode, seed: u64) -> ModelSpec {
        let mut s = ModelSpec::new(family, mode).with_seed(seed);
        s.stem_channels = self.stem_channels;
        s.blocks_per_module = vec![self.blocks; s.module_channel_multipliers.len()];
        s.factor_order = self.factor_order;
        s
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// Preset supplying epoch and batch defaults.
    #[arg(long, default_value = "desk", value_parser = parse_preset)]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training epochs [default: 60 desk, 350 paper-scale].
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 18)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Stop a training run after this many seconds (finishing the epoch).
    #[arg(long)]
    pub time_budget: Option<f64>,
}

impl TrainingArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        let mut c = self.preset.train_config(seed);
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        c.batch_size = self.batch_size;
        c.lr = self.lr;
        c.time_budget_secs = self.time_budget;
        c
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long, value_parser = parse_mode)]
    pub mode: ConvMode,
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Per-epoch history CSV [default: <checkpoint>.history.csv].
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV file the report row is appended to.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 18)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub latency_warmup: usize,
    /// Latency repetitions; 0 skips the measurement.
    #[arg(long, default_value_t = 31)]
    pub latency_reps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Relative-error tolerance for single layers.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Relative-error tolerance for whole networks.
    #[arg(long, default_value_t = 1e-5)]
    pub network_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coordinates sampled per tensor.
    #[arg(long, default_value_t = 16)]
    pub coords: usize,
    /// Skip the whole-network checks.
    #[arg(long)]
    pub layers_only: bool,
    #[arg(long, hide = true, value_parser = parse_fault)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Timed repetitions per kernel (median reported).
    #[arg(long, default_value_t = 7)]
    pub reps: usize,
    /// Channels in and out of each benchmarked convolution.
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Cubic volume edges to benchmark.
    #[arg(long, value_delimiter = ',', default_values_t = [16, 32])]
    pub volumes: Vec<usize>,
    /// Also time single-sample inference of each mode for this family.
    #[arg(long, value_parser = parse_family)]
    pub models: Option<Family>,
    /// Output CSV [default: stdout].
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Generate the dataset into --data-dir first if it has no manifest.
    #[arg(long)]
    pub generate: bool,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of seeds per cell (seeds are --seed, --seed + 1, ...).
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, value_delimiter = ',', value_parser = parse_family)]
    pub family: Option<Vec<Family>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    pub mode: Option<Vec<ConvMode>>,
    /// CSV file every cell's report row is appended to.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for per-cell checkpoints.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Run cells concurrently.
    #[arg(long)]
    pub parallel: bool,
    /// Latency repetitions per cell; 0 skips the measurement.
    #[arg(long, default_value_t = 31)]
    pub latency_reps: usize,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated counts, got {s:?}"));
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<ConvMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fault(s: &str) -> std::result::Result<Fault, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_order(s: &str) -> std::result::Result<FactorOrder, String> {
    match s {
        "spatial-first" => Ok(FactorOrder::SpatialFirst),
        "temporal-first" => Ok(FactorOrder::TemporalFirst),
        _ => Err(format!("unknown factor order {s:?} (expected spatial-first or temporal-first)")),
    }
}

/// Result of a command: an exit code, with output already printed.
type Outcome = Result<i32>;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point for the binary: applies `V4D_THREADS` and runs the process
/// arguments.
pub fn main() -> i32 {
    if let Ok(v) = std::env::var("V4D_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: V4D_THREADS must be a positive integer, got {v:?}");
                return EXIT_INPUT;
            }
        }
    }
    run(std::env::args_os())
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Generate(a) => generate(&a),
        Command::Train(a) => train(&a),
        Command::Eval(a) => eval(&a),
        Command::Gradcheck(a) => gradcheck_cmd(&a),
        Command::Bench(a) => bench(&a),
        Command::Sweep(a) => sweep(&a),
    }
}

fn dir_has_entries(dir: &Path) -> bool {
    fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn print_split_stats(splits: &Splits) {
    for tag in SplitTag::ALL {
        let d = splits.get(tag);
        let stats: Vec<MeanStd> = (0..3).map(|a| MeanStd::of(&(0..d.len()).map(|i| d.raw_target(i)[a]).collect::<Vec<_>>())).collect();
        println!(
            "{:<5} {:>5} sequences  target mm mean ({:.3}, {:.3}, {:.3}) std ({:.3}, {:.3}, {:.3})",
            tag.name(),
            d.len(),
            stats[0].mean,
            stats[1].mean,
            stats[2].mean,
            stats[0].std,
            stats[1].std,
            stats[2].std
        );
    }
}

fn generate(a: &GenerateArgs) -> Outcome {
    if dir_has_entries(&a.data_dir) && !a.force {
        return Err(invalid!("{} is not empty; pass --force to overwrite", a.data_dir.display()));
    }
    let cfg = a.data.config();
    let start = Instant::now();
    let splits = build_dataset(&cfg)?;
    splits.save(&a.data_dir)?;
    println!("dataset written to {} (preset {}, seed {}) in {:.1}s", a.data_dir.display(), a.data.preset.label(), a.data.seed, start.elapsed().as_secs_f64());
    print_split_stats(&splits);
    Ok(EXIT_OK)
}

fn train(a: &TrainArgs) -> Outcome {
    let splits = Splits::load(&a.data_dir)?;
    let spec = a.model.spec(a.family, a.mode, a.training.seed);
    let cfg = a.training.config(a.training.seed);
    println!("training {} {} for {} epochs (batch {}, lr {:e}, seed {})", a.family, a.mode, cfg.epochs, cfg.batch_size, cfg.lr, cfg.seed);
    let quiet = a.quiet;
    let outcome = experiment::train(&splits, &spec, &cfg, |r| {
        if !quiet {
            println!("epoch {:>4}  train mse {:.6}  val mae {:.2} um  val rmae {:.4}  ({:.0} ms)", r.epoch + 1, r.train_mse, r.val_mae_units, r.val_rmae, r.wall_ms);
        }
    })?;
    let ck = experiment::checkpoint_of(&outcome, &cfg, splits.normalization());
    if let Some(dir) = a.checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    ck.save(&a.checkpoint)?;
    let history = a.history.clone().unwrap_or_else(|| {
        let mut p = a.checkpoint.clone().into_os_string();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    write_history(&outcome.history, fs::File::create(&history)?)?;
    let best = &outcome.history[outcome.best_epoch];
    println!(
        "best epoch {} (val mae {:.2} um); {} parameters; checkpoint {}; history {}{}",
        outcome.best_epoch + 1,
        best.val_mae_units,
        outcome.network.parameter_count(),
        a.checkpoint.display(),
        history.display(),
        if outcome.truncated { "; stopped early by time budget" } else { "" }
    );
    Ok(EXIT_OK)
}

fn append_reports(path: &Path, rows: &[EvalReport]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let f = OpenOptions::new().create(true).append(true).open(path)?;
    experiment::write_reports(rows, f, fresh)
}

fn print_report(r: &EvalReport) {
    println!(
        "{} {}: MAE {:.2} ± {:.2} um, rMAE {:.4} ± {:.4}, {} parameters, {:.2} ms per sample, {} test sequences",
        r.family, r.mode, r.mae_um_mean, r.mae_um_std, r.rmae_mean, r.rmae_std, r.n_params, r.inference_ms, r.n_test
    );
}

fn eval(a: &EvalArgs) -> Outcome {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let splits = Splits::load(&a.data_dir)?;
    let opts = EvalOptions { batch_size: a.batch_size, latency_warmup: a.latency_warmup, latency_reps: a.latency_reps };
    let report = experiment::evaluate_checkpoint(&ck, &splits, &opts)?;
    print_report(&report);
    if let Some(path) = &a.report {
        append_reports(path, std::slice::from_ref(&report))?;
    }
    Ok(EXIT_OK)
}

fn gradcheck_cmd(a: &GradcheckArgs) -> Outcome {
    let opts = GradcheckOptions {
        layer_tol: a.tol,
        network_tol: a.network_tol,
        coords: a.coords,
        seed: a.seed,
        fault: a.inject_fault,
        ..GradcheckOptions::default()
    };
    println!("finite-difference step {:e} (networks {:e}), tolerance {:e} (networks {:e})", opts.step, opts.network_step, opts.layer_tol, opts.network_tol);
    let mut results = gradcheck::check_layers(&opts)?;
    if !a.layers_only {
        results.extend(gradcheck::check_networks(&opts)?);
    }
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed()).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        return Ok(EXIT_OK);
    }
    for r in &failed {
        eprintln!("gradient check failed: {} ({}) max relative error {:.3e}; {}", r.layer, r.case, r.max_rel_error, r.worst);
    }
    Ok(EXIT_NUMERIC)
}

/// Median wall time in milliseconds of `f` over `reps` runs after one warmup.
fn time_ms(reps: usize, mut f: impl FnMut() -> Result<Tensor>) -> Result<f64> {
    f()?;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        std::hint::black_box(f()?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(metrics::median(&times))
}

#[derive(Debug, serde::Serialize)]
struct BenchRow {
    kernel: String,
    volume: usize,
    frames: usize,
    channels: usize,
    median_ms: f64,
}

fn bench(a: &BenchArgs) -> Outcome {
    let mut rows = Vec::new();
    let c = a.channels;
    let frames = 5;
    let mut r = rng::stream(0, &[0xbe]);
    let mut random = |shape: &[usize]| -> Result<Tensor> {
        use rand::Rng;
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
    };
    for &v in &a.volumes {
        let x3 = random(&[1, v, v, v, c])?;
        let x4 = random(&[1, frames, v, v, v, c])?;
        let p3 = ConvParams::new(random(&[3, 3, 3, c, c])?, Tensor::zeros(&[c])?, vec![1; 3], Padding::Same)?;
        let p4 = ConvParams::new(random(&[3, 3, 3, 3, c, c])?, Tensor::zeros(&[c])?, vec![1; 4], Padding::Same)?;
        let ps = ConvParams::new(random(&[1, 3, 3, 3, c, c])?, Tensor::zeros(&[c])?, vec![1; 4], Padding::Same)?;
        let pt = ConvParams::new(random(&[3, 1, 1, 1, c, c])?, Tensor::zeros(&[c])?, vec![1; 4], Padding::Same)?;
        let row = |kernel: &str, frames: usize, ms: f64| BenchRow { kernel: kernel.into(), volume: v, frames, channels: c, median_ms: ms };
        rows.push(row("conv3d", 1, time_ms(a.reps, || ops::conv3d(&x3, &p3))?));
        rows.push(row("conv4d_full", frames, time_ms(a.reps, || ops::conv4d_full(&x4, &p4))?));
        rows.push(row("conv4d_factorized", frames, time_ms(a.reps, || ops::conv4d_factorized(&x4, &ps, &pt, FactorOrder::SpatialFirst))?));
        if let Some(family) = a.models {
            for mode in ConvMode::ALL {
                let spec = ModelSpec::new(family, mode);
                let shape = spec.input_shape(frames, [v; 3], 1);
                let net = build_model(&spec, &shape)?;
                let mut batch = vec![1];
                batch.extend(&shape);
                let x = random(&batch)?;
                let ms = metrics::measure_latency(&net, &x, 2, a.reps.max(3))?;
                rows.push(row(&format!("{family}-{mode}"), frames, ms));
            }
        }
    }
    let out: Box<dyn Write> = match &a.report {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut csv = csv::Writer::from_writer(out);
    for r in &rows {
        csv.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    csv.flush()?;
    Ok(EXIT_OK)
}

fn sweep(a: &SweepArgs) -> Outcome {
    if a.generate && !a.data_dir.join(crate::phantom::MANIFEST).exists() {
        let cfg = a.training.preset.data_config(a.training.seed);
        println!("generating {} dataset into {}", a.training.preset.label(), a.data_dir.display());
        build_dataset(&cfg)?.save(&a.data_dir)?;
    }
    let splits = Splits::load(&a.data_dir)?;
    let template = a.model.spec(Family::ResNet, ConvMode::Mode3D, 0);
    let mut opts = SweepOptions::new(template, a.training.config(0));
    opts.seeds = (a.training.seed..a.training.seed + a.seeds).collect();
    if let Some(f) = &a.family {
        opts.families = f.clone();
    }
    if let Some(m) = &a.mode {
        opts.modes = m.clone();
    }
    opts.parallel = a.parallel;
    opts.checkpoint_dir = a.checkpoint_dir.clone();
    opts.eval.latency_reps = a.latency_reps;
    let total = opts.families.len() * opts.modes.len() * opts.seeds.len();
    println!("sweep: {total} cells, {} epochs each", opts.train.epochs);
    let report_path = a.report.clone();
    let results = experiment::run_sweep(&splits, &opts, |c| {
        print_report(&c.report);
        println!("    seed {}: best epoch {} of {}, {:.0}s{}", c.report.seed, c.best_epoch, c.epochs_run, c.train_secs, if c.truncated { " (time budget hit)" } else { "" });
        if let Some(p) = &report_path {
            if let Err(e) = append_reports(p, std::slice::from_ref(&c.report)) {
                eprintln!("warning: could not append to {}: {e}", p.display());
            }
        }
    })?;
    let reports: Vec<EvalReport> = results.into_iter().map(|c| c.report).collect();
    let cells = experiment::table(&reports);
    println!("\nmedian over {} seed(s):\n{}", opts.seeds.len(), experiment::render_table(&cells));
    for v in experiment::mode_ordering(&cells, 0.10) {
        println!(
            "{:<10} 3d {:.2}  f-4d {:.2}  4d {:.2}  4d gain {:+.1}%  {}",
            v.family,
            v.mae_3d,
            v.mae_f4d,
            v.mae_4d,
            100.0 * v.gain_4d,
            if v.holds { "ordering holds" } else { "ordering does not hold" }
        );
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(run(["v4d", "--help"]), EXIT_OK);
        assert_eq!(run(["v4d", "train", "--family", "vgg"]), EXIT_INPUT);
        assert_eq!(run(["v4d"]), EXIT_INPUT);
    }

    #[test]
    fn data_overrides() {
        let cli = Cli::try_parse_from(["v4d", "generate", "--data-dir", "x", "--volume", "8", "--split", "3,2,1", "--seq-len", "3"]).unwrap();
        let Command::Generate(g) = cli.command else { panic!() };
        let c = g.data.config();
        assert_eq!(c.phantom.extent, [8; 3]);
        assert_eq!(c.split, [3, 2, 1]);
        assert_eq!(c.seq_len, 3);
        assert_eq!(c.trajectory.samples_per_spline, 200);
    }

    #[test]
    fn training_defaults_follow_preset() {
        let cli = Cli::try_parse_from(["v4d", "train", "--family", "resnet", "--mode", "4d", "--data-dir", "d", "--checkpoint", "c", "--preset", "paper-scale"]).unwrap();
        let Command::Train(t) = cli.command else { panic!() };
        let c = t.training.config(0);
        assert_eq!((c.epochs, c.batch_size), (350, 18));
    }
}
