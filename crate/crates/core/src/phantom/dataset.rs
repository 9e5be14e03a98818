//! Volume-sequence datasets: generation, mode-specific views and on-disk
//! layout (a `manifest` plus one binary file per split).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{render_volume, PhantomConfig};
use super::spline::SplinePath;
use super::trajectory::{generate_knots, TrajectoryConfig};
use crate::error::{invalid, shape_err, Error, Result};
use crate::metrics::Normalization;
use crate::ops::ConvMode;
use crate::rng;
use crate::samples::Samples;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest";
const SPLIT_MAGIC: &[u8; 4] = b"V4DS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub seq_len: usize,
    /// Sequences in the train, validation and test splits.
    pub split: [usize; 3],
    pub trajectory: TrajectoryConfig,
    pub phantom: PhantomConfig,
}

impl DataConfig {
    pub fn total(&self) -> usize {
        self.split.iter().sum()
    }

    /// Sliding windows one trajectory contributes.
    pub fn windows_per_trajectory(&self) -> usize {
        (self.trajectory.samples_per_spline + 1).saturating_sub(self.seq_len)
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        self.phantom.validate(self.trajectory.fov_mm)?;
        if self.seq_len == 0 {
            return Err(invalid!("sequence length must be at least 1"));
        }
        if self.windows_per_trajectory() == 0 {
            return Err(invalid!(
                "sequences of {} frames do not fit trajectories of {} points",
                self.seq_len,
                self.trajectory.samples_per_spline
            ));
        }
        if self.split.contains(&0) {
            return Err(invalid!("every split needs at least one sequence, got {:?}", self.split));
        }
        Ok(())
    }

    pub fn volume_shape(&self) -> [usize; 4] {
        let [d, h, w] = self.phantom.extent;
        [d, h, w, 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Val, SplitTag::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }

    fn file_name(self) -> String {
        format!("{}.bin", self.name())
    }
}

/// Rendered frames in generation order and the trajectory each came from.
#[derive(Debug, Default)]
struct FramePool {
    frames: Vec<Tensor>,
    trajectory: Vec<u32>,
}

/// One split: `T`-frame windows over a frame pool with normalized targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    tag: SplitTag,
    seq_len: usize,
    volume_shape: [usize; 4],
    pool: Arc<FramePool>,
    starts: Vec<usize>,
    targets: Vec<[f64; 3]>,
    norm: Normalization,
}

impl Dataset {
    pub fn tag(&self) -> SplitTag {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn volume_shape(&self) -> [usize; 4] {
        self.volume_shape
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    fn frames(&self, i: usize) -> &[Tensor] {
        &self.pool.frames[self.starts[i]..self.starts[i] + self.seq_len]
    }

    /// Frame `t` of sequence `i`, shape `[D, H, W, 1]`.
    pub fn frame(&self, i: usize, t: usize) -> &Tensor {
        &self.frames(i)[t]
    }

    /// Sequence `i` as `[T, D, H, W, 1]`.
    pub fn sequence(&self, i: usize) -> Tensor {
        let mut shape = vec![self.seq_len];
        shape.extend_from_slice(&self.volume_shape);
        let data = self.frames(i).iter().flat_map(|f| f.data().iter().copied()).collect();
        Tensor::from_parts(shape, data)
    }

    /// Normalized target of sequence `i`.
    pub fn target(&self, i: usize) -> [f64; 3] {
        self.targets[i]
    }

    /// Target of sequence `i` in millimetres.
    pub fn raw_target(&self, i: usize) -> [f64; 3] {
        let t = self.targets[i];
        std::array::from_fn(|a| t[a] * self.norm.scale[a] + self.norm.mean[a])
    }

    /// Trajectory index of every frame in sequence `i`.
    pub fn trajectory_ids(&self, i: usize) -> &[u32] {
        &self.pool.trajectory[self.starts[i]..self.starts[i] + self.seq_len]
    }

    /// Input view for networks of the given convolution mode.
    pub fn view(&self, mode: ConvMode) -> ModeView<'_> {
        ModeView { data: self, mode }
    }

    /// Consecutive runs of sequences drawn from one trajectory.
    fn runs(&self) -> Vec<[u32; 2]> {
        let mut runs: Vec<[u32; 2]> = Vec::new();
        for i in 0..self.len() {
            let id = self.trajectory_ids(i)[0];
            let contiguous = i > 0 && self.starts[i] == self.starts[i - 1] + 1;
            match runs.last_mut() {
                Some(r) if r[0] == id && contiguous => r[1] += 1,
                _ => runs.push([id, 1]),
            }
        }
        runs
    }

    fn write_split(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(SPLIT_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            self.sequence(i).write_record(&mut w)?;
            Tensor::from_parts(vec![3], self.targets[i].to_vec()).write_record(&mut w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A dataset split presented as network inputs for one convolution mode:
/// the last frame (3D), frames stacked on channels (3D-C) or the full
/// sequence (F-4D, 4D).
#[derive(Debug, Clone, Copy)]
pub struct ModeView<'a> {
    data: &'a Dataset,
    mode: ConvMode,
}

impl ModeView<'_> {
    pub fn dataset(&self) -> &Dataset {
        self.data
    }

    fn push_input(&self, i: usize, out: &mut Vec<f64>) {
        let frames = self.data.frames(i);
        match self.mode {
            ConvMode::Mode3D => out.extend_from_slice(frames[frames.len() - 1].data()),
            ConvMode::Mode3DC => {
                let voxels = frames[0].len();
                for v in 0..voxels {
                    out.extend(frames.iter().map(|f| f.data()[v]));
                }
            }
            ConvMode::ModeF4D | ConvMode::Mode4D => {
                for f in frames {
                    out.extend_from_slice(f.data());
                }
            }
        }
    }
}

impl Samples for ModeView<'_> {
    fn len(&self) -> usize {
        self.data.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        let [d, h, w, c] = self.data.volume_shape;
        match self.mode {
            ConvMode::Mode3D => vec![d, h, w, c],
            ConvMode::Mode3DC => vec![d, h, w, self.data.seq_len * c],
            ConvMode::ModeF4D | ConvMode::Mode4D => vec![self.data.seq_len, d, h, w, c],
        }
    }

    fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(invalid!("sample {bad} out of range for {} samples", self.len()));
        }
        let mut shape = vec![indices.len()];
        shape.extend(self.sample_shape());
        let mut inputs = Vec::with_capacity(shape.iter().product());
        let mut targets = Vec::with_capacity(indices.len() * 3);
        for &i in indices {
            self.push_input(i, &mut inputs);
            targets.extend_from_slice(&self.data.targets[i]);
        }
        Ok((Tensor::new(&shape, inputs)?, Tensor::new(&[indices.len(), 3], targets)?))
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub config: DataConfig,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn get(&self, tag: SplitTag) -> &Dataset {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Val => &self.val,
            SplitTag::Test => &self.test,
        }
    }

    pub fn normalization(&self) -> &Normalization {
        self.train.normalization()
    }

    /// Writes `manifest` and the split files into `dir`, creating it.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for tag in SplitTag::ALL {
            self.get(tag).write_split(&dir.join(tag.file_name()))?;
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            normalization: *self.normalization(),
            splits: SplitTag::ALL
                .map(|t| SplitRecord { name: t.name().into(), count: self.get(t).len(), trajectory_runs: self.get(t).runs() })
                .to_vec(),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(dir.join(MANIFEST), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        let cfg = manifest.config;
        cfg.validate()?;
        let mut loaded = Vec::new();
        for tag in SplitTag::ALL {
            let rec = manifest
                .splits
                .iter()
                .find(|s| s.name == tag.name())
                .ok_or_else(|| Error::Format(format!("manifest has no {} split", tag.name())))?;
            let path = dir.join(tag.file_name());
            loaded.push(read_split(&path, tag, &cfg, rec, manifest.normalization)?);
        }
        let [train, val, test]: [Dataset; 3] = loaded.try_into().expect("three splits");
        Ok(Self { config: cfg, train, val, test })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitRecord {
    name: String,
    count: usize,
    /// `[trajectory, sequences]` pairs in file order.
    trajectory_runs: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: DataConfig,
    normalization: Normalization,
    splits: Vec<SplitRecord>,
}

fn check_version(found: u32) -> Result<()> {
    if found > FORMAT_VERSION || found == 0 {
        return Err(Error::UnsupportedVersion { found, supported: FORMAT_VERSION });
    }
    Ok(())
}

/// Configuration and normalization stored in a dataset directory.
pub fn read_config(dir: &Path) -> Result<(DataConfig, Normalization)> {
    let m = read_manifest(dir)?;
    Ok((m.config, m.normalization))
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| invalid!("cannot read dataset manifest {}: {e}", path.display()))?;
    let version: toml::Table = toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    match version.get("format_version").and_then(|v| v.as_integer()) {
        Some(v) => check_version(v as u32)?,
        None => return Err(Error::Format(format!("{} lacks format_version", path.display()))),
    }
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn read_split(path: &Path, tag: SplitTag, cfg: &DataConfig, rec: &SplitRecord, norm: Normalization) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path).map_err(|e| invalid!("cannot open {}: {e}", path.display()))?);
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[..4] != SPLIT_MAGIC {
        return Err(Error::Format(format!("{} is not a split file", path.display())));
    }
    check_version(u32::from_le_bytes(head[4..8].try_into().unwrap()))?;
    let count = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let run_total: usize = rec.trajectory_runs.iter().map(|r| r[1] as usize).sum();
    if count != rec.count || run_total != count {
        return Err(Error::Format(format!("{}: {count} sequences, manifest says {}", path.display(), rec.count)));
    }
    let t = cfg.seq_len;
    let volume_shape = cfg.volume_shape();
    let mut seq_shape = vec![t];
    seq_shape.extend_from_slice(&volume_shape);
    let frame_len: usize = volume_shape.iter().product();

    let mut pool = FramePool::default();
    let mut starts = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for &[traj, n] in &rec.trajectory_runs {
        for k in 0..n as usize {
            let seq = Tensor::read_record(&mut r)?;
            let target = Tensor::read_record(&mut r)?;
            if seq.shape() != seq_shape.as_slice() || target.shape() != [3] {
                return Err(shape_err!("{}: sequence {:?} / target {:?}, expected {seq_shape:?} / [3]", path.display(), seq.shape(), target.shape()));
            }
            let frames = seq.data().chunks_exact(frame_len);
            if k == 0 {
                starts.push(pool.frames.len());
                for f in frames {
                    pool.frames.push(Tensor::from_parts(volume_shape.to_vec(), f.to_vec()));
                    pool.trajectory.push(traj);
                }
            } else {
                let start = *starts.last().unwrap() + 1;
                for (j, f) in frames.clone().take(t - 1).enumerate() {
                    if pool.frames[start + j].data() != f {
                        return Err(Error::Format(format!("{}: overlapping frames of sequence {} differ", path.display(), starts.len())));
                    }
                }
                let last = frames.last().unwrap();
                pool.frames.push(Tensor::from_parts(volume_shape.to_vec(), last.to_vec()));
                pool.trajectory.push(traj);
                starts.push(start);
            }
            targets.push(target.data().try_into().unwrap());
        }
    }
    Ok(Dataset { tag, seq_len: t, volume_shape, pool: Arc::new(pool), starts, targets, norm })
}

/// Generates trajectories until the requested number of sequences exists,
/// renders every needed frame and assigns consecutive sequences to the
/// train, validation and test splits in that order. Targets are the marker
/// position of each window's last frame, normalized with train statistics.
pub fn build_dataset(cfg: &DataConfig) -> Result<Splits> {
    cfg.validate()?;
    let total = cfg.total();
    let t = cfg.seq_len;
    let per_traj = cfg.windows_per_trajectory();
    let fov = cfg.trajectory.fov_mm;

    let mut pool = FramePool::default();
    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut starts = Vec::with_capacity(total);
    let mut traj = 0u32;
    while starts.len() < total {
        let windows = per_traj.min(total - starts.len());
        let knots = generate_knots(&cfg.trajectory, &mut rng::stream(cfg.trajectory.seed, &[traj as u64]))?;
        let mut points = SplinePath::fit(&knots)?.sample(cfg.trajectory.samples_per_spline)?;
        points.truncate(windows + t - 1);
        for p in &mut points {
            for a in 0..3 {
                p[a] = p[a].clamp(0.0, fov[a]);
            }
        }
        let frames: Vec<Tensor> = points
            .par_iter()
            .enumerate()
            .map(|(i, &p)| render_volume(p, fov, &cfg.phantom, &mut rng::stream(cfg.phantom.seed, &[traj as u64, i as u64])))
            .collect::<Result<_>>()?;
        let base = pool.frames.len();
        starts.extend((0..windows).map(|w| base + w));
        pool.trajectory.extend(std::iter::repeat_n(traj, frames.len()));
        pool.frames.extend(frames);
        positions.extend(points);
        traj += 1;
    }

    let raw: Vec<[f64; 3]> = starts.iter().map(|&s| positions[s + t - 1]).collect();
    let n_train = cfg.split[0];
    let norm = fit_normalization(&raw[..n_train])?;
    let pool = Arc::new(pool);
    let mut offset = 0;
    let mut make = |tag: SplitTag, n: usize| {
        let range = offset..offset + n;
        offset += n;
        Dataset {
            tag,
            seq_len: t,
            volume_shape: cfg.volume_shape(),
            pool: Arc::clone(&pool),
            starts: starts[range.clone()].to_vec(),
            targets: raw[range].iter().map(|&r| norm.normalize(r)).collect(),
            norm,
        }
    };
    let train = make(SplitTag::Train, cfg.split[0]);
    let val = make(SplitTag::Val, cfg.split[1]);
    let test = make(SplitTag::Test, cfg.split[2]);
    Ok(Splits { config: cfg.clone(), train, val, test })
}

/// Per-axis mean and population standard deviation.
pub fn fit_normalization(raw: &[[f64; 3]]) -> Result<Normalization> {
    let n = raw.len() as f64;
    let mean: [f64; 3] = std::array::from_fn(|a| raw.iter().map(|r| r[a]).sum::<f64>() / n);
    let scale: [f64; 3] = std::array::from_fn(|a| (raw.iter().map(|r| (r[a] - mean[a]).powi(2)).sum::<f64>() / n).sqrt());
    if scale.iter().any(|&s| !(s > 0.0)) {
        return Err(invalid!("training targets have zero spread on some axis: {scale:?}"));
    }
    Ok(Normalization { mean, scale })
}
