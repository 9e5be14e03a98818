//! Position-error metrics, evaluation reports and inference latency.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::model::Network;
use crate::samples::Samples;
use crate::tensor::Tensor;

/// Millimetres to micrometres.
pub const UM_PER_MM: f64 = 1000.0;

/// Affine map between normalized targets and raw positions (mm):
/// `raw = normalized · scale + mean`. `scale` is the per-axis standard
/// deviation of the raw training targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub scale: [f64; 3],
}

impl Normalization {
    pub fn identity() -> Self {
        Self { mean: [0.0; 3], scale: [1.0; 3] }
    }

    pub fn normalize(&self, raw: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (raw[a] - self.mean[a]) / self.scale[a])
    }

    pub fn denormalize(&self, t: &Tensor) -> Result<Tensor> {
        check_targets(t)?;
        let data = t.data().chunks_exact(3).flat_map(|r| (0..3).map(move |a| r[a] * self.scale[a] + self.mean[a])).collect();
        Tensor::new(t.shape(), data)
    }
}

/// Micrometres per normalized target unit, per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub um_per_unit: [f64; 3],
}

impl Calibration {
    pub fn new(um_per_unit: [f64; 3]) -> Result<Self> {
        if um_per_unit.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(invalid!("calibration scales must be positive, got {um_per_unit:?}"));
        }
        Ok(Self { um_per_unit })
    }

    /// Calibration for targets normalized from millimetre positions.
    pub fn from_normalization(n: &Normalization) -> Result<Self> {
        Self::new(n.scale.map(|s| s * UM_PER_MM))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

fn check_targets(t: &Tensor) -> Result<()> {
    if t.rank() != 2 || t.shape()[1] != 3 {
        return Err(shape_err!("expected [N, 3] positions, got {:?}", t.shape()));
    }
    Ok(())
}

fn check_pair(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(shape_err!("prediction {:?} and target {:?} differ", pred.shape(), target.shape()));
    }
    check_targets(pred)
}

fn per_sample(pred: &Tensor, target: &Tensor, weight: [f64; 3]) -> Vec<f64> {
    pred.data()
        .chunks_exact(3)
        .zip(target.data().chunks_exact(3))
        .map(|(p, t)| (0..3).map(|a| (p[a] - t[a]).abs() * weight[a]).sum::<f64>() / 3.0)
        .collect()
}

/// Mean absolute position error in µm: per sample the calibrated absolute
/// error is averaged over the three axes, then mean ± std over samples.
pub fn mae(pred: &Tensor, target: &Tensor, cal: &Calibration) -> Result<MeanStd> {
    check_pair(pred, target)?;
    Ok(MeanStd::of(&per_sample(pred, target, cal.um_per_unit)))
}

/// Absolute error relative to the per-axis target standard deviation.
pub fn rmae(pred: &Tensor, target: &Tensor, target_std: [f64; 3]) -> Result<MeanStd> {
    check_pair(pred, target)?;
    if target_std.iter().any(|&s| !(s > 0.0)) {
        return Err(invalid!("target standard deviation must be positive, got {target_std:?}"));
    }
    Ok(MeanStd::of(&per_sample(pred, target, target_std.map(|s| 1.0 / s))))
}

/// Middle element after sorting (upper middle for even counts).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Predictions `[N, 3]` for every sample, in index order.
pub fn predict(net: &Network, samples: &dyn Samples, batch_size: usize) -> Result<(Tensor, Tensor)> {
    let n = samples.len();
    if n == 0 {
        return Err(invalid!("no samples to predict"));
    }
    let mut preds = Vec::with_capacity(n * 3);
    let mut targets = Vec::with_capacity(n * 3);
    let indices: Vec<usize> = (0..n).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, y) = samples.batch(chunk)?;
        preds.extend_from_slice(net.forward(&x)?.data());
        targets.extend_from_slice(y.data());
    }
    Ok((Tensor::new(&[n, 3], preds)?, Tensor::new(&[n, 3], targets)?))
}

/// Median single-sample forward time in milliseconds.
pub fn measure_latency(net: &Network, sample: &Tensor, warmup: usize, reps: usize) -> Result<f64> {
    if reps < 3 {
        return Err(invalid!("latency needs at least 3 repetitions, got {reps}"));
    }
    let mut batch_shape = vec![1];
    batch_shape.extend_from_slice(net.input_shape());
    let x = sample.reshape(&batch_shape)?;
    for _ in 0..warmup {
        net.forward(&x)?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        std::hint::black_box(net.forward(&x)?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(median(&times))
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub batch_size: usize,
    pub latency_warmup: usize,
    /// Zero skips the latency measurement.
    pub latency_reps: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { batch_size: 18, latency_warmup: 5, latency_reps: 31 }
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub family: String,
    pub mode: String,
    pub seed: u64,
    pub n_test: usize,
    pub mae_um_mean: f64,
    pub mae_um_std: f64,
    pub rmae_mean: f64,
    pub rmae_std: f64,
    pub n_params: usize,
    pub inference_ms: f64,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("report fields are plain values")
    }

    pub fn mae(&self) -> MeanStd {
        MeanStd { mean: self.mae_um_mean, std: self.mae_um_std }
    }
}

/// Evaluates `net` on normalized samples; errors are reported in µm and
/// relative to the raw target standard deviation recorded in `norm`.
pub fn evaluate(net: &Network, test: &dyn Samples, norm: &Normalization, opts: &EvalOptions) -> Result<EvalReport> {
    if test.sample_shape() != net.input_shape() {
        return Err(shape_err!("test samples {:?} do not match network input {:?}", test.sample_shape(), net.input_shape()));
    }
    let (pred, target) = predict(net, test, opts.batch_size)?;
    let cal = Calibration::from_normalization(norm)?;
    let mae = mae(&pred, &target, &cal)?;
    let rmae = rmae(&norm.denormalize(&pred)?, &norm.denormalize(&target)?, norm.scale)?;
    let inference_ms = if opts.latency_reps == 0 {
        f64::NAN
    } else {
        let (x, _) = test.batch(&[0])?;
        measure_latency(net, &x, opts.latency_warmup, opts.latency_reps)?
    };
    let (family, mode, seed) = match net.spec() {
        Some(s) => (s.family.to_string(), s.mode.to_string(), s.seed),
        None => ("custom".into(), "custom".into(), 0),
    };
    Ok(EvalReport {
        family,
        mode,
        seed,
        n_test: test.len(),
        mae_um_mean: mae.mean,
        mae_um_std: mae.std,
        rmae_mean: rmae.mean,
        rmae_std: rmae.std,
        n_params: net.parameter_count(),
        inference_ms,
    })
}
