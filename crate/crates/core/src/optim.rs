//! MSE loss, Adam and the epoch-driven training loop.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Error, Result};
use crate::metrics::{self, Calibration, Normalization};
use crate::model::{Network, ParameterStore};
use crate::rng;
use crate::samples::Samples;
use crate::tensor::Tensor;

/// Mean of squared residuals over all entries, and its gradient.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(shape_err!("prediction {:?} and target {:?} differ", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.data().iter().zip(target.data()) {
        let r = p - t;
        loss += r * r;
        grad.push(2.0 * r / n);
    }
    Ok((loss / n, Tensor::new(pred.shape(), grad)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates mirroring the parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: ParameterStore,
    pub second: ParameterStore,
}

impl AdamState {
    pub fn new(params: &ParameterStore, config: AdamConfig) -> Result<Self> {
        let mut zeros = ParameterStore::new();
        for (name, t) in params {
            zeros.insert(name.clone(), Tensor::zeros(t.shape())?);
        }
        Ok(Self { config, step: 0, first: zeros.clone(), second: zeros })
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ParameterStore, grads: &ParameterStore, state: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() {
        return Err(invalid!("{} gradients for {} parameters", grads.len(), params.len()));
    }
    if let Some(extra) = grads.names().find(|n| !params.contains(n)) {
        return Err(invalid!("gradient for unknown parameter {extra:?}"));
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let g = grads.require(name)?;
        if g.shape() != p.shape() {
            return Err(shape_err!("gradient {:?} for parameter {name} of shape {:?}", g.shape(), p.shape()));
        }
        let m = state.first.get_mut(name).ok_or_else(|| invalid!("no Adam state for {name}"))?;
        let v = state.second.get_mut(name).ok_or_else(|| invalid!("no Adam state for {name}"))?;
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(with = "crate::rng::seed_format")]
    pub seed: u64,
    pub shuffle: bool,
    /// Progress callback interval in epochs; zero disables reporting.
    pub report_every: usize,
    /// Stop after the epoch during which this wall-clock budget ran out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 350, batch_size: 18, lr: 1e-4, seed: 0, shuffle: true, report_every: 1, time_budget_secs: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid!("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch size must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(invalid!("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mae_units: f64,
    pub val_rmae: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Network carrying the parameters of the best validation epoch.
    pub network: Network,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub optimizer: AdamState,
    pub steps: u64,
    /// True when the time budget stopped training early.
    pub truncated: bool,
}

pub fn write_history<W: Write>(history: &[EpochRecord], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for rec in history {
        csv.serialize(rec).map_err(|e| Error::Io(e.into()))?;
    }
    csv.flush()?;
    Ok(())
}

/// Trains with Adam on mini-batches of the MSE loss and keeps the parameters
/// of the epoch with the lowest validation MAE. Validation errors are
/// reported in µm through `norm` (targets normalized from millimetres).
pub fn fit(
    mut net: Network,
    train: &dyn Samples,
    val: &dyn Samples,
    cfg: &TrainConfig,
    norm: &Normalization,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(invalid!("training and validation sets must be non-empty"));
    }
    for (name, set) in [("training", train), ("validation", val)] {
        if set.sample_shape() != net.input_shape() {
            return Err(shape_err!("{name} samples {:?} do not match network input {:?}", set.sample_shape(), net.input_shape()));
        }
    }
    let cal = Calibration::from_normalization(norm)?;
    let mut state = AdamState::new(net.params(), cfg.adam())?;
    let mut shuffle_rng = rng::stream(cfg.seed, &[0x5f1e]);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParameterStore)> = None;
    let started = Instant::now();
    let budget = cfg.time_budget_secs.map(Duration::from_secs_f64);
    let mut truncated = false;

    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = train.batch(chunk)?;
            let tape = net.forward_tape(&x)?;
            let (loss, grad) = mse_loss(tape.output(), &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { epoch, batch });
            }
            let grads = net.backward(&tape, &grad)?;
            drop(tape);
            adam_step(net.params_mut(), &grads.params, &mut state)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let (pred, target) = metrics::predict(&net, val, cfg.batch_size)?;
        let val_mae = metrics::mae(&pred, &target, &cal)?;
        let val_rmae = metrics::rmae(&norm.denormalize(&pred)?, &norm.denormalize(&target)?, norm.scale)?;
        let rec = EpochRecord {
            epoch,
            train_mse: loss_sum / train.len() as f64,
            val_mae_units: val_mae.mean,
            val_rmae: val_rmae.mean,
            wall_ms: epoch_start.elapsed().as_secs_f64() * 1e3,
        };
        if !rec.val_mae_units.is_finite() {
            return Err(Error::NonFinite { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        if best.as_ref().is_none_or(|(b, _, _)| rec.val_mae_units < *b) {
            best = Some((rec.val_mae_units, epoch, net.params().clone()));
        }
        if cfg.report_every > 0 && (epoch + 1) % cfg.report_every == 0 {
            on_epoch(&rec);
        }
        history.push(rec);
        if budget.is_some_and(|b| started.elapsed() >= b) && epoch + 1 < cfg.epochs {
            truncated = true;
            break;
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    net.load_params(params)?;
    Ok(TrainOutcome { network: net, history, best_epoch, steps: state.step, optimizer: state, truncated })
}
