//! Central finite-difference verification of every layer's backward pass
//! and of complete small networks.
//!
//! Each check contracts the layer output with a fixed random tensor `r`,
//! giving a scalar `L = Σ r ⊙ f(x)`, and compares the analytic gradient of
//! `L` with `Σ r ⊙ (f(x + h) − f(x − h)) / 2h` on sampled coordinates.
//! Differencing the outputs before contracting keeps summation round-off
//! out of the estimate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::model::{build_model, Family, ModelSpec, Op};
use crate::ops::{self, ConvMode, ConvParams, FactorOrder, Padding};
use crate::rng;
use crate::tensor::Tensor;

/// Deliberate bugs used to confirm that the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the dense layer's bias gradient.
    DenseBiasSign,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense-bias-sign" => Ok(Fault::DenseBiasSign),
            _ => Err(invalid!("unknown fault {s:?} (expected dense-bias-sign)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub layer_tol: f64,
    pub network_tol: f64,
    pub step: f64,
    /// Step for whole networks. Their output is piecewise linear in any
    /// single scalar, so within one branch pattern a larger step adds no
    /// truncation error and keeps round-off below the tolerance.
    pub network_step: f64,
    /// Coordinates sampled per checked tensor.
    pub coords: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { layer_tol: 1e-6, network_tol: 1e-5, step: 1e-6, network_step: 1e-3, coords: 16, seed: 0, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub layer: String,
    pub case: String,
    pub max_rel_error: f64,
    pub tol: f64,
    pub checked: usize,
    /// Sampled coordinates dropped because `x ± h` straddles a kink.
    pub skipped: usize,
    /// Location and values of the worst component.
    pub worst: String,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<18} {:<40} max rel error {:.3e} (tol {:.0e}, {} coords)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.layer,
            self.case,
            self.max_rel_error,
            self.tol,
            self.checked
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn signs(t: &Tensor) -> Vec<usize> {
    t.data().iter().map(|&v| usize::from(v > 0.0)).collect()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape and length agree")
}

struct Checker<'a> {
    opts: &'a GradcheckOptions,
    rng: ChaCha8Rng,
}

impl Checker<'_> {
    /// Compares `analytic[i]` with finite differences of `f` in
    /// `inputs[i]`, for every input tensor. `f` also returns its branch
    /// pattern (ReLU signs, pooling winners); a coordinate whose two probes
    /// disagree on it is not differentiable at that step and is redrawn.
    fn compare(
        &mut self,
        layer: &str,
        case: String,
        tol: f64,
        h: f64,
        inputs: &[Tensor],
        analytic: &[Tensor],
        r: &Tensor,
        f: impl Fn(&[Tensor]) -> Result<(Tensor, Vec<usize>)>,
    ) -> Result<CheckResult> {
        let mut worst: f64 = 0.0;
        let mut at = String::new();
        let (mut checked, mut skipped) = (0, 0);
        let mut work = inputs.to_vec();
        for (i, grad) in analytic.iter().enumerate() {
            if grad.shape() != inputs[i].shape() {
                return Err(invalid!("{layer}: gradient {:?} for input {:?}", grad.shape(), inputs[i].shape()));
            }
            let n = inputs[i].len();
            let exhaustive = n <= self.opts.coords;
            let (want, attempts) = if exhaustive { (n, n) } else { (self.opts.coords, 4 * self.opts.coords) };
            let mut done = 0;
            for k in 0..attempts {
                if done == want {
                    break;
                }
                let c = if exhaustive { k } else { self.rng.gen_range(0..n) };
                let x0 = inputs[i].data()[c];
                work[i].data_mut()[c] = x0 + h;
                let (up, up_branches) = f(&work)?;
                work[i].data_mut()[c] = x0 - h;
                let (down, down_branches) = f(&work)?;
                work[i].data_mut()[c] = x0;
                if up_branches != down_branches {
                    skipped += 1;
                    continue;
                }
                let numeric = up.data().iter().zip(down.data()).zip(r.data()).map(|((u, d), w)| (u - d) * w).sum::<f64>() / (2.0 * h);
                let e = relative_error(grad.data()[c], numeric);
                if e >= worst {
                    worst = e;
                    at = format!("input {i} index {c}: analytic {:.9e}, numeric {numeric:.9e}", grad.data()[c]);
                }
                done += 1;
                checked += 1;
            }
        }
        Ok(CheckResult { layer: layer.into(), case, max_rel_error: worst, tol, checked, skipped, worst: at })
    }

    fn conv_params(&mut self, kernel: &[usize], cin: usize, cout: usize, stride: Vec<usize>, padding: Padding) -> ConvParams {
        let mut shape = kernel.to_vec();
        shape.extend([cin, cout]);
        let w = uniform(&mut self.rng, &shape, -1.0, 1.0);
        let b = uniform(&mut self.rng, &[cout], -1.0, 1.0);
        ConvParams::new(w, b, stride, padding).expect("valid test geometry")
    }

    fn conv(&mut self, four_d: bool, kernel: &[usize], stride: Vec<usize>, padding: Padding) -> Result<CheckResult> {
        let layer = if four_d { "conv4d_full" } else { "conv3d" };
        let in_shape: Vec<usize> = if four_d { vec![2, 4, 5, 4, 5, 2] } else { vec![2, 5, 4, 6, 2] };
        let x = uniform(&mut self.rng, &in_shape, -1.0, 1.0);
        let p = self.conv_params(kernel, 2, 3, stride.clone(), padding);
        let fwd = move |x: &Tensor, p: &ConvParams| if four_d { ops::conv4d_full(x, p) } else { ops::conv3d(x, p) };
        let y = fwd(&x, &p)?;
        let r = uniform(&mut self.rng, y.shape(), -1.0, 1.0);
        let g = if four_d { ops::conv4d_full_backward(&x, &p, &r)? } else { ops::conv3d_backward(&x, &p, &r)? };
        let case = format!("kernel {kernel:?} stride {stride:?} {padding:?}").to_lowercase();
        let inputs = [x, p.weight.clone(), p.bias.clone()];
        self.compare(layer, case, self.opts.layer_tol, self.opts.step, &inputs, &[g.input, g.weight, g.bias], &r, |t| {
            let q = ConvParams { weight: t[1].clone(), bias: t[2].clone(), ..p.clone() };
            Ok((fwd(&t[0], &q)?, Vec::new()))
        })
    }

    fn factorized(&mut self, order: FactorOrder, stride: [usize; 4]) -> Result<CheckResult> {
        let x = uniform(&mut self.rng, &[2, 4, 4, 5, 4, 2], -1.0, 1.0);
        let (mid_in, mid_out) = match order {
            FactorOrder::SpatialFirst => ((2, 3), (3, 2)),
            FactorOrder::TemporalFirst => ((3, 2), (2, 3)),
        };
        let spatial = self.conv_params(&[1, 3, 3, 3], mid_in.0, mid_in.1, vec![1, stride[1], stride[2], stride[3]], Padding::Same);
        let temporal = self.conv_params(&[3, 1, 1, 1], mid_out.0, mid_out.1, vec![stride[0], 1, 1, 1], Padding::Same);
        let y = ops::conv4d_factorized(&x, &spatial, &temporal, order)?;
        let r = uniform(&mut self.rng, y.shape(), -1.0, 1.0);
        let g = ops::conv4d_factorized_backward(&x, &spatial, &temporal, order, &r)?;
        let inputs = [x, spatial.weight.clone(), spatial.bias.clone(), temporal.weight.clone(), temporal.bias.clone()];
        let analytic = [g.input, g.spatial.weight, g.spatial.bias, g.temporal.weight, g.temporal.bias];
        let case = format!("{order:?} stride {stride:?}").to_lowercase();
        self.compare("conv4d_factorized", case, self.opts.layer_tol, self.opts.step, &inputs, &analytic, &r, |t| {
            let s = ConvParams { weight: t[1].clone(), bias: t[2].clone(), ..spatial.clone() };
            let q = ConvParams { weight: t[3].clone(), bias: t[4].clone(), ..temporal.clone() };
            Ok((ops::conv4d_factorized(&t[0], &s, &q, order)?, Vec::new()))
        })
    }

    fn maxpool(&mut self, shape: &[usize], window: Vec<usize>, stride: Vec<usize>, padding: Padding) -> Result<CheckResult> {
        let x = uniform(&mut self.rng, shape, -1.0, 1.0);
        let out = ops::maxpool(&x, &window, &stride, padding)?;
        let r = uniform(&mut self.rng, out.output.shape(), -1.0, 1.0);
        let g = ops::maxpool_backward(x.shape(), &out.argmax, &r)?;
        let case = format!("window {window:?} stride {stride:?} {padding:?}").to_lowercase();
        self.compare("maxpool", case, self.opts.layer_tol, self.opts.step, &[x], &[g], &r, |t| {
            let p = ops::maxpool(&t[0], &window, &stride, padding)?;
            Ok((p.output, p.argmax))
        })
    }

    fn gap(&mut self, shape: &[usize]) -> Result<CheckResult> {
        let x = uniform(&mut self.rng, shape, -1.0, 1.0);
        let y = ops::global_avg_pool(&x)?;
        let r = uniform(&mut self.rng, y.shape(), -1.0, 1.0);
        let g = ops::global_avg_pool_backward(x.shape(), &r)?;
        self.compare("global_avg_pool", format!("input {shape:?}"), self.opts.layer_tol, self.opts.step, &[x], &[g], &r, |t| Ok((ops::global_avg_pool(&t[0])?, Vec::new())))
    }

    fn dense(&mut self) -> Result<CheckResult> {
        let x = uniform(&mut self.rng, &[3, 7], -1.0, 1.0);
        let w = uniform(&mut self.rng, &[7, 4], -1.0, 1.0);
        let b = uniform(&mut self.rng, &[4], -1.0, 1.0);
        let r = uniform(&mut self.rng, &[3, 4], -1.0, 1.0);
        let mut g = ops::dense_backward(&x, &w, &r)?;
        if self.opts.fault == Some(Fault::DenseBiasSign) {
            g.bias = g.bias.map(|v| -v);
        }
        self.compare("dense_affine", "input [3, 7] outputs 4".into(), self.opts.layer_tol, self.opts.step, &[x, w, b], &[g.input, g.weight, g.bias], &r, |t| {
            Ok((ops::dense_affine(&t[0], &t[1], &t[2])?, Vec::new()))
        })
    }

    fn relu(&mut self) -> Result<CheckResult> {
        // Keep inputs away from the kink so ±h never crosses zero.
        let x = uniform(&mut self.rng, &[4, 9], 0.01, 1.0);
        let sign = uniform(&mut self.rng, &[4, 9], -1.0, 1.0);
        let x = Tensor::new(x.shape(), x.data().iter().zip(sign.data()).map(|(v, s)| v * s.signum()).collect())?;
        let r = uniform(&mut self.rng, &[4, 9], -1.0, 1.0);
        let g = ops::relu_backward(&x, &r)?;
        self.compare("relu", "input [4, 9]".into(), self.opts.layer_tol, self.opts.step, &[x], &[g], &r, |t| Ok((ops::relu(&t[0]), signs(&t[0]))))
    }

    fn channel_stack(&mut self) -> Result<CheckResult> {
        let x = uniform(&mut self.rng, &[2, 3, 2, 3, 2, 2], -1.0, 1.0);
        let y = ops::channel_stack(&x)?;
        let r = uniform(&mut self.rng, y.shape(), -1.0, 1.0);
        let g = ops::channel_unstack(&r, 3)?;
        self.compare("channel_stack", "input [2, 3, 2, 3, 2, 2]".into(), self.opts.layer_tol, self.opts.step, &[x], &[g], &r, |t| Ok((ops::channel_stack(&t[0])?, Vec::new())))
    }

    fn network(&mut self, family: Family, mode: ConvMode) -> Result<CheckResult> {
        let mut spec = ModelSpec::new(family, mode).with_seed(self.rng.gen());
        spec.stem_channels = 3;
        spec.module_channel_multipliers = vec![1];
        spec.blocks_per_module = vec![1];
        spec.cardinality = 2;
        spec.growth_rate = 2;
        let shape = spec.input_shape(3, [8; 3], 1);
        let mut net = build_model(&spec, &shape)?;
        // Variance-preserving weights keep activations and gradients of
        // order one through the depth; biases are made non-zero so every
        // bias path carries signal.
        for (_, p) in net.params_mut().iter_mut() {
            *p = if p.rank() == 1 {
                uniform(&mut self.rng, p.shape(), -0.2, 0.2)
            } else {
                let fan_in: usize = p.shape()[..p.rank() - 1].iter().product();
                let a = (6.0 / fan_in as f64).sqrt();
                uniform(&mut self.rng, p.shape(), -a, a)
            };
        }
        let mut batch = vec![2];
        batch.extend(shape);
        let x = uniform(&mut self.rng, &batch, 0.0, 1.0);
        let r = uniform(&mut self.rng, &[2, 3], -1.0, 1.0);
        let tape = net.forward_tape(&x)?;
        let grads = net.backward(&tape, &r)?;
        let names: Vec<String> = net.params().names().map(String::from).collect();
        let mut inputs = vec![x];
        let mut analytic = vec![grads.input];
        for n in &names {
            inputs.push(net.params().require(n)?.clone());
            analytic.push(grads.params.require(n)?.clone());
        }
        let case = format!("{family} {mode} on 8^3, T=3, 1 block");
        let tol = self.opts.network_tol;
        self.compare("network", case, tol, self.opts.network_step, &inputs, &analytic, &r, |t| {
            let mut probe = net.clone();
            for (n, v) in names.iter().zip(&t[1..]) {
                *probe.params_mut().get_mut(n).expect("known parameter") = v.clone();
            }
            let tape = probe.forward_tape(&t[0])?;
            let mut branches = Vec::new();
            for (i, node) in probe.nodes().iter().enumerate() {
                match node.op {
                    Op::Relu => branches.extend(signs(tape.value(node.inputs[0]))),
                    Op::MaxPool { .. } => branches.extend_from_slice(tape.argmax(i).unwrap_or_default()),
                    _ => {}
                }
            }
            Ok((tape.output().clone(), branches))
        })
    }
}

/// Runs every layer check, then one small network per family and mode.
pub fn run_suite(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    let mut out = check_layers(opts)?;
    out.extend(check_networks(opts)?);
    Ok(out)
}

pub fn check_layers(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    let mut c = Checker { opts, rng: rng::stream(opts.seed, &[0x6c]) };
    let mut out = vec![
        c.conv(false, &[3, 3, 3], vec![1, 1, 1], Padding::Same)?,
        c.conv(false, &[3, 1, 3], vec![2, 1, 2], Padding::Same)?,
        c.conv(false, &[3, 3, 3], vec![1, 1, 1], Padding::Valid)?,
        c.conv(false, &[2, 3, 2], vec![2, 1, 2], Padding::Valid)?,
        c.conv(true, &[3, 3, 3, 3], vec![1, 1, 1, 1], Padding::Same)?,
        c.conv(true, &[3, 3, 1, 3], vec![2, 2, 1, 2], Padding::Same)?,
        c.conv(true, &[3, 2, 3, 2], vec![1, 1, 1, 1], Padding::Valid)?,
        c.factorized(FactorOrder::SpatialFirst, [1, 1, 1, 1])?,
        c.factorized(FactorOrder::SpatialFirst, [2, 2, 2, 2])?,
        c.factorized(FactorOrder::TemporalFirst, [2, 1, 2, 1])?,
        c.maxpool(&[2, 5, 4, 6, 2], vec![1, 2, 2, 2, 1], vec![1, 2, 2, 2, 1], Padding::Valid)?,
        c.maxpool(&[2, 5, 4, 6, 2], vec![1, 3, 3, 3, 1], vec![1, 2, 2, 2, 1], Padding::Same)?,
        c.maxpool(&[1, 3, 4, 4, 4, 2], vec![1, 1, 3, 3, 3, 1], vec![1, 1, 1, 1, 1, 1], Padding::Same)?,
        c.gap(&[2, 3, 4, 5, 3])?,
        c.gap(&[2, 2, 3, 4, 5, 3])?,
    ];
    out.push(c.dense()?);
    out.push(c.relu()?);
    out.push(c.channel_stack()?);
    Ok(out)
}

pub fn check_networks(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    let mut c = Checker { opts, rng: rng::stream(opts.seed, &[0x6e]) };
    let mut out = Vec::new();
    for family in Family::ALL {
        for mode in ConvMode::ALL {
            out.push(c.network(family, mode)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes() {
        let results = check_layers(&GradcheckOptions::default()).unwrap();
        for r in &results {
            assert!(r.passed(), "{r}");
        }
        for layer in ["conv3d", "conv4d_full", "conv4d_factorized", "maxpool", "global_avg_pool", "dense_affine", "relu", "channel_stack"] {
            assert!(results.iter().any(|r| r.layer == layer), "{layer} not covered");
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        let opts = GradcheckOptions { fault: Some(Fault::DenseBiasSign), ..GradcheckOptions::default() };
        let failed: Vec<_> = check_layers(&opts).unwrap().into_iter().filter(|r| !r.passed()).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].layer, "dense_affine");
        assert!("flip".parse::<Fault>().is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 2e-9) - 0.1).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
