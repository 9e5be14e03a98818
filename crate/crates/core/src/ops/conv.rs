//! Spatial and spatio-temporal convolutions on channel-last tensors.
//!
//! Every convolution is lowered frame by frame: a 3D volume is unrolled into
//! a patch matrix (im2col) and multiplied with the kernel. The full 4D
//! convolution is the sum of such 3D convolutions over time-shifted input
//! frames, one kernel time slice per shift. The factorized variant chains a
//! spatial-only and a temporal-only 4D convolution.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, Layout};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding of `(k - 1) / 2` on both sides; output extent `ceil(n / stride)`.
    Same,
    /// No padding; output extent `(n - k) / stride + 1`.
    Valid,
}

/// Kernel, bias and geometry of one convolution.
///
/// The weight is `[kD, kH, kW, Cin, Cout]` for 3D convolutions and
/// `[kT, kD, kH, kW, Cin, Cout]` for 4D ones; `stride` has one entry per
/// kernel axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: Vec<usize>,
    pub padding: Padding,
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Tensor, stride: Vec<usize>, padding: Padding) -> Result<Self> {
        let p = Self { weight, bias, stride, padding };
        p.validate()?;
        Ok(p)
    }

    /// Zero bias, unit stride.
    pub fn unbiased(weight: Tensor, padding: Padding) -> Result<Self> {
        let kernel_axes = weight.rank().saturating_sub(2);
        let cout = *weight.shape().last().unwrap();
        Self::new(weight, Tensor::zeros(&[cout])?, vec![1; kernel_axes], padding)
    }

    pub fn kernel(&self) -> &[usize] {
        &self.weight.shape()[..self.weight.rank() - 2]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[self.weight.rank() - 2]
    }

    pub fn out_channels(&self) -> usize {
        *self.weight.shape().last().unwrap()
    }

    fn validate(&self) -> Result<()> {
        let rank = self.weight.rank();
        if !(rank == 5 || rank == 6) {
            return Err(shape_err!("conv weight must have rank 5 or 6, got {:?}", self.weight.shape()));
        }
        if self.bias.shape() != [self.out_channels()] {
            return Err(shape_err!(
                "bias shape {:?} does not match {} output channels",
                self.bias.shape(),
                self.out_channels()
            ));
        }
        if self.stride.len() != rank - 2 {
            return Err(shape_err!("{} strides for a kernel of rank {}", self.stride.len(), rank - 2));
        }
        if self.stride.contains(&0) {
            return Err(invalid!("stride must be positive, got {:?}", self.stride));
        }
        if self.padding == Padding::Same {
            if let Some(k) = self.kernel().iter().find(|&&k| k % 2 == 0) {
                return Err(invalid!("\"same\" padding needs odd kernel extents, got {k}"));
            }
        }
        Ok(())
    }
}

/// Gradients of one convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Which stage of a factorized convolution runs first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorOrder {
    #[default]
    SpatialFirst,
    TemporalFirst,
}

#[derive(Debug, Clone)]
pub struct FactorizedGrads {
    pub input: Tensor,
    pub spatial: ConvGrads,
    pub temporal: ConvGrads,
}

#[derive(Debug, Clone, Copy)]
struct AxisGeom {
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    output: usize,
}

impl AxisGeom {
    fn new(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Self> {
        let (pad, output) = match padding {
            Padding::Same => ((kernel - 1) / 2, input.div_ceil(stride)),
            Padding::Valid => {
                if kernel > input {
                    return Err(shape_err!("kernel extent {kernel} larger than input extent {input}"));
                }
                (0, (input - kernel) / stride + 1)
            }
        };
        Ok(Self { input, kernel, stride, pad, output })
    }

    fn unit() -> Self {
        Self { input: 1, kernel: 1, stride: 1, pad: 0, output: 1 }
    }

    /// Input coordinate read by output `o` at kernel tap `k`, if in range.
    #[inline]
    fn source(&self, o: usize, k: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(self.pad).filter(|&i| i < self.input)
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    time: AxisGeom,
    space: [AxisGeom; 3],
    cin: usize,
    cout: usize,
}

impl Geometry {
    fn frame_in(&self) -> usize {
        self.space.iter().map(|a| a.input).product::<usize>() * self.cin
    }

    fn positions(&self) -> usize {
        self.space.iter().map(|a| a.output).product()
    }

    fn patch(&self) -> usize {
        self.space.iter().map(|a| a.kernel).product::<usize>() * self.cin
    }

    fn sample_in(&self) -> usize {
        self.time.input * self.frame_in()
    }

    fn sample_out(&self) -> usize {
        self.time.output * self.positions() * self.cout
    }

    fn pointwise(&self) -> bool {
        self.space.iter().all(|a| a.kernel == 1 && a.stride == 1 && a.pad == 0)
    }

    fn kernel_slice(&self) -> usize {
        self.patch() * self.cout
    }
}

fn geometry(input: &Tensor, p: &ConvParams, temporal: bool) -> Result<Geometry> {
    let (want_in, want_w) = if temporal { (6, 6) } else { (5, 5) };
    if input.rank() != want_in {
        return Err(shape_err!("convolution input must have rank {want_in}, got {:?}", input.shape()));
    }
    if p.weight.rank() != want_w {
        return Err(shape_err!("kernel rank mismatch: expected weight rank {want_w}, got {:?}", p.weight.shape()));
    }
    let cin = *input.shape().last().unwrap();
    if cin != p.in_channels() {
        return Err(shape_err!("channel mismatch: input has {cin}, kernel expects {}", p.in_channels()));
    }
    let k = p.kernel();
    let s = &p.stride;
    let ins = input.shape();
    let time = if temporal {
        if s[0] > ins[1] {
            return Err(invalid!("temporal stride {} exceeds sequence length {}", s[0], ins[1]));
        }
        AxisGeom::new(ins[1], k[0], s[0], p.padding)?
    } else {
        AxisGeom::unit()
    };
    let off = usize::from(temporal);
    let space = [
        AxisGeom::new(ins[1 + off], k[off], s[off], p.padding)?,
        AxisGeom::new(ins[2 + off], k[1 + off], s[1 + off], p.padding)?,
        AxisGeom::new(ins[3 + off], k[2 + off], s[2 + off], p.padding)?,
    ];
    Ok(Geometry { time, space, cin, cout: p.out_channels() })
}

fn output_shape(batch: usize, g: &Geometry, temporal: bool) -> Vec<usize> {
    let mut shape = vec![batch];
    if temporal {
        shape.push(g.time.output);
    }
    shape.extend(g.space.iter().map(|a| a.output));
    shape.push(g.cout);
    shape
}

/// Unrolls one input frame into a `positions × patch` matrix.
fn im2col(frame: &[f64], g: &Geometry, cols: &mut [f64]) {
    let [ad, ah, aw] = g.space;
    let c = g.cin;
    let patch = g.patch();
    let mut row = 0;
    for od in 0..ad.output {
        for oh in 0..ah.output {
            for ow in 0..aw.output {
                let dst = &mut cols[row * patch..(row + 1) * patch];
                let mut col = 0;
                for kd in 0..ad.kernel {
                    let id = ad.source(od, kd);
                    for kh in 0..ah.kernel {
                        let ih = ah.source(oh, kh);
                        for kw in 0..aw.kernel {
                            let iw = aw.source(ow, kw);
                            let cell = &mut dst[col..col + c];
                            match (id, ih, iw) {
                                (Some(d), Some(h), Some(w)) => {
                                    let src = ((d * ah.input + h) * aw.input + w) * c;
                                    cell.copy_from_slice(&frame[src..src + c]);
                                }
                                _ => cell.fill(0.0),
                            }
                            col += c;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds a patch-matrix gradient back onto a frame gradient.
fn col2im(cols: &[f64], g: &Geometry, frame: &mut [f64]) {
    let [ad, ah, aw] = g.space;
    let c = g.cin;
    let patch = g.patch();
    let mut row = 0;
    for od in 0..ad.output {
        for oh in 0..ah.output {
            for ow in 0..aw.output {
                let src = &cols[row * patch..(row + 1) * patch];
                let mut col = 0;
                for kd in 0..ad.kernel {
                    let id = ad.source(od, kd);
                    for kh in 0..ah.kernel {
                        let ih = ah.source(oh, kh);
                        for kw in 0..aw.kernel {
                            let iw = aw.source(ow, kw);
                            if let (Some(d), Some(h), Some(w)) = (id, ih, iw) {
                                let dst = ((d * ah.input + h) * aw.input + w) * c;
                                for (x, y) in frame[dst..dst + c].iter_mut().zip(&src[col..col + c]) {
                                    *x += y;
                                }
                            }
                            col += c;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn lower_frames<'a>(sample: &'a [f64], g: &Geometry) -> Vec<Cow<'a, [f64]>> {
    let frame_in = g.frame_in();
    sample
        .chunks_exact(frame_in)
        .map(|frame| {
            if g.pointwise() {
                Cow::Borrowed(frame)
            } else {
                let mut cols = vec![0.0; g.positions() * g.patch()];
                im2col(frame, g, &mut cols);
                Cow::Owned(cols)
            }
        })
        .collect()
}

fn forward_sample(sample: &[f64], weight: &[f64], bias: &[f64], g: &Geometry, out: &mut [f64]) {
    let frames = lower_frames(sample, g);
    let (p, k, cout) = (g.positions(), g.patch(), g.cout);
    let slice = g.kernel_slice();
    for (to, out_frame) in out.chunks_exact_mut(p * cout).enumerate() {
        for row in out_frame.chunks_exact_mut(cout) {
            row.copy_from_slice(bias);
        }
        for kt in 0..g.time.kernel {
            let Some(ti) = g.time.source(to, kt) else { continue };
            gemm(
                &frames[ti],
                Layout::row_major(p, k),
                &weight[kt * slice..(kt + 1) * slice],
                Layout::row_major(k, cout),
                1.0,
                out_frame,
                Layout::row_major(p, cout),
            );
        }
    }
}

struct SampleGrads {
    input: Vec<f64>,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

fn backward_sample(sample: &[f64], weight: &[f64], g: &Geometry, grad_out: &[f64]) -> SampleGrads {
    let frames = lower_frames(sample, g);
    let (p, k, cout) = (g.positions(), g.patch(), g.cout);
    let slice = g.kernel_slice();
    let mut dweight = vec![0.0; weight.len()];
    let mut dbias = vec![0.0; cout];
    let mut dcols: Vec<Option<Vec<f64>>> = vec![None; g.time.input];

    for (to, dout) in grad_out.chunks_exact(p * cout).enumerate() {
        for row in dout.chunks_exact(cout) {
            for (b, d) in dbias.iter_mut().zip(row) {
                *b += d;
            }
        }
        for kt in 0..g.time.kernel {
            let Some(ti) = g.time.source(to, kt) else { continue };
            gemm(
                &frames[ti],
                Layout::transposed(p, k),
                dout,
                Layout::row_major(p, cout),
                1.0,
                &mut dweight[kt * slice..(kt + 1) * slice],
                Layout::row_major(k, cout),
            );
            let dc = dcols[ti].get_or_insert_with(|| vec![0.0; p * k]);
            gemm(
                dout,
                Layout::row_major(p, cout),
                &weight[kt * slice..(kt + 1) * slice],
                Layout::transposed(k, cout),
                1.0,
                dc,
                Layout::row_major(p, k),
            );
        }
    }

    let frame_in = g.frame_in();
    let mut dinput = vec![0.0; g.sample_in()];
    for (ti, dc) in dcols.into_iter().enumerate() {
        let Some(dc) = dc else { continue };
        let dst = &mut dinput[ti * frame_in..(ti + 1) * frame_in];
        if g.pointwise() {
            dst.copy_from_slice(&dc);
        } else {
            col2im(&dc, g, dst);
        }
    }
    SampleGrads { input: dinput, weight: dweight, bias: dbias }
}

fn run_forward(input: &Tensor, p: &ConvParams, temporal: bool) -> Result<Tensor> {
    let g = geometry(input, p, temporal)?;
    let batch = input.shape()[0];
    let mut out = vec![0.0; batch * g.sample_out()];
    out.par_chunks_mut(g.sample_out())
        .zip(input.data().par_chunks(g.sample_in()))
        .for_each(|(o, x)| forward_sample(x, p.weight.data(), p.bias.data(), &g, o));
    Ok(Tensor::from_parts(output_shape(batch, &g, temporal), out))
}

fn run_backward(input: &Tensor, p: &ConvParams, grad_out: &Tensor, temporal: bool) -> Result<ConvGrads> {
    let g = geometry(input, p, temporal)?;
    let batch = input.shape()[0];
    let expect = output_shape(batch, &g, temporal);
    if grad_out.shape() != expect.as_slice() {
        return Err(shape_err!("upstream gradient {:?} does not match output {:?}", grad_out.shape(), expect));
    }
    let per_sample: Vec<SampleGrads> = input
        .data()
        .par_chunks(g.sample_in())
        .zip(grad_out.data().par_chunks(g.sample_out()))
        .map(|(x, d)| backward_sample(x, p.weight.data(), &g, d))
        .collect();

    // Reduce in sample order so results do not depend on scheduling.
    let mut dinput = Vec::with_capacity(input.len());
    let mut dweight = vec![0.0; p.weight.len()];
    let mut dbias = vec![0.0; g.cout];
    for s in per_sample {
        dinput.extend_from_slice(&s.input);
        for (a, b) in dweight.iter_mut().zip(&s.weight) {
            *a += b;
        }
        for (a, b) in dbias.iter_mut().zip(&s.bias) {
            *a += b;
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_parts(input.shape().to_vec(), dinput),
        weight: Tensor::from_parts(p.weight.shape().to_vec(), dweight),
        bias: Tensor::from_parts(vec![g.cout], dbias),
    })
}

/// 3D convolution of `[N, D, H, W, Cin]` with a `[kD, kH, kW, Cin, Cout]` kernel.
pub fn conv3d(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    run_forward(input, p, false)
}

pub fn conv3d_backward(input: &Tensor, p: &ConvParams, grad_out: &Tensor) -> Result<ConvGrads> {
    run_backward(input, p, grad_out, false)
}

/// Full 4D convolution of `[N, T, D, H, W, Cin]` with a
/// `[kT, kD, kH, kW, Cin, Cout]` kernel.
///
/// Output frame `t'` is the bias plus, for every temporal tap `kt`, the 3D
/// convolution of input frame `t'·stride + kt − pad` with kernel slice `kt`.
/// Frames shifted outside the sequence contribute nothing (zero padding).
pub fn conv4d_full(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    run_forward(input, p, true)
}

pub fn conv4d_full_backward(input: &Tensor, p: &ConvParams, grad_out: &Tensor) -> Result<ConvGrads> {
    run_backward(input, p, grad_out, true)
}

fn check_factors(spatial: &ConvParams, temporal: &ConvParams) -> Result<()> {
    if spatial.weight.rank() != 6 || spatial.kernel()[0] != 1 {
        return Err(shape_err!("spatial factor must be a [1, kD, kH, kW, Cin, Cout] kernel, got {:?}", spatial.weight.shape()));
    }
    if temporal.weight.rank() != 6 || temporal.kernel()[1..] != [1, 1, 1] {
        return Err(shape_err!("temporal factor must be a [kT, 1, 1, 1, Cin, Cout] kernel, got {:?}", temporal.weight.shape()));
    }
    Ok(())
}

fn stages<'a>(spatial: &'a ConvParams, temporal: &'a ConvParams, order: FactorOrder) -> (&'a ConvParams, &'a ConvParams) {
    match order {
        FactorOrder::SpatialFirst => (spatial, temporal),
        FactorOrder::TemporalFirst => (temporal, spatial),
    }
}

/// Factorized 4D convolution: a spatial-only stage and a temporal-only
/// stage applied in succession.
pub fn conv4d_factorized(input: &Tensor, spatial: &ConvParams, temporal: &ConvParams, order: FactorOrder) -> Result<Tensor> {
    check_factors(spatial, temporal)?;
    let (first, second) = stages(spatial, temporal, order);
    let mid = conv4d_full(input, first)?;
    conv4d_full(&mid, second)
}

pub fn conv4d_factorized_backward(
    input: &Tensor,
    spatial: &ConvParams,
    temporal: &ConvParams,
    order: FactorOrder,
    grad_out: &Tensor,
) -> Result<FactorizedGrads> {
    check_factors(spatial, temporal)?;
    let (first, second) = stages(spatial, temporal, order);
    let mid = conv4d_full(input, first)?;
    let g2 = conv4d_full_backward(&mid, second, grad_out)?;
    let g1 = conv4d_full_backward(input, first, &g2.input)?;
    let input_grad = g1.input.clone();
    let (spatial, temporal) = match order {
        FactorOrder::SpatialFirst => (g1, g2),
        FactorOrder::TemporalFirst => (g2, g1),
    };
    Ok(FactorizedGrads { input: input_grad, spatial, temporal })
}
