//! Brute-force reference implementations used only by tests.
//!
//! Nothing here shares code with the kernels under test: convolutions are
//! literal nested loops over the defining sum, and random data comes from
//! a self-contained LCG rather than the crate's RNG plumbing.

#![allow(dead_code)]

use v4d::ops::{ConvParams, Padding};
use v4d::tensor::Tensor;

/// Numerical Recipes LCG; deterministic and dependency free.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0
    }

    /// Uniform in [-1, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() >> 33) % n as u64) as usize
    }
}

pub fn random_tensor(rng: &mut Lcg, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform()).collect()).unwrap()
}

fn out_extent(input: usize, k: usize, s: usize, padding: Padding) -> (usize, i64) {
    match padding {
        Padding::Same => ((input + s - 1) / s, ((k - 1) / 2) as i64),
        Padding::Valid => ((input - k) / s + 1, 0),
    }
}

fn at(t: &Tensor, idx: &[usize]) -> f64 {
    t.get(idx).unwrap()
}

/// Direct-summation 3D convolution over `[N, D, H, W, C]`.
pub fn conv3d_direct(x: &Tensor, p: &ConvParams) -> Tensor {
    let xs = x.shape();
    let ws = p.weight.shape();
    let (n, cin, cout) = (xs[0], xs[4], ws[4]);
    let mut dims = [(0usize, 0i64); 3];
    for a in 0..3 {
        dims[a] = out_extent(xs[1 + a], ws[a], p.stride[a], p.padding);
    }
    let out_shape = [n, dims[0].0, dims[1].0, dims[2].0, cout];
    let mut out = Vec::new();
    for b in 0..n {
        for od in 0..dims[0].0 {
            for oh in 0..dims[1].0 {
                for ow in 0..dims[2].0 {
                    for co in 0..cout {
                        let mut acc = at(&p.bias, &[co]);
                        for kd in 0..ws[0] {
                            for kh in 0..ws[1] {
                                for kw in 0..ws[2] {
                                    let id = (od * p.stride[0] + kd) as i64 - dims[0].1;
                                    let ih = (oh * p.stride[1] + kh) as i64 - dims[1].1;
                                    let iw = (ow * p.stride[2] + kw) as i64 - dims[2].1;
                                    if id < 0 || ih < 0 || iw < 0 || id >= xs[1] as i64 || ih >= xs[2] as i64 || iw >= xs[3] as i64 {
                                        continue;
                                    }
                                    for ci in 0..cin {
                                        acc += at(x, &[b, id as usize, ih as usize, iw as usize, ci])
                                            * at(&p.weight, &[kd, kh, kw, ci, co]);
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
    }
    Tensor::new(&out_shape, out).unwrap()
}

/// Direct-summation 4D convolution over `[N, T, D, H, W, C]`.
pub fn conv4d_direct(x: &Tensor, p: &ConvParams) -> Tensor {
    let xs = x.shape();
    let ws = p.weight.shape();
    let (n, cin, cout) = (xs[0], xs[5], ws[5]);
    let mut dims = [(0usize, 0i64); 4];
    for a in 0..4 {
        dims[a] = out_extent(xs[1 + a], ws[a], p.stride[a], p.padding);
    }
    let out_shape = [n, dims[0].0, dims[1].0, dims[2].0, dims[3].0, cout];
    let mut out = Vec::new();
    for b in 0..n {
        for ot in 0..dims[0].0 {
            for od in 0..dims[1].0 {
                for oh in 0..dims[2].0 {
                    for ow in 0..dims[3].0 {
                        for co in 0..cout {
                            let mut acc = at(&p.bias, &[co]);
                            for kt in 0..ws[0] {
                                for kd in 0..ws[1] {
                                    for kh in 0..ws[2] {
                                        for kw in 0..ws[3] {
                                            let o = [ot, od, oh, ow];
                                            let k = [kt, kd, kh, kw];
                                            let mut idx = [0usize; 4];
                                            let mut inside = true;
                                            for a in 0..4 {
                                                let i = (o[a] * p.stride[a] + k[a]) as i64 - dims[a].1;
                                                if i < 0 || i >= xs[1 + a] as i64 {
                                                    inside = false;
                                                    break;
                                                }
                                                idx[a] = i as usize;
                                            }
                                            if !inside {
                                                continue;
                                            }
                                            for ci in 0..cin {
                                                acc += at(x, &[b, idx[0], idx[1], idx[2], idx[3], ci])
                                                    * at(&p.weight, &[kt, kd, kh, kw, ci, co]);
                                            }
                                        }
                                    }
                                }
                            }
                            out.push(acc);
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&out_shape, out).unwrap()
}

/// Direct max pooling with out-of-range window cells ignored.
pub fn maxpool_direct(x: &Tensor, window: &[usize], stride: &[usize], padding: Padding) -> Tensor {
    let xs = x.shape();
    let rank = xs.len();
    let geo: Vec<(usize, i64)> = (0..rank).map(|a| out_extent(xs[a], window[a], stride[a], padding)).collect();
    let out_shape: Vec<usize> = geo.iter().map(|g| g.0).collect();
    let total: usize = out_shape.iter().product();
    let win_total: usize = window.iter().product();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut o = vec![0; rank];
        let mut r = flat;
        for a in (0..rank).rev() {
            o[a] = r % out_shape[a];
            r /= out_shape[a];
        }
        let mut best = f64::NEG_INFINITY;
        for wflat in 0..win_total {
            let mut w = vec![0; rank];
            let mut r = wflat;
            for a in (0..rank).rev() {
                w[a] = r % window[a];
                r /= window[a];
            }
            let mut idx = vec![0; rank];
            let mut inside = true;
            for a in 0..rank {
                let i = (o[a] * stride[a] + w[a]) as i64 - geo[a].1;
                if i < 0 || i >= xs[a] as i64 {
                    inside = false;
                    break;
                }
                idx[a] = i as usize;
            }
            if inside {
                best = best.max(at(x, &idx));
            }
        }
        out.push(best);
    }
    Tensor::new(&out_shape, out).unwrap()
}

pub fn matmul_direct(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, f) = (a.shape()[0], a.shape()[1]);
    let o = b.shape()[1];
    let mut out = vec![0.0; n * o];
    for i in 0..n {
        for j in 0..o {
            for k in 0..f {
                out[i * o + j] += at(a, &[i, k]) * at(b, &[k, j]);
            }
        }
    }
    Tensor::new(&[n, o], out).unwrap()
}

/// Central-difference gradient of `f` at `x` for the listed coordinates.
pub fn central_difference(x: &Tensor, coords: &[usize], h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    coords
        .iter()
        .map(|&i| {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// `sum(out * weights)` for projecting a tensor onto a scalar.
pub fn dot(out: &Tensor, weights: &Tensor) -> f64 {
    out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}
