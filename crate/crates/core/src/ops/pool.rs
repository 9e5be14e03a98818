use super::conv::Padding;
use crate::error::{invalid, shape_err, Result};
use crate::tensor::{increment, strides, Tensor};

/// Max-pooling result; `argmax[i]` is the flat input index that produced
/// output cell `i`.
#[derive(Debug, Clone)]
pub struct PoolOutput {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Max pooling with a per-axis window and stride over every axis of `input`.
///
/// With [`Padding::Same`] window cells falling outside the input are
/// ignored rather than filled, so padding never wins the max. Ties resolve
/// to the lowest flat input index.
pub fn maxpool(input: &Tensor, window: &[usize], stride: &[usize], padding: Padding) -> Result<PoolOutput> {
    let rank = input.rank();
    if window.len() != rank || stride.len() != rank {
        return Err(shape_err!("pool window {window:?} / stride {stride:?} do not match rank {rank}"));
    }
    if window.contains(&0) || stride.contains(&0) {
        return Err(invalid!("degenerate pool window {window:?} or stride {stride:?}"));
    }
    let shape = input.shape();
    let mut pad = vec![0usize; rank];
    let mut out_shape = vec![0usize; rank];
    for a in 0..rank {
        match padding {
            Padding::Same => {
                pad[a] = (window[a] - 1) / 2;
                out_shape[a] = shape[a].div_ceil(stride[a]);
            }
            Padding::Valid => {
                if window[a] > shape[a] {
                    return Err(shape_err!("pool window {} exceeds extent {} on axis {a}", window[a], shape[a]));
                }
                out_shape[a] = (shape[a] - window[a]) / stride[a] + 1;
            }
        }
    }
    let in_strides = strides(shape);
    let total: usize = out_shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut argmax = Vec::with_capacity(total);

    let mut o = vec![0usize; rank];
    let mut lo = vec![0usize; rank];
    let mut extent = vec![0usize; rank];
    let mut w = vec![0usize; rank];
    for _ in 0..total {
        for a in 0..rank {
            let start = (o[a] * stride[a]) as isize - pad[a] as isize;
            let first = start.max(0) as usize;
            let end = ((start + window[a] as isize) as usize).min(shape[a]);
            lo[a] = first;
            extent[a] = end - first;
        }
        w.fill(0);
        let mut best = f64::NEG_INFINITY;
        let mut best_at = usize::MAX;
        loop {
            let flat: usize = (0..rank).map(|a| (lo[a] + w[a]) * in_strides[a]).sum();
            let v = input.data()[flat];
            if v > best || best_at == usize::MAX {
                best = v;
                best_at = flat;
            }
            if !increment(&mut w, &extent) {
                break;
            }
        }
        out.push(best);
        argmax.push(best_at);
        increment(&mut o, &out_shape);
    }
    Ok(PoolOutput { output: Tensor::from_parts(out_shape, out), argmax })
}

pub fn maxpool_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(shape_err!("upstream gradient has {} cells, pool produced {}", grad_out.len(), argmax.len()));
    }
    let mut grad = Tensor::zeros(input_shape)?;
    let g = grad.data_mut();
    for (&i, &d) in argmax.iter().zip(grad_out.data()) {
        g[i] += d;
    }
    Ok(grad)
}

/// Mean over every axis except the leading batch axis and trailing channel axis.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    if input.rank() < 3 {
        return Err(shape_err!("global average pooling needs rank >= 3, got {:?}", input.shape()));
    }
    let n = input.shape()[0];
    let c = *input.shape().last().unwrap();
    let cells = input.len() / (n * c);
    let mut out = vec![0.0; n * c];
    for (b, sample) in input.data().chunks_exact(cells * c).enumerate() {
        let acc = &mut out[b * c..(b + 1) * c];
        for cell in sample.chunks_exact(c) {
            for (a, v) in acc.iter_mut().zip(cell) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= cells as f64;
        }
    }
    Ok(Tensor::from_parts(vec![n, c], out))
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let n = input_shape[0];
    let c = *input_shape.last().unwrap();
    if grad_out.shape() != [n, c] {
        return Err(shape_err!("upstream gradient {:?} does not match [{n}, {c}]", grad_out.shape()));
    }
    let total: usize = input_shape.iter().product();
    let cells = total / (n * c);
    let scale = 1.0 / cells as f64;
    let mut data = Vec::with_capacity(total);
    for b in 0..n {
        let row = &grad_out.data()[b * c..(b + 1) * c];
        for _ in 0..cells {
            data.extend(row.iter().map(|g| g * scale));
        }
    }
    Tensor::new(input_shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{maxpool_direct, random_tensor, Lcg};

    #[test]
    fn unit_window_is_identity() {
        let mut rng = Lcg::new(1);
        let x = random_tensor(&mut rng, &[2, 3, 4]);
        let p = maxpool(&x, &[1, 1, 1], &[1, 1, 1], Padding::Valid).unwrap();
        assert_eq!(p.output, x);
    }

    #[test]
    fn one_dimensional_window() {
        let x = Tensor::new(&[4], vec![1.0, 3.0, 2.0, 0.0]).unwrap();
        let p = maxpool(&x, &[2], &[2], Padding::Valid).unwrap();
        assert_eq!(p.output.data(), &[3.0, 2.0]);
        assert_eq!(p.argmax, vec![1, 2]);
    }

    #[test]
    fn four_dimensional_window_matches_direct() {
        let mut rng = Lcg::new(2);
        let x = random_tensor(&mut rng, &[2, 3, 4, 4, 4, 2]);
        let window = [1, 1, 2, 2, 2, 1];
        let stride = [1, 1, 2, 2, 2, 1];
        let p = maxpool(&x, &window, &stride, Padding::Valid).unwrap();
        assert_eq!(p.output, maxpool_direct(&x, &window, &stride, Padding::Valid));
        let window = [1, 3, 3, 3, 3, 1];
        let stride = [1, 2, 2, 1, 2, 1];
        let p = maxpool(&x, &window, &stride, Padding::Same).unwrap();
        assert_eq!(p.output, maxpool_direct(&x, &window, &stride, Padding::Same));
    }

    #[test]
    fn ties_pick_lowest_index() {
        let x = Tensor::new(&[4], vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let p = maxpool(&x, &[4], &[1], Padding::Valid).unwrap();
        assert_eq!(p.argmax, vec![0]);
        let g = maxpool_backward(&[4], &p.argmax, &Tensor::scalar(1.0)).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn degenerate_window_rejected() {
        let x = Tensor::zeros(&[4]).unwrap();
        assert!(maxpool(&x, &[0], &[1], Padding::Valid).is_err());
        assert!(maxpool(&x, &[5], &[1], Padding::Valid).is_err());
    }

    #[test]
    fn gap_cases() {
        let c = Tensor::full(&[2, 3, 3, 4], 2.5).unwrap();
        assert!(global_avg_pool(&c).unwrap().data().iter().all(|&v| v == 2.5));
        let x = Tensor::new(&[1, 2, 1], vec![1.0, 3.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[2.0]);
        assert!(global_avg_pool(&Tensor::zeros(&[2, 2]).unwrap()).is_err());
    }

    #[test]
    fn gap_matches_explicit_sum() {
        let mut rng = Lcg::new(3);
        let x = random_tensor(&mut rng, &[2, 3, 4, 4, 4, 5]);
        let y = global_avg_pool(&x).unwrap();
        for n in 0..2 {
            for c in 0..5 {
                let mut sum = 0.0;
                for t in 0..3 {
                    for d in 0..4 {
                        for h in 0..4 {
                            for w in 0..4 {
                                sum += x.get(&[n, t, d, h, w, c]).unwrap();
                            }
                        }
                    }
                }
                assert!((y.get(&[n, c]).unwrap() - sum / 192.0).abs() <= 1e-12);
            }
        }
    }
}
