use super::gemm::{gemm, Layout};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn dims(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize, usize)> {
    if input.rank() != 2 || weight.rank() != 2 {
        return Err(shape_err!("dense layer needs [N, F] input and [F, O] weights, got {:?} and {:?}", input.shape(), weight.shape()));
    }
    let (n, f) = (input.shape()[0], input.shape()[1]);
    let o = weight.shape()[1];
    if weight.shape()[0] != f {
        return Err(shape_err!("dimension mismatch: {f} input features, weights expect {}", weight.shape()[0]));
    }
    if let Some(bias) = bias.filter(|b| b.shape() != [o]) {
        return Err(shape_err!("bias {:?} does not match {o} outputs", bias.shape()));
    }
    Ok((n, f, o))
}

/// `input · weight + bias` for `[N, F] × [F, O]`.
pub fn dense_affine(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, f, o) = dims(input, weight, Some(bias))?;
    let mut out: Vec<f64> = bias.data().iter().copied().cycle().take(n * o).collect();
    gemm(input.data(), Layout::row_major(n, f), weight.data(), Layout::row_major(f, o), 1.0, &mut out, Layout::row_major(n, o));
    Ok(Tensor::from_parts(vec![n, o], out))
}

pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let (n, f, o) = dims(input, weight, None)?;
    if grad_out.shape() != [n, o] {
        return Err(shape_err!("upstream gradient {:?} does not match [{n}, {o}]", grad_out.shape()));
    }
    let mut dinput = vec![0.0; n * f];
    gemm(grad_out.data(), Layout::row_major(n, o), weight.data(), Layout::transposed(f, o), 0.0, &mut dinput, Layout::row_major(n, f));
    let mut dweight = vec![0.0; f * o];
    gemm(input.data(), Layout::transposed(n, f), grad_out.data(), Layout::row_major(n, o), 0.0, &mut dweight, Layout::row_major(f, o));
    let mut dbias = vec![0.0; o];
    for row in grad_out.data().chunks_exact(o) {
        for (b, g) in dbias.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_parts(vec![n, f], dinput),
        weight: Tensor::from_parts(vec![f, o], dweight),
        bias: Tensor::from_parts(vec![o], dbias),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{matmul_direct, random_tensor, Lcg};

    #[test]
    fn identity_weights() {
        let mut rng = Lcg::new(1);
        let x = random_tensor(&mut rng, &[3, 3]);
        let eye = Tensor::new(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(dense_affine(&x, &eye, &Tensor::zeros(&[3]).unwrap()).unwrap(), x);
    }

    #[test]
    fn zero_input_replicates_bias() {
        let mut rng = Lcg::new(2);
        let w = random_tensor(&mut rng, &[4, 2]);
        let b = Tensor::new(&[2], vec![0.5, -1.5]).unwrap();
        let y = dense_affine(&Tensor::zeros(&[3, 4]).unwrap(), &w, &b).unwrap();
        assert_eq!(y.data(), &[0.5, -1.5, 0.5, -1.5, 0.5, -1.5]);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = Lcg::new(3);
        let x = random_tensor(&mut rng, &[3, 4]);
        let w = random_tensor(&mut rng, &[4, 2]);
        let y = dense_affine(&x, &w, &Tensor::zeros(&[2]).unwrap()).unwrap();
        assert!(y.max_abs_diff(&matmul_direct(&x, &w)).unwrap() <= 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = Lcg::new(4);
        let x = random_tensor(&mut rng, &[3, 4]);
        let w = random_tensor(&mut rng, &[4, 2]);
        let g = dense_backward(&x, &w, &Tensor::zeros(&[3, 2]).unwrap()).unwrap();
        for t in [&g.input, &g.weight, &g.bias] {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mismatch_rejected() {
        let x = Tensor::zeros(&[3, 4]).unwrap();
        let w = Tensor::zeros(&[5, 2]).unwrap();
        assert!(dense_affine(&x, &w, &Tensor::zeros(&[2]).unwrap()).is_err());
        let w = Tensor::zeros(&[4, 2]).unwrap();
        assert!(dense_backward(&x, &w, &Tensor::zeros(&[3, 3]).unwrap()).is_err());
    }
}
