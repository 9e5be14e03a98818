use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

/// Gradient of [`relu`]; the subgradient at exactly zero is taken as zero.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(shape_err!("upstream gradient {:?} does not match {:?}", grad_out.shape(), input.shape()));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_cases() {
        let neg = Tensor::new(&[3], vec![-1.0, -2.0, -0.5]).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        let pos = Tensor::new(&[2], vec![0.5, 3.0]).unwrap();
        assert_eq!(relu(&pos), pos);
        let mixed = Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&mixed).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn backward_masks_non_positive() {
        let x = Tensor::new(&[3], vec![-1.0, 2.0, 0.0]).unwrap();
        let g = relu_backward(&x, &Tensor::full(&[3], 1.0).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0]);
        assert!(relu_backward(&x, &Tensor::zeros(&[2]).unwrap()).is_err());
    }
}
