//! Indexed access to regression samples for training and evaluation.

use crate::error::{invalid, shape_err, Result};
use crate::tensor::{gather_rows, Tensor};

/// A finite set of (input, 3-vector target) pairs that can be gathered
/// into batches.
pub trait Samples {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-sample input shape (no batch axis).
    fn sample_shape(&self) -> Vec<usize>;

    /// Inputs `[B, ...]` and targets `[B, 3]` for the given sample indices.
    fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)>;
}

/// Samples held as two stacked tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSet {
    inputs: Tensor,
    targets: Tensor,
}

impl TensorSet {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if targets.rank() != 2 || inputs.rank() < 2 || inputs.shape()[0] != targets.shape()[0] {
            return Err(shape_err!("inputs {:?} and targets {:?} do not pair up", inputs.shape(), targets.shape()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn targets(&self) -> &Tensor {
        &self.targets
    }
}

impl Samples for TensorSet {
    fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    fn sample_shape(&self) -> Vec<usize> {
        self.inputs.shape()[1..].to_vec()
    }

    fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if indices.is_empty() {
            return Err(invalid!("empty batch"));
        }
        Ok((gather_rows(&self.inputs, indices)?, gather_rows(&self.targets, indices)?))
    }
}
