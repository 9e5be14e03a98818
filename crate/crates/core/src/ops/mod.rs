//! Forward and backward kernels for every layer type used by the networks.

mod activation;
mod conv;
mod dense;
mod gemm;
mod pool;
mod stack;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use activation::{relu, relu_backward};
pub use conv::{
    conv3d, conv3d_backward, conv4d_factorized, conv4d_factorized_backward, conv4d_full, conv4d_full_backward,
    ConvGrads, ConvParams, FactorOrder, FactorizedGrads, Padding,
};
pub use dense::{dense_affine, dense_backward, DenseGrads};
pub use pool::{global_avg_pool, global_avg_pool_backward, maxpool, maxpool_backward, PoolOutput};
pub use stack::{channel_stack, channel_unstack};

use crate::error::{invalid, Error};

/// How a network consumes the temporal axis of its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConvMode {
    /// 3D convolutions on the most recent volume only.
    #[serde(rename = "3d")]
    Mode3D,
    /// 3D convolutions with all frames stacked into the input channels.
    #[serde(rename = "3d-c")]
    Mode3DC,
    /// Factorized 4D convolutions (spatial stage plus temporal stage).
    #[serde(rename = "f-4d")]
    ModeF4D,
    /// Full 4D spatio-temporal convolutions.
    #[serde(rename = "4d")]
    Mode4D,
}

impl ConvMode {
    pub const ALL: [ConvMode; 4] = [ConvMode::Mode3D, ConvMode::Mode3DC, ConvMode::ModeF4D, ConvMode::Mode4D];

    /// True when the network keeps an explicit time axis.
    pub fn is_temporal(self) -> bool {
        matches!(self, ConvMode::ModeF4D | ConvMode::Mode4D)
    }

    pub fn label(self) -> &'static str {
        match self {
            ConvMode::Mode3D => "3d",
            ConvMode::Mode3DC => "3d-c",
            ConvMode::ModeF4D => "f-4d",
            ConvMode::Mode4D => "4d",
        }
    }
}

impl fmt::Display for ConvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.label())
    }
}

impl FromStr for ConvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "3d" => Ok(ConvMode::Mode3D),
            "3d-c" | "3dc" => Ok(ConvMode::Mode3DC),
            "f-4d" | "f4d" => Ok(ConvMode::ModeF4D),
            "4d" => Ok(ConvMode::Mode4D),
            other => Err(invalid!("unknown convolution mode {other:?} (expected 3d, 3d-c, f-4d or 4d)")),
        }
    }
}
