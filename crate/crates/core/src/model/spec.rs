use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ops::{ConvMode, FactorOrder};

/// Block family used inside each architecture module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    ResNet,
    Inception,
    ResNeXt,
    Densenet,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::ResNet, Family::Inception, Family::ResNeXt, Family::Densenet];

    pub fn label(self) -> &'static str {
        match self {
            Family::ResNet => "resnet",
            Family::Inception => "inception",
            Family::ResNeXt => "resnext",
            Family::Densenet => "densenet",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.label())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid!("unknown family {s:?} (expected resnet, inception, resnext or densenet)"))
    }
}

/// Architecture hyperparameters; together with the input shape this fully
/// determines a network's parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    pub mode: ConvMode,
    pub stem_channels: usize,
    pub module_channel_multipliers: Vec<usize>,
    pub blocks_per_module: Vec<usize>,
    pub spatial_kernel: usize,
    pub temporal_kernel: usize,
    pub cardinality: usize,
    pub growth_rate: usize,
    #[serde(default)]
    pub factor_order: FactorOrder,
    #[serde(with = "crate::rng::seed_format")]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, mode: ConvMode) -> Self {
        Self {
            family,
            mode,
            stem_channels: 8,
            module_channel_multipliers: vec![1, 2, 4],
            blocks_per_module: vec![2, 2, 2],
            spatial_kernel: 3,
            temporal_kernel: 3,
            cardinality: 4,
            growth_rate: 8,
            factor_order: FactorOrder::SpatialFirst,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Per-sample network input shape for a sequence of `frames` volumes of
    /// `volume` voxels with `channels` channels each.
    pub fn input_shape(&self, frames: usize, volume: [usize; 3], channels: usize) -> Vec<usize> {
        let [d, h, w] = volume;
        match self.mode {
            ConvMode::Mode3D => vec![d, h, w, channels],
            ConvMode::Mode3DC => vec![d, h, w, frames * channels],
            ConvMode::ModeF4D | ConvMode::Mode4D => vec![frames, d, h, w, channels],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks_per_module.is_empty() {
            return Err(invalid!("model needs at least one architecture module"));
        }
        if self.blocks_per_module.len() != self.module_channel_multipliers.len() {
            return Err(invalid!(
                "{} block counts but {} channel multipliers",
                self.blocks_per_module.len(),
                self.module_channel_multipliers.len()
            ));
        }
        if self.blocks_per_module.contains(&0) || self.module_channel_multipliers.contains(&0) {
            return Err(invalid!("block counts and channel multipliers must be positive"));
        }
        for (name, v) in [
            ("stem_channels", self.stem_channels),
            ("cardinality", self.cardinality),
            ("growth_rate", self.growth_rate),
        ] {
            if v == 0 {
                return Err(invalid!("{name} must be positive"));
            }
        }
        for (name, k) in [("spatial_kernel", self.spatial_kernel), ("temporal_kernel", self.temporal_kernel)] {
            if k % 2 == 0 {
                return Err(invalid!("{name} must be odd, got {k}"));
            }
        }
        if self.family == Family::Inception {
            let narrowest = self.stem_channels * self.module_channel_multipliers.iter().min().unwrap();
            if narrowest < 3 {
                return Err(invalid!("inception modules need at least 3 output channels, got {narrowest}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_labels() {
        for f in Family::ALL {
            assert_eq!(f.label().parse::<Family>().unwrap(), f);
        }
        for m in ConvMode::ALL {
            assert_eq!(m.label().parse::<ConvMode>().unwrap(), m);
        }
        assert!("vgg".parse::<Family>().is_err());
    }

    #[test]
    fn validation() {
        let mut s = ModelSpec::new(Family::ResNet, ConvMode::Mode4D);
        s.validate().unwrap();
        s.blocks_per_module.push(1);
        assert!(s.validate().is_err());
        let mut s = ModelSpec::new(Family::ResNet, ConvMode::Mode4D);
        s.blocks_per_module.clear();
        s.module_channel_multipliers.clear();
        assert!(s.validate().is_err());
        let mut s = ModelSpec::new(Family::ResNet, ConvMode::Mode4D);
        s.temporal_kernel = 2;
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = ModelSpec::new(Family::ResNeXt, ConvMode::ModeF4D).with_seed(11);
        let text = toml::to_string(&s).unwrap();
        assert!(text.contains("mode = \"f-4d\""), "{text}");
        assert_eq!(toml::from_str::<ModelSpec>(&text).unwrap(), s);
    }
}
