//! Network assembly: a five-layer stem, one architecture module per entry
//! of `blocks_per_module`, global average pooling and a three-output dense
//! head.
//!
//! Every module's first block halves the spatial extents with stride-2
//! convolutions; in the temporal modes the time axis is halved too until it
//! reaches one frame, after which temporal kernels collapse to a single tap.
//! Pointwise (kernel 1) convolutions are never factorized and never mix time.

use super::network::{Network, NetworkBuilder};
use super::spec::{Family, ModelSpec};
use crate::error::{invalid, shape_err, Result};
use crate::ops::ConvMode;

/// Output dimension of the regression head (a 3D position).
pub const OUTPUTS: usize = 3;

pub const STEM_LAYERS: usize = 5;

struct Assembler<'a> {
    b: NetworkBuilder,
    spec: &'a ModelSpec,
}

impl Assembler<'_> {
    fn temporal(&self) -> bool {
        self.spec.mode.is_temporal()
    }

    fn frames(&self, node: usize) -> usize {
        self.b.shape(node)[0]
    }

    /// Convolution with the mode's kernel layout. `down` requests stride 2.
    fn conv(&mut self, label: &str, from: usize, cout: usize, k: usize, down: bool) -> Result<usize> {
        let s = if down { 2 } else { 1 };
        if !self.temporal() {
            return self.b.conv3d(label, from, cout, [k; 3], [s; 3]);
        }
        let frames = self.frames(from);
        let st = if down && frames > 1 { 2 } else { 1 };
        let kt = if frames == 1 { 1 } else { self.spec.temporal_kernel };
        if k == 1 {
            return self.b.conv4d(label, from, cout, [1, 1, 1, 1], [st, s, s, s]);
        }
        match self.spec.mode {
            ConvMode::Mode4D => self.b.conv4d(label, from, cout, [kt, k, k, k], [st, s, s, s]),
            ConvMode::ModeF4D => self.b.factorized(label, from, cout, [k; 3], kt, [s; 3], st, self.spec.factor_order),
            _ => unreachable!(),
        }
    }

    fn conv_relu(&mut self, label: &str, from: usize, cout: usize, k: usize, down: bool) -> Result<usize> {
        let c = self.conv(label, from, cout, k, down)?;
        Ok(self.b.relu(c))
    }

    fn pool(&mut self, label: &str, from: usize, down: bool) -> Result<usize> {
        let k = self.spec.spatial_kernel;
        let s = if down { 2 } else { 1 };
        let (window, stride) = if self.temporal() {
            let frames = self.frames(from);
            let kt = if frames == 1 { 1 } else { self.spec.temporal_kernel };
            let st = if down && frames > 1 { 2 } else { 1 };
            (vec![kt, k, k, k, 1], vec![st, s, s, s, 1])
        } else {
            (vec![k, k, k, 1], vec![s, s, s, 1])
        };
        self.b.maxpool(label, from, window, stride)
    }

    fn shortcut(&mut self, label: &str, from: usize, cout: usize, down: bool) -> Result<usize> {
        if down || self.b.channels(from) != cout {
            self.conv(label, from, cout, 1, down)
        } else {
            Ok(from)
        }
    }

    fn resnet_block(&mut self, p: &str, from: usize, cout: usize, down: bool) -> Result<usize> {
        let k = self.spec.spatial_kernel;
        let a = self.conv_relu(&format!("{p}.conv1"), from, cout, k, down)?;
        let b = self.conv(&format!("{p}.conv2"), a, cout, k, false)?;
        let skip = self.shortcut(&format!("{p}.skip"), from, cout, down)?;
        let sum = self.b.add(&format!("{p}.add"), &[b, skip])?;
        Ok(self.b.relu(sum))
    }

    fn inception_block(&mut self, p: &str, from: usize, cout: usize, down: bool) -> Result<usize> {
        let k = self.spec.spatial_kernel;
        let third = cout / 3;
        let widths = [third + cout % 3, third, third];
        let b1 = self.conv_relu(&format!("{p}.branch1"), from, widths[0], 1, down)?;
        let b2 = self.conv_relu(&format!("{p}.branch{k}"), from, widths[1], k, down)?;
        let pooled = self.pool(&format!("{p}.pool"), from, down)?;
        let b3 = self.conv_relu(&format!("{p}.branch_pool"), pooled, widths[2], 1, false)?;
        self.b.concat(&format!("{p}.concat"), &[b1, b2, b3])
    }

    fn resnext_block(&mut self, p: &str, from: usize, cout: usize, down: bool) -> Result<usize> {
        let k = self.spec.spatial_kernel;
        let width = (cout / self.spec.cardinality).max(1);
        let mut paths = Vec::with_capacity(self.spec.cardinality);
        for g in 0..self.spec.cardinality {
            let r = self.conv_relu(&format!("{p}.path{g}.reduce"), from, width, 1, false)?;
            let m = self.conv_relu(&format!("{p}.path{g}.conv"), r, width, k, down)?;
            paths.push(self.conv(&format!("{p}.path{g}.expand"), m, cout, 1, false)?);
        }
        let skip = self.shortcut(&format!("{p}.skip"), from, cout, down)?;
        paths.push(skip);
        let sum = self.b.add(&format!("{p}.add"), &paths)?;
        Ok(self.b.relu(sum))
    }

    /// Strided entry conv to the module width, `layers` densely connected
    /// growth layers, then (between modules) a channel-halving transition.
    fn densenet_module(&mut self, p: &str, from: usize, width: usize, layers: usize, last: bool) -> Result<usize> {
        let k = self.spec.spatial_kernel;
        let mut x = self.conv_relu(&format!("{p}.down"), from, width, k, true)?;
        for l in 0..layers {
            let new = self.conv_relu(&format!("{p}.dense{l}"), x, self.spec.growth_rate, k, false)?;
            x = self.b.concat(&format!("{p}.dense{l}.concat"), &[x, new])?;
        }
        if !last {
            let half = (self.b.channels(x) / 2).max(1);
            x = self.conv_relu(&format!("{p}.transition"), x, half, 1, false)?;
        }
        Ok(x)
    }
}

/// Builds the network for `spec` on samples of shape `input_shape`
/// (`[D, H, W, C]` for 3D modes, `[T, D, H, W, C]` for 4D modes).
pub fn build_model(spec: &ModelSpec, input_shape: &[usize]) -> Result<Network> {
    spec.validate()?;
    let want_rank = if spec.mode.is_temporal() { 5 } else { 4 };
    if input_shape.len() != want_rank {
        return Err(shape_err!("{} mode expects rank-{want_rank} samples, got {input_shape:?}", spec.mode));
    }
    if spec.mode.is_temporal() && spec.temporal_kernel > input_shape[0] {
        return Err(invalid!(
            "temporal kernel {} exceeds sequence length {}",
            spec.temporal_kernel,
            input_shape[0]
        ));
    }

    let mut a = Assembler { b: NetworkBuilder::new(input_shape, spec.seed)?, spec };
    let k = spec.spatial_kernel;
    let mut x = a.b.input();
    for i in 0..STEM_LAYERS {
        x = a.conv_relu(&format!("stem.{i}"), x, spec.stem_channels, k, false)?;
    }
    let modules = spec.blocks_per_module.len();
    for (m, (&blocks, &mult)) in spec.blocks_per_module.iter().zip(&spec.module_channel_multipliers).enumerate() {
        let width = spec.stem_channels * mult;
        if spec.family == Family::Densenet {
            x = a.densenet_module(&format!("m{m}"), x, width, blocks, m + 1 == modules)?;
            continue;
        }
        for blk in 0..blocks {
            let p = format!("m{m}.b{blk}");
            let down = blk == 0;
            x = match spec.family {
                Family::ResNet => a.resnet_block(&p, x, width, down)?,
                Family::Inception => a.inception_block(&p, x, width, down)?,
                Family::ResNeXt => a.resnext_block(&p, x, width, down)?,
                Family::Densenet => unreachable!(),
            };
        }
    }
    let g = a.b.global_avg_pool(x)?;
    a.b.dense("head.fc", g, OUTPUTS)?;
    let mut net = a.b.finish()?;
    net.set_spec(spec.clone());
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::Op;
    use crate::tensor::Tensor;
    use crate::testing::{random_tensor, Lcg};

    fn small(family: Family, mode: ConvMode) -> ModelSpec {
        let mut s = ModelSpec::new(family, mode);
        s.stem_channels = 3;
        s.module_channel_multipliers = vec![1, 2];
        s.blocks_per_module = vec![1, 1];
        s.cardinality = 2;
        s.growth_rate = 2;
        s
    }

    #[test]
    fn resnet_3d_output_shape_on_paper_volume() {
        let spec = ModelSpec::new(Family::ResNet, ConvMode::Mode3D);
        let net = build_model(&spec, &[32, 32, 32, 1]).unwrap();
        assert_eq!(net.output_shape(), &[3]);
        let y = net.forward(&Tensor::zeros(&[2, 32, 32, 32, 1]).unwrap()).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
    }

    #[test]
    fn every_combination_forwards() {
        let mut rng = Lcg::new(1);
        for family in Family::ALL {
            for mode in ConvMode::ALL {
                let spec = small(family, mode);
                let shape = spec.input_shape(3, [8, 8, 8], 1);
                let net = build_model(&spec, &shape).unwrap();
                let mut batch_shape = vec![2];
                batch_shape.extend(&shape);
                let y = net.forward(&random_tensor(&mut rng, &batch_shape)).unwrap();
                assert_eq!(y.shape(), &[2, 3], "{family}/{mode}");
                assert!(y.is_finite());
            }
        }
    }

    #[test]
    fn seeded_rebuild_is_identical() {
        let spec = small(Family::ResNeXt, ConvMode::Mode4D).with_seed(42);
        let a = build_model(&spec, &[3, 8, 8, 8, 1]).unwrap();
        let b = build_model(&spec, &[3, 8, 8, 8, 1]).unwrap();
        assert_eq!(a.params(), b.params());
        let c = build_model(&spec.clone().with_seed(43), &[3, 8, 8, 8, 1]).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn rejects_long_temporal_kernel_and_empty_modules() {
        let mut spec = small(Family::ResNet, ConvMode::Mode4D);
        spec.temporal_kernel = 5;
        assert!(build_model(&spec, &[3, 8, 8, 8, 1]).is_err());
        let mut spec = small(Family::ResNet, ConvMode::Mode4D);
        spec.blocks_per_module.clear();
        spec.module_channel_multipliers.clear();
        assert!(build_model(&spec, &[3, 8, 8, 8, 1]).is_err());
        let spec = small(Family::ResNet, ConvMode::Mode3D);
        assert!(build_model(&spec, &[3, 8, 8, 8, 1]).is_err());
    }

    #[test]
    fn modules_halve_extents() {
        for family in Family::ALL {
            let mut spec = ModelSpec::new(family, ConvMode::Mode4D);
            spec.blocks_per_module = vec![1, 1, 1];
            let net = build_model(&spec, &[5, 16, 16, 16, 1]).unwrap();
            let mut expect = [5usize, 16, 16, 16];
            for m in 0..3 {
                for e in &mut expect {
                    *e = e.div_ceil(2);
                }
                let prefix = format!("m{m}");
                let last = net.nodes().iter().filter(|n| n.label.starts_with(&prefix)).last().unwrap();
                assert_eq!(&last.shape[..4], &expect, "{family} module {m}");
            }
        }
    }

    #[test]
    fn temporal_kernel_collapses_at_single_frame() {
        let mut spec = ModelSpec::new(Family::ResNet, ConvMode::Mode4D);
        spec.blocks_per_module = vec![1, 1, 1, 1];
        spec.module_channel_multipliers = vec![1, 1, 1, 1];
        let net = build_model(&spec, &[5, 16, 16, 16, 1]).unwrap();
        // 5 -> 3 -> 2 -> 1 -> 1 frames.
        let conv2 = net.params().get("m3.b0.conv2.weight").unwrap();
        assert_eq!(conv2.shape()[0], 1);
        let conv2 = net.params().get("m1.b0.conv2.weight").unwrap();
        assert_eq!(conv2.shape()[0], 3);
        assert!(net.nodes().iter().all(|n| !n.shape.is_empty() && n.shape[0] >= 1));
    }

    #[test]
    fn zero_network_outputs_head_bias() {
        let spec = small(Family::Inception, ConvMode::ModeF4D);
        let mut net = build_model(&spec, &[3, 8, 8, 8, 1]).unwrap();
        let names: Vec<String> = net.params().names().map(String::from).collect();
        for name in names {
            let t = net.params_mut().get_mut(&name).unwrap();
            t.data_mut().fill(0.0);
        }
        net.params_mut().get_mut("head.fc.bias").unwrap().data_mut().copy_from_slice(&[0.5, -1.0, 2.0]);
        let y = net.forward(&Tensor::zeros(&[2, 3, 8, 8, 8, 1]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn duplicated_sample_gives_identical_rows() {
        let spec = small(Family::Densenet, ConvMode::Mode3DC);
        let net = build_model(&spec, &[8, 8, 8, 3]).unwrap();
        let mut rng = Lcg::new(3);
        let one = random_tensor(&mut rng, &[1, 8, 8, 8, 3]);
        let mut data = one.flatten();
        data.extend(one.data());
        let y = net.forward(&Tensor::new(&[2, 8, 8, 8, 3], data).unwrap()).unwrap();
        assert_eq!(&y.data()[..3], &y.data()[3..]);
    }

    #[test]
    fn factorized_layers_used_only_for_wide_kernels() {
        let net = build_model(&ModelSpec::new(Family::ResNet, ConvMode::ModeF4D), &[5, 16, 16, 16, 1]).unwrap();
        for n in net.nodes() {
            if n.label.ends_with(".skip") {
                assert!(matches!(n.op, Op::Conv4d { .. }));
            }
            if n.label.ends_with(".conv1") {
                assert!(matches!(n.op, Op::Factorized { .. }));
            }
        }
    }
}
