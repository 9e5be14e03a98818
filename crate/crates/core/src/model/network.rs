//! Layer graphs with explicit forward tapes and reverse-mode gradients.

use std::collections::btree_map::{self, BTreeMap};
use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::spec::ModelSpec;
use crate::error::{invalid, shape_err, Result};
use crate::ops::{self, ConvParams, FactorOrder, Padding};
use crate::rng;
use crate::tensor::{concat, Tensor};

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore(BTreeMap<String, Tensor>);

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.0.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.0.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.0.get(name).ok_or_else(|| invalid!("missing parameter {name:?}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> btree_map::Iter<'_, String, Tensor> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> btree_map::IterMut<'_, String, Tensor> {
        self.0.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn element_count(&self) -> usize {
        self.0.values().map(Tensor::len).sum()
    }

    fn accumulate(&mut self, name: String, g: Tensor) {
        match self.0.entry(name) {
            btree_map::Entry::Vacant(e) => {
                e.insert(g);
            }
            btree_map::Entry::Occupied(mut e) => {
                for (a, b) in e.get_mut().data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }
}

impl<'a> IntoIterator for &'a ParameterStore {
    type Item = (&'a String, &'a Tensor);
    type IntoIter = btree_map::Iter<'a, String, Tensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// One operation in a network graph. Parameterized layers refer to their
/// tensors by name prefix in the network's [`ParameterStore`].
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input,
    Conv3d { name: String, stride: [usize; 3] },
    Conv4d { name: String, stride: [usize; 4] },
    Factorized { name: String, spatial_stride: [usize; 3], temporal_stride: usize, order: FactorOrder },
    Relu,
    Add,
    /// Concatenation along the channel (last) axis.
    Concat,
    /// Window and stride over the per-sample axes.
    MaxPool { window: Vec<usize>, stride: Vec<usize> },
    GlobalAvgPool,
    Dense { name: String },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Conv3d { .. } => "conv3d",
            Op::Conv4d { .. } => "conv4d_full",
            Op::Factorized { .. } => "conv4d_factorized",
            Op::Relu => "relu",
            Op::Add => "add",
            Op::Concat => "concat",
            Op::MaxPool { .. } => "maxpool",
            Op::GlobalAvgPool => "global_avg_pool",
            Op::Dense { .. } => "dense_affine",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub label: String,
    pub op: Op,
    pub inputs: Vec<usize>,
    /// Output shape of a single sample (no batch axis).
    pub shape: Vec<usize>,
}

/// A feed-forward network: nodes in topological order, the last node is
/// the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: Option<ModelSpec>,
    nodes: Vec<Node>,
    params: ParameterStore,
}

/// Activations recorded by [`Network::forward_tape`] for the backward pass.
#[derive(Debug)]
pub struct Tape {
    values: Vec<Tensor>,
    argmax: HashMap<usize, Vec<usize>>,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        self.values.last().unwrap()
    }

    /// Activation of node `i` for the whole batch.
    pub fn value(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    /// Winning input cells of max-pool node `i`.
    pub fn argmax(&self, i: usize) -> Option<&[usize]> {
        self.argmax.get(&i).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParameterStore,
    pub input: Tensor,
}

fn conv_params(store: &ParameterStore, prefix: &str, stride: Vec<usize>) -> Result<ConvParams> {
    ConvParams::new(
        store.require(&format!("{prefix}.weight"))?.clone(),
        store.require(&format!("{prefix}.bias"))?.clone(),
        stride,
        Padding::Same,
    )
}

fn factor_params(store: &ParameterStore, name: &str, spatial: [usize; 3], temporal: usize) -> Result<(ConvParams, ConvParams)> {
    let s = conv_params(store, &format!("{name}.spatial"), vec![1, spatial[0], spatial[1], spatial[2]])?;
    let t = conv_params(store, &format!("{name}.temporal"), vec![temporal, 1, 1, 1])?;
    Ok((s, t))
}

fn with_batch(shape: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(shape.len() + 1);
    v.push(1);
    v.extend_from_slice(shape);
    v
}

impl Network {
    pub fn spec(&self) -> Option<&ModelSpec> {
        self.spec.as_ref()
    }

    pub(crate) fn set_spec(&mut self, spec: ModelSpec) {
        self.spec = Some(spec);
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> &[usize] {
        &self.nodes[0].shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.nodes.last().unwrap().shape
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.element_count()
    }

    /// Replaces every parameter; names and shapes must match exactly.
    pub fn load_params(&mut self, params: ParameterStore) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(invalid!("expected {} parameter tensors, got {}", self.params.len(), params.len()));
        }
        for (name, t) in &self.params {
            let other = params.require(name)?;
            if other.shape() != t.shape() {
                return Err(shape_err!("parameter {name}: expected {:?}, got {:?}", t.shape(), other.shape()));
            }
        }
        self.params = params;
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.rank() != self.input_shape().len() + 1 || &batch.shape()[1..] != self.input_shape() {
            return Err(shape_err!(
                "batch shape {:?} does not match network input [N, {}]",
                batch.shape(),
                self.input_shape().iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
            ));
        }
        Ok(())
    }

    fn eval_node(&self, i: usize, args: &[&Tensor], argmax: Option<&mut HashMap<usize, Vec<usize>>>) -> Result<Tensor> {
        let node = &self.nodes[i];
        let p = &self.params;
        Ok(match &node.op {
            Op::Input => unreachable!("input node is seeded directly"),
            Op::Conv3d { name, stride } => ops::conv3d(args[0], &conv_params(p, name, stride.to_vec())?)?,
            Op::Conv4d { name, stride } => ops::conv4d_full(args[0], &conv_params(p, name, stride.to_vec())?)?,
            Op::Factorized { name, spatial_stride, temporal_stride, order } => {
                let (s, t) = factor_params(p, name, *spatial_stride, *temporal_stride)?;
                ops::conv4d_factorized(args[0], &s, &t, *order)?
            }
            Op::Relu => ops::relu(args[0]),
            Op::Add => {
                let mut out = args[0].clone();
                for a in &args[1..] {
                    if a.shape() != out.shape() {
                        return Err(shape_err!("add of {:?} and {:?}", out.shape(), a.shape()));
                    }
                    for (x, y) in out.data_mut().iter_mut().zip(a.data()) {
                        *x += y;
                    }
                }
                out
            }
            Op::Concat => concat(args, args[0].rank() - 1)?,
            Op::MaxPool { window, stride } => {
                let pooled = ops::maxpool(args[0], &with_batch(window), &with_batch(stride), Padding::Same)?;
                if let Some(store) = argmax {
                    store.insert(i, pooled.argmax);
                }
                pooled.output
            }
            Op::GlobalAvgPool => ops::global_avg_pool(args[0])?,
            Op::Dense { name } => ops::dense_affine(args[0], p.require(&format!("{name}.weight"))?, p.require(&format!("{name}.bias"))?)?,
        })
    }

    /// Inference forward pass; intermediate activations are dropped as soon
    /// as their last consumer has run.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut last_use = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            for &j in &node.inputs {
                last_use[j] = i;
            }
        }
        let mut values: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        values[0] = Some(batch.clone());
        for i in 1..self.nodes.len() {
            let out = {
                let args: Vec<&Tensor> = self.nodes[i].inputs.iter().map(|&j| values[j].as_ref().unwrap()).collect();
                self.eval_node(i, &args, None)?
            };
            values[i] = Some(out);
            for &j in &self.nodes[i].inputs {
                if last_use[j] == i {
                    values[j] = None;
                }
            }
        }
        Ok(values.pop().flatten().unwrap())
    }

    /// Forward pass that keeps every activation for [`Network::backward`].
    pub fn forward_tape(&self, batch: &Tensor) -> Result<Tape> {
        self.check_batch(batch)?;
        let mut values = Vec::with_capacity(self.nodes.len());
        let mut argmax = HashMap::new();
        values.push(batch.clone());
        for i in 1..self.nodes.len() {
            let args: Vec<&Tensor> = self.nodes[i].inputs.iter().map(|&j| &values[j]).collect();
            let out = self.eval_node(i, &args, Some(&mut argmax))?;
            values.push(out);
        }
        Ok(Tape { values, argmax })
    }

    /// Reverse pass from the gradient of a scalar loss with respect to the
    /// network output.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor) -> Result<Gradients> {
        if tape.values.len() != self.nodes.len() {
            return Err(invalid!("tape was recorded on a different network"));
        }
        if grad_out.shape() != tape.output().shape() {
            return Err(shape_err!("upstream gradient {:?} does not match output {:?}", grad_out.shape(), tape.output().shape()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        *grads.last_mut().unwrap() = Some(grad_out.clone());
        let mut pgrads = ParameterStore::new();

        for i in (1..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let x = &tape.values[node.inputs[0]];
            let p = &self.params;
            let input_grads: Vec<Tensor> = match &node.op {
                Op::Input => unreachable!(),
                Op::Conv3d { name, stride } => {
                    let cg = ops::conv3d_backward(x, &conv_params(p, name, stride.to_vec())?, &g)?;
                    pgrads.accumulate(format!("{name}.weight"), cg.weight);
                    pgrads.accumulate(format!("{name}.bias"), cg.bias);
                    vec![cg.input]
                }
                Op::Conv4d { name, stride } => {
                    let cg = ops::conv4d_full_backward(x, &conv_params(p, name, stride.to_vec())?, &g)?;
                    pgrads.accumulate(format!("{name}.weight"), cg.weight);
                    pgrads.accumulate(format!("{name}.bias"), cg.bias);
                    vec![cg.input]
                }
                Op::Factorized { name, spatial_stride, temporal_stride, order } => {
                    let (s, t) = factor_params(p, name, *spatial_stride, *temporal_stride)?;
                    let fg = ops::conv4d_factorized_backward(x, &s, &t, *order, &g)?;
                    pgrads.accumulate(format!("{name}.spatial.weight"), fg.spatial.weight);
                    pgrads.accumulate(format!("{name}.spatial.bias"), fg.spatial.bias);
                    pgrads.accumulate(format!("{name}.temporal.weight"), fg.temporal.weight);
                    pgrads.accumulate(format!("{name}.temporal.bias"), fg.temporal.bias);
                    vec![fg.input]
                }
                Op::Relu => vec![ops::relu_backward(x, &g)?],
                Op::Add => vec![g; node.inputs.len()],
                Op::Concat => {
                    let c_axis = g.rank() - 1;
                    let mut start = 0;
                    let mut parts = Vec::with_capacity(node.inputs.len());
                    for &j in &node.inputs {
                        let c = *tape.values[j].shape().last().unwrap();
                        parts.push(crate::tensor::slice_axis(&g, c_axis, start, c)?);
                        start += c;
                    }
                    parts
                }
                Op::MaxPool { .. } => {
                    let am = tape.argmax.get(&i).ok_or_else(|| invalid!("missing pool indices for node {i}"))?;
                    vec![ops::maxpool_backward(x.shape(), am, &g)?]
                }
                Op::GlobalAvgPool => vec![ops::global_avg_pool_backward(x.shape(), &g)?],
                Op::Dense { name } => {
                    let dg = ops::dense_backward(x, p.require(&format!("{name}.weight"))?, &g)?;
                    pgrads.accumulate(format!("{name}.weight"), dg.weight);
                    pgrads.accumulate(format!("{name}.bias"), dg.bias);
                    vec![dg.input]
                }
            };
            for (&j, gi) in node.inputs.iter().zip(input_grads) {
                match &mut grads[j] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                            *a += b;
                        }
                    }
                    slot => *slot = Some(gi),
                }
            }
        }

        // Parameters that never received gradient (unreachable branches) get zeros.
        for (name, t) in &self.params {
            if !pgrads.contains(name) {
                pgrads.insert(name.clone(), Tensor::zeros(t.shape())?);
            }
        }
        let input = match grads[0].take() {
            Some(g) => g,
            None => Tensor::zeros(tape.values[0].shape())?,
        };
        Ok(Gradients { params: pgrads, input })
    }
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Result<Tensor> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-a..a)).collect())
}

fn out_extent(input: usize, stride: usize) -> usize {
    input.div_ceil(stride)
}

/// Incremental construction of a [`Network`]. All convolutions and pools use
/// "same" padding.
#[derive(Debug)]
pub struct NetworkBuilder {
    nodes: Vec<Node>,
    params: ParameterStore,
    seed: u64,
    layer_counter: u64,
}

impl NetworkBuilder {
    /// Starts a graph whose node 0 is the input with per-sample `input_shape`.
    pub fn new(input_shape: &[usize], seed: u64) -> Result<Self> {
        crate::tensor::check_shape(&with_batch(input_shape))?;
        Ok(Self {
            nodes: vec![Node { label: "input".into(), op: Op::Input, inputs: vec![], shape: input_shape.to_vec() }],
            params: ParameterStore::new(),
            seed,
            layer_counter: 0,
        })
    }

    pub fn input(&self) -> usize {
        0
    }

    pub fn shape(&self, node: usize) -> &[usize] {
        &self.nodes[node].shape
    }

    pub fn channels(&self, node: usize) -> usize {
        *self.nodes[node].shape.last().unwrap()
    }

    fn push(&mut self, label: impl Into<String>, op: Op, inputs: Vec<usize>, shape: Vec<usize>) -> usize {
        self.nodes.push(Node { label: label.into(), op, inputs, shape });
        self.nodes.len() - 1
    }

    fn layer_rng(&mut self) -> ChaCha8Rng {
        self.layer_counter += 1;
        rng::stream(self.seed, &[0x1a7e5, self.layer_counter])
    }

    fn add_conv_params(&mut self, prefix: &str, kernel: &[usize], cin: usize, cout: usize) -> Result<()> {
        let taps: usize = kernel.iter().product();
        let mut shape = kernel.to_vec();
        shape.extend([cin, cout]);
        let mut rng = self.layer_rng();
        let w = glorot(&mut rng, &shape, taps * cin, taps * cout)?;
        for (name, t) in [(format!("{prefix}.weight"), w), (format!("{prefix}.bias"), Tensor::zeros(&[cout])?)] {
            if self.params.insert(name.clone(), t).is_some() {
                return Err(invalid!("duplicate parameter name {name:?}"));
            }
        }
        Ok(())
    }

    fn check_odd(kernel: &[usize]) -> Result<()> {
        if kernel.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(invalid!("kernel extents must be odd, got {kernel:?}"));
        }
        Ok(())
    }

    pub fn conv3d(&mut self, label: &str, from: usize, cout: usize, kernel: [usize; 3], stride: [usize; 3]) -> Result<usize> {
        let s = self.shape(from).to_vec();
        if s.len() != 4 {
            return Err(shape_err!("conv3d expects [D, H, W, C] samples, got {s:?}"));
        }
        Self::check_odd(&kernel)?;
        self.add_conv_params(label, &kernel, s[3], cout)?;
        let shape = vec![out_extent(s[0], stride[0]), out_extent(s[1], stride[1]), out_extent(s[2], stride[2]), cout];
        Ok(self.push(label, Op::Conv3d { name: label.into(), stride }, vec![from], shape))
    }

    pub fn conv4d(&mut self, label: &str, from: usize, cout: usize, kernel: [usize; 4], stride: [usize; 4]) -> Result<usize> {
        let s = self.shape(from).to_vec();
        if s.len() != 5 {
            return Err(shape_err!("conv4d expects [T, D, H, W, C] samples, got {s:?}"));
        }
        Self::check_odd(&kernel)?;
        self.add_conv_params(label, &kernel, s[4], cout)?;
        let mut shape: Vec<usize> = (0..4).map(|a| out_extent(s[a], stride[a])).collect();
        shape.push(cout);
        Ok(self.push(label, Op::Conv4d { name: label.into(), stride }, vec![from], shape))
    }

    /// Spatial `[1, k, k, k]` stage and temporal `[kT, 1, 1, 1]` stage; the
    /// intermediate width is `cout`.
    #[allow(clippy::too_many_arguments)]
    pub fn factorized(
        &mut self,
        label: &str,
        from: usize,
        cout: usize,
        spatial_kernel: [usize; 3],
        temporal_kernel: usize,
        spatial_stride: [usize; 3],
        temporal_stride: usize,
        order: FactorOrder,
    ) -> Result<usize> {
        let s = self.shape(from).to_vec();
        if s.len() != 5 {
            return Err(shape_err!("factorized conv expects [T, D, H, W, C] samples, got {s:?}"));
        }
        Self::check_odd(&spatial_kernel)?;
        Self::check_odd(&[temporal_kernel])?;
        let sk = [1, spatial_kernel[0], spatial_kernel[1], spatial_kernel[2]];
        let tk = [temporal_kernel, 1, 1, 1];
        match order {
            FactorOrder::SpatialFirst => {
                self.add_conv_params(&format!("{label}.spatial"), &sk, s[4], cout)?;
                self.add_conv_params(&format!("{label}.temporal"), &tk, cout, cout)?;
            }
            FactorOrder::TemporalFirst => {
                self.add_conv_params(&format!("{label}.temporal"), &tk, s[4], cout)?;
                self.add_conv_params(&format!("{label}.spatial"), &sk, cout, cout)?;
            }
        }
        let shape = vec![
            out_extent(s[0], temporal_stride),
            out_extent(s[1], spatial_stride[0]),
            out_extent(s[2], spatial_stride[1]),
            out_extent(s[3], spatial_stride[2]),
            cout,
        ];
        let op = Op::Factorized { name: label.into(), spatial_stride, temporal_stride, order };
        Ok(self.push(label, op, vec![from], shape))
    }

    pub fn relu(&mut self, from: usize) -> usize {
        let shape = self.shape(from).to_vec();
        let label = format!("{}.relu", self.nodes[from].label);
        self.push(label, Op::Relu, vec![from], shape)
    }

    pub fn add(&mut self, label: &str, inputs: &[usize]) -> Result<usize> {
        let shape = self.shape(inputs[0]).to_vec();
        if inputs.iter().any(|&i| self.shape(i) != shape.as_slice()) {
            return Err(shape_err!("add of mismatched shapes in {label}"));
        }
        Ok(self.push(label, Op::Add, inputs.to_vec(), shape))
    }

    pub fn concat(&mut self, label: &str, inputs: &[usize]) -> Result<usize> {
        let mut shape = self.shape(inputs[0]).to_vec();
        let rank = shape.len();
        let mut channels = 0;
        for &i in inputs {
            let s = self.shape(i);
            if s.len() != rank || s[..rank - 1] != shape[..rank - 1] {
                return Err(shape_err!("concat of mismatched shapes in {label}"));
            }
            channels += s[rank - 1];
        }
        shape[rank - 1] = channels;
        Ok(self.push(label, Op::Concat, inputs.to_vec(), shape))
    }

    /// Max pooling over the per-sample axes; `window`/`stride` exclude the batch axis.
    pub fn maxpool(&mut self, label: &str, from: usize, window: Vec<usize>, stride: Vec<usize>) -> Result<usize> {
        let s = self.shape(from).to_vec();
        if window.len() != s.len() || stride.len() != s.len() {
            return Err(shape_err!("pool window {window:?} does not match sample rank {}", s.len()));
        }
        if window.contains(&0) || stride.contains(&0) {
            return Err(invalid!("degenerate pool window {window:?}"));
        }
        let shape = s.iter().zip(&stride).map(|(&e, &st)| out_extent(e, st)).collect();
        Ok(self.push(label, Op::MaxPool { window, stride }, vec![from], shape))
    }

    pub fn global_avg_pool(&mut self, from: usize) -> Result<usize> {
        if self.shape(from).len() < 2 {
            return Err(shape_err!("global average pooling needs spatial axes"));
        }
        let c = self.channels(from);
        Ok(self.push("gap", Op::GlobalAvgPool, vec![from], vec![c]))
    }

    pub fn dense(&mut self, label: &str, from: usize, outputs: usize) -> Result<usize> {
        let s = self.shape(from).to_vec();
        if s.len() != 1 {
            return Err(shape_err!("dense layer expects flat features, got {s:?}"));
        }
        let mut rng = self.layer_rng();
        let w = glorot(&mut rng, &[s[0], outputs], s[0], outputs)?;
        self.params.insert(format!("{label}.weight"), w);
        self.params.insert(format!("{label}.bias"), Tensor::zeros(&[outputs])?);
        Ok(self.push(label, Op::Dense { name: label.into() }, vec![from], vec![outputs]))
    }

    /// Finishes the graph; the most recently added node is the output.
    pub fn finish(self) -> Result<Network> {
        if self.nodes.len() < 2 {
            return Err(invalid!("network has no layers"));
        }
        Ok(Network { spec: None, nodes: self.nodes, params: self.params })
    }
}

impl Network {
    /// A single dense layer from `features` inputs to `outputs`.
    pub fn linear(features: usize, outputs: usize, seed: u64) -> Result<Self> {
        let mut b = NetworkBuilder::new(&[features], seed)?;
        let x = b.input();
        b.dense("fc", x, outputs)?;
        b.finish()
    }
}
