use crate::blocks::{
    weighted_concat, bifpn_fuse, Activation, Block, BnCounting, C3, ConvBlock, CoordAtt, Detect, FeatureShape,
    FusionWeights, GhostBottleneck, GhostConv, ParamInit, ParamRole, Sppf, BIFPN_EPS, DETECT_STRIDES,
};
use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

use super::config::{LayerOp, LayerSpec, ModelConfig, Source};

/// Input image channels.
pub const INPUT_CHANNELS: usize = 3;

/// Largest stride in the network; input sizes must be a multiple of it.
pub const MAX_STRIDE: usize = 32;

#[derive(Clone, Debug)]
pub(crate) enum Unit {
    Conv(ConvBlock),
    Ghost(GhostConv),
    C3(C3),
    GhostBottleneck(GhostBottleneck),
    Sppf(Sppf),
    CoordAtt(CoordAtt),
}

impl Unit {
    fn block(&self) -> &dyn Block {
        match self {
            Unit::Conv(b) => b,
            Unit::Ghost(b) => b,
            Unit::C3(b) => b,
            Unit::GhostBottleneck(b) => b,
            Unit::Sppf(b) => b,
            Unit::CoordAtt(b) => b,
        }
    }

    fn block_mut(&mut self) -> &mut dyn Block {
        match self {
            Unit::Conv(b) => b,
            Unit::Ghost(b) => b,
            Unit::C3(b) => b,
            Unit::GhostBottleneck(b) => b,
            Unit::Sppf(b) => b,
            Unit::CoordAtt(b) => b,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Node {
    /// `n` stacked copies of one block type.
    Stack(Vec<Unit>),
    Upsample(usize),
    Concat,
    /// Fusion weights for a weighted concat (`add == false`) or sum.
    Fusion { weights: Tensor, add: bool },
    Detect(Detect),
}

#[derive(Clone, Debug)]
pub struct Layer {
    pub spec: LayerSpec,
    pub(crate) node: Node,
    pub inputs: Vec<FeatureShape>,
    /// One shape per output; only the detect head has more than one.
    pub outputs: Vec<FeatureShape>,
}

impl Layer {
    pub fn declared_params(&self, counting: BnCounting) -> u64 {
        match &self.node {
            Node::Stack(units) => units.iter().map(|u| u.block().declared_params(counting)).sum(),
            Node::Upsample(_) | Node::Concat => 0,
            Node::Fusion { weights, .. } => weights.numel() as u64,
            Node::Detect(d) => d.declared_params(counting),
        }
    }

    pub fn macs(&self) -> u64 {
        match &self.node {
            Node::Stack(units) => {
                let mut shape = self.inputs[0];
                let mut total = 0;
                for u in units {
                    total += u.block().macs(shape);
                    shape = u.block().out_shape(shape).expect("shapes validated at build");
                }
                total
            }
            Node::Upsample(_) | Node::Concat | Node::Fusion { .. } => 0,
            Node::Detect(d) => d.macs(&self.inputs),
        }
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(ParamRole, &Tensor)) {
        match &self.node {
            Node::Stack(units) => units.iter().for_each(|u| u.block().visit_params(f)),
            Node::Upsample(_) | Node::Concat => {}
            Node::Fusion { weights, .. } => f(ParamRole::Fusion, weights),
            Node::Detect(d) => d.visit_params(f),
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut Tensor)) {
        match &mut self.node {
            Node::Stack(units) => units.iter_mut().for_each(|u| u.block_mut().visit_params_mut(f)),
            Node::Upsample(_) | Node::Concat => {}
            Node::Fusion { weights, .. } => f(ParamRole::Fusion, weights),
            Node::Detect(d) => d.visit_params_mut(f),
        }
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>> {
        let one = |t: Tensor| Ok(vec![t]);
        match &self.node {
            Node::Stack(units) => {
                let mut x = units[0].block().forward(inputs[0])?;
                for u in &units[1..] {
                    x = u.block().forward(&x)?;
                }
                one(x)
            }
            Node::Upsample(s) => one(kernels::nearest_upsample(inputs[0], *s)?),
            Node::Concat => one(kernels::concat_channels(inputs)?),
            Node::Fusion { weights, add } => {
                let ws = FusionWeights::new(weights.data().to_vec(), BIFPN_EPS as f32)?;
                if *add {
                    one(bifpn_fuse(&ws, inputs)?)
                } else {
                    one(weighted_concat(&ws, inputs)?)
                }
            }
            Node::Detect(d) => d.forward(inputs),
        }
    }
}

/// A built detector: validated layer graph with allocated weights and
/// inferred feature shapes.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    nc: usize,
    input_size: usize,
    seed: u64,
    layers: Vec<Layer>,
    /// Index of the last layer that reads each layer's output.
    last_use: Vec<usize>,
}

impl ModelGraph {
    /// Builds the graph for square `input_size × input_size` RGB input.
    ///
    /// Layer `i` draws its weights from stream `i` of `seed`, so changing one
    /// layer does not perturb the weights of the others.
    pub fn build(config: &ModelConfig, nc: usize, input_size: usize, seed: u64) -> Result<Self> {
        if input_size == 0 || !input_size.is_multiple_of(MAX_STRIDE) {
            return Err(Error::invalid(
                "build",
                format!("input size {input_size} is not a positive multiple of {MAX_STRIDE}"),
            ));
        }
        if nc == 0 {
            return Err(Error::invalid("build", "class count must be positive"));
        }
        let input = FeatureShape::new(INPUT_CHANNELS, input_size, input_size);
        let mut layers: Vec<Layer> = Vec::with_capacity(config.layers.len());
        for spec in &config.layers {
            let inputs: Vec<FeatureShape> = spec
                .from
                .iter()
                .map(|s| match s {
                    Source::Input => Ok(input),
                    Source::Layer(j) => match layers[*j].outputs[..] {
                        [shape] => Ok(shape),
                        _ => Err(Error::layer(spec.index, format!("layer {j} has no single feature map output"))),
                    },
                })
                .collect::<Result<_>>()?;
            let mut init = ParamInit::for_layer(seed, spec.index);
            let (node, outputs) = build_node(spec, &inputs, nc, input_size, &mut init)
                .map_err(|e| match e {
                    Error::Layer { .. } => e,
                    other => Error::layer(spec.index, other.to_string()),
                })?;
            layers.push(Layer {
                spec: spec.clone(),
                node,
                inputs,
                outputs,
            });
        }
        let mut last_use: Vec<usize> = (0..layers.len()).collect();
        for layer in &layers {
            for s in &layer.spec.from {
                if let Source::Layer(j) = s {
                    last_use[*j] = last_use[*j].max(layer.spec.index);
                }
            }
        }
        Ok(ModelGraph {
            nc,
            input_size,
            seed,
            layers,
            last_use,
        })
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_shape(&self) -> FeatureShape {
        FeatureShape::new(INPUT_CHANNELS, self.input_size, self.input_size)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Shapes produced by the final layer (three scales for a detect head).
    pub fn output_shapes(&self) -> &[FeatureShape] {
        &self.layers.last().expect("graph has layers").outputs
    }

    pub fn detect(&self) -> Option<&Detect> {
        self.layers.iter().rev().find_map(|l| match &l.node {
            Node::Detect(d) => Some(d),
            _ => None,
        })
    }

    pub fn declared_params(&self, counting: BnCounting) -> u64 {
        self.layers.iter().map(|l| l.declared_params(counting)).sum()
    }

    /// Parameter count obtained by walking every allocated tensor.
    pub fn enumerated_params(&self, counting: BnCounting) -> u64 {
        let mut total = 0;
        for l in &self.layers {
            l.visit_params(&mut |role, t| {
                if counting.counts(role) {
                    total += t.numel() as u64;
                }
            });
        }
        total
    }

    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(Layer::macs).sum()
    }

    /// All weight tensors serialised in visiting order.
    pub fn weight_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for l in &self.layers {
            l.visit_params(&mut |_, t| out.extend(t.to_le_bytes()));
        }
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4("forward")?;
        if c != INPUT_CHANNELS || h != self.input_size || w != self.input_size {
            return Err(Error::shape(
                "forward",
                format!(
                    "input is {:?}, expected [N, {INPUT_CHANNELS}, {s}, {s}]",
                    x.shape(),
                    s = self.input_size
                ),
            ));
        }
        Ok(())
    }

    /// Runs the network and returns the final layer's outputs (raw per-scale
    /// head maps for a detector).
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.run(x, None).map(|(out, _)| out)
    }

    /// Like [`forward`](Self::forward) but also returns the output of layer
    /// `capture`.
    pub fn forward_capture(&self, x: &Tensor, capture: usize) -> Result<(Vec<Tensor>, Tensor)> {
        let layer = self
            .layers
            .get(capture)
            .ok_or_else(|| Error::invalid("forward", format!("layer {capture} out of range 0..{}", self.layers.len())))?;
        if layer.outputs.len() != 1 {
            return Err(Error::invalid("forward", format!("layer {capture} has no single feature map output")));
        }
        let (out, captured) = self.run(x, Some(capture))?;
        Ok((out, captured.expect("captured layer ran")))
    }

    fn run(&self, x: &Tensor, capture: Option<usize>) -> Result<(Vec<Tensor>, Option<Tensor>)> {
        self.check_input(x)?;
        let mut slots: Vec<Option<Vec<Tensor>>> = vec![None; self.layers.len()];
        let mut captured = None;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let inputs: Vec<&Tensor> = layer
                .spec
                .from
                .iter()
                .map(|s| match s {
                    Source::Input => x,
                    Source::Layer(j) => &slots[*j].as_ref().expect("producer output retained")[0],
                })
                .collect();
            let out = layer.forward(&inputs).map_err(|e| Error::layer(i, e.to_string()))?;
            if out.iter().any(|t| !t.all_finite()) {
                return Err(Error::NonFinite { index: i });
            }
            if capture == Some(i) {
                captured = Some(out[0].clone());
            }
            slots[i] = Some(out);
            for s in &layer.spec.from {
                if let Source::Layer(j) = s {
                    if self.last_use[*j] == i && *j != last {
                        slots[*j] = None;
                    }
                }
            }
        }
        let out = slots[last].take().expect("final layer ran");
        Ok((out, captured))
    }
}

fn build_node(
    spec: &LayerSpec,
    inputs: &[FeatureShape],
    nc: usize,
    input_size: usize,
    init: &mut ParamInit,
) -> Result<(Node, Vec<FeatureShape>)> {
    let index = spec.index;
    let single = |node: Node, shape: FeatureShape| Ok((node, vec![shape]));
    match spec.op {
        LayerOp::Upsample { scale } => {
            let s = inputs[0];
            single(Node::Upsample(scale), FeatureShape::new(s.c, s.h * scale, s.w * scale))
        }
        LayerOp::Concat | LayerOp::WeightedConcat => {
            let first = inputs[0];
            if let Some(bad) = inputs.iter().find(|s| (s.h, s.w) != (first.h, first.w)) {
                return Err(Error::layer(index, format!("cannot concat {bad} with {first}: spatial sizes differ")));
            }
            let c = inputs.iter().map(|s| s.c).sum();
            let node = if spec.op == LayerOp::Concat {
                Node::Concat
            } else {
                Node::Fusion {
                    weights: Tensor::full([inputs.len()], 1.0),
                    add: false,
                }
            };
            single(node, FeatureShape::new(c, first.h, first.w))
        }
        LayerOp::WeightedAdd => {
            let first = inputs[0];
            if let Some(bad) = inputs.iter().find(|s| **s != first) {
                return Err(Error::layer(index, format!("cannot sum {bad} with {first}: shapes differ")));
            }
            single(
                Node::Fusion {
                    weights: Tensor::full([inputs.len()], 1.0),
                    add: true,
                },
                first,
            )
        }
        LayerOp::Detect => {
            if inputs.len() != DETECT_STRIDES.len() {
                return Err(Error::layer(index, format!("detect head needs 3 scales, got {}", inputs.len())));
            }
            for (s, stride) in inputs.iter().zip(DETECT_STRIDES) {
                if s.h != input_size / stride || s.w != input_size / stride {
                    return Err(Error::layer(
                        index,
                        format!("detect input {s} is not at stride {stride} of a {input_size} input"),
                    ));
                }
            }
            let channels: Vec<usize> = inputs.iter().map(|s| s.c).collect();
            let d = Detect::new(nc, &channels, init)?;
            let outs = d.out_shapes(inputs)?;
            Ok((Node::Detect(d), outs))
        }
        op => {
            let mut shape = inputs[0];
            let mut units = Vec::with_capacity(spec.n);
            // C3 variants consume `n` internally; other blocks are stacked.
            let copies = if matches!(op, LayerOp::C3 { .. }) { 1 } else { spec.n };
            for _ in 0..copies {
                let unit = make_unit(op, shape.c, spec.n, init)?;
                shape = unit.block().out_shape(shape)?;
                units.push(unit);
            }
            single(Node::Stack(units), shape)
        }
    }
}

fn make_unit(op: LayerOp, c1: usize, n: usize, init: &mut ParamInit) -> Result<Unit> {
    Ok(match op {
        LayerOp::Conv { c2, k, s, p, g } => Unit::Conv(ConvBlock::new(c1, c2, k, s, p, g, Activation::Silu, init)?),
        LayerOp::GhostConv { c2, k, s } => Unit::Ghost(GhostConv::new(c1, c2, k, s, Activation::Silu, init)?),
        LayerOp::C3 { c2, kind, shortcut } => Unit::C3(C3::new(c1, c2, n, kind, shortcut, init)?),
        LayerOp::GhostBottleneck { c2, k, s } => Unit::GhostBottleneck(GhostBottleneck::new(c1, c2, k, s, init)?),
        LayerOp::Sppf { c2, k } => Unit::Sppf(Sppf::new(c1, c2, k, init)?),
        LayerOp::CoordAtt { c2, reduction } => {
            if c2 != c1 {
                return Err(Error::invalid(
                    "coord_att",
                    format!("output channels {c2} must equal input channels {c1}"),
                ));
            }
            Unit::CoordAtt(CoordAtt::new(c1, reduction, init)?)
        }
        LayerOp::Upsample { .. } | LayerOp::Concat | LayerOp::WeightedConcat | LayerOp::WeightedAdd | LayerOp::Detect => {
            unreachable!("handled by build_node")
        }
    })
}
