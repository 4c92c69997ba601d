use std::fmt;

use crate::error::{Error, Result};

use super::activation::{Relu, Sigmoid, Softmax};
use super::attention::{ChannelAttention, Eca, ShuffleAttention, SpatialAttention};
use super::conv::Conv2d;
use super::dense::Dense;
use super::gru::GruCell;
use super::norm::GroupNorm;
use super::pool::{GlobalAvgPool, MaxPool};
use super::{Gradients, Module, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2d,
    Dense,
    GroupNorm,
    GruCell,
    GlobalAvgPool,
    MaxPool,
    Softmax,
    Sigmoid,
    Relu,
    ChannelAttention,
    SpatialAttention,
    Eca,
    ShuffleAttention,
}

impl LayerKind {
    pub const ALL: [LayerKind; 13] = [
        LayerKind::Conv2d,
        LayerKind::Dense,
        LayerKind::GroupNorm,
        LayerKind::GruCell,
        LayerKind::GlobalAvgPool,
        LayerKind::MaxPool,
        LayerKind::Softmax,
        LayerKind::Sigmoid,
        LayerKind::Relu,
        LayerKind::ChannelAttention,
        LayerKind::SpatialAttention,
        LayerKind::Eca,
        LayerKind::ShuffleAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Dense => "dense",
            LayerKind::GroupNorm => "groupnorm",
            LayerKind::GruCell => "gru-cell",
            LayerKind::GlobalAvgPool => "global-avg-pool",
            LayerKind::MaxPool => "max-pool",
            LayerKind::Softmax => "softmax",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Relu => "relu",
            LayerKind::ChannelAttention => "channel-attention",
            LayerKind::SpatialAttention => "spatial-attention",
            LayerKind::Eca => "eca",
            LayerKind::ShuffleAttention => "shuffle-attention",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Closed set of layer kinds usable in a [`Sequential`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Dense(Dense),
    GroupNorm(GroupNorm),
    GruCell(GruCell),
    GlobalAvgPool(GlobalAvgPool),
    MaxPool(MaxPool),
    Softmax(Softmax),
    Sigmoid(Sigmoid),
    Relu(Relu),
    ChannelAttention(ChannelAttention),
    SpatialAttention(SpatialAttention),
    Eca(Eca),
    ShuffleAttention(ShuffleAttention),
}

macro_rules! dispatch {
    ($self:expr, $inner:ident => $body:expr) => {
        match $self {
            Layer::Conv2d($inner) => $body,
            Layer::Dense($inner) => $body,
            Layer::GroupNorm($inner) => $body,
            Layer::GruCell($inner) => $body,
            Layer::GlobalAvgPool($inner) => $body,
            Layer::MaxPool($inner) => $body,
            Layer::Softmax($inner) => $body,
            Layer::Sigmoid($inner) => $body,
            Layer::Relu($inner) => $body,
            Layer::ChannelAttention($inner) => $body,
            Layer::SpatialAttention($inner) => $body,
            Layer::Eca($inner) => $body,
            Layer::ShuffleAttention($inner) => $body,
        }
    };
}

impl Layer {
    /// Randomly initializes the layer's parameters; parameterless layers
    /// and normalization (unit scale, zero shift) are returned unchanged.
    pub fn init<R: rand::Rng + ?Sized>(self, rng: &mut R) -> Layer {
        match self {
            Layer::Conv2d(l) => Layer::Conv2d(l.init(rng)),
            Layer::Dense(l) => Layer::Dense(l.init(rng)),
            Layer::GruCell(l) => Layer::GruCell(l.init(rng)),
            Layer::ChannelAttention(l) => Layer::ChannelAttention(l.init(rng)),
            Layer::SpatialAttention(l) => Layer::SpatialAttention(l.init(rng)),
            Layer::Eca(l) => Layer::Eca(l.init(rng)),
            Layer::ShuffleAttention(l) => Layer::ShuffleAttention(l.init(rng)),
            other => other,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::GroupNorm(_) => LayerKind::GroupNorm,
            Layer::GruCell(_) => LayerKind::GruCell,
            Layer::GlobalAvgPool(_) => LayerKind::GlobalAvgPool,
            Layer::MaxPool(_) => LayerKind::MaxPool,
            Layer::Softmax(_) => LayerKind::Softmax,
            Layer::Sigmoid(_) => LayerKind::Sigmoid,
            Layer::Relu(_) => LayerKind::Relu,
            Layer::ChannelAttention(_) => LayerKind::ChannelAttention,
            Layer::SpatialAttention(_) => LayerKind::SpatialAttention,
            Layer::Eca(_) => LayerKind::Eca,
            Layer::ShuffleAttention(_) => LayerKind::ShuffleAttention,
        }
    }
}

impl Module for Layer {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let out = dispatch!(self, l => l.forward(input))?;
        if input.is_finite() && !out.is_finite() {
            return Err(Error::NonFinite(format!("{} forward", self.kind())));
        }
        Ok(out)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        dispatch!(self, l => l.backward(input, upstream))
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        dispatch!(self, l => l.flops(input_shape))
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        dispatch!(self, l => l.output_shape(input_shape))
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        dispatch!(self, l => l.named_params())
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        dispatch!(self, l => l.params_mut())
    }
}

/// Named chain of layers applied in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<(String, Layer)>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, name: impl Into<String>, layer: Layer) -> Self {
        self.layers.push((name.into(), layer));
        self
    }

    /// Input to every layer followed by the final output.
    pub fn forward_trace(&self, input: &Tensor) -> Result<Vec<Tensor>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.clone());
        for (_, layer) in &self.layers {
            let next = layer.forward(acts.last().expect("nonempty"))?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Backward pass reusing activations from [`Sequential::forward_trace`].
    pub fn backward_from_trace(&self, acts: &[Tensor], upstream: &Tensor) -> Result<Gradients> {
        let mut grad = upstream.clone();
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for ((_, layer), input) in self.layers.iter().zip(acts).rev() {
            let g = layer.backward(input, &grad)?;
            per_layer.push(g.params);
            grad = g.input;
        }
        per_layer.reverse();
        Ok(Gradients {
            params: per_layer.into_iter().flatten().collect(),
            input: grad,
        })
    }
}

impl Module for Sequential {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.layers
            .iter()
            .try_fold(input.clone(), |x, (_, layer)| layer.forward(&x))
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let acts = self.forward_trace(input)?;
        self.backward_from_trace(&acts, upstream)
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        let mut shape = input_shape.to_vec();
        let mut total = 0;
        for (_, layer) in &self.layers {
            total += layer.flops(&shape)?;
            shape = layer.output_shape(&shape)?;
        }
        Ok(total)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .try_fold(input_shape.to_vec(), |s, (_, layer)| layer.output_shape(&s))
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .flat_map(|(prefix, layer)| {
                layer
                    .named_params()
                    .into_iter()
                    .map(move |(n, t)| (format!("{prefix}.{n}"), t))
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|(_, layer)| layer.params_mut())
            .collect()
    }
}
