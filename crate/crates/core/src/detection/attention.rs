//! CBAM, ECA and shuffle attention as insertable blocks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::attention::{ChannelAttention, Eca, ShuffleAttention, SpatialAttention};
use crate::numerics::{Gradients, Layer, Module, Sequential, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Cbam,
    Eca,
    Shuffle,
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionKind::Cbam => "cbam",
            AttentionKind::Eca => "eca",
            AttentionKind::Shuffle => "shuffle",
        })
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbam" => Ok(AttentionKind::Cbam),
            "eca" => Ok(AttentionKind::Eca),
            "shuffle" | "sa" => Ok(AttentionKind::Shuffle),
            other => Err(Error::InvalidArgument(format!(
                "unknown attention kind {other:?} (cbam, eca, shuffle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConfig {
    pub kind: AttentionKind,
    pub channels: usize,
    /// CBAM bottleneck reduction ratio.
    pub reduction: usize,
    /// CBAM spatial kernel.
    pub spatial_kernel: usize,
    /// ECA kernel; `None` uses the adaptive size.
    pub eca_kernel: Option<usize>,
    pub shuffle_groups: usize,
}

impl AttentionConfig {
    pub fn new(kind: AttentionKind, channels: usize) -> Self {
        AttentionConfig {
            kind,
            channels,
            reduction: 16,
            spatial_kernel: 7,
            eca_kernel: Some(3),
            shuffle_groups: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AttentionKind::Eca => {
                if self.eca_kernel.is_some_and(|k| k % 2 == 0) {
                    return Err(Error::InvalidArgument("eca kernel must be odd".into()));
                }
            }
            AttentionKind::Shuffle => {
                if self.shuffle_groups == 0 || self.channels % (2 * self.shuffle_groups) != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "{} channels not divisible by 2 x {} shuffle groups",
                        self.channels, self.shuffle_groups
                    )));
                }
            }
            AttentionKind::Cbam => {
                if self.spatial_kernel % 2 == 0 {
                    return Err(Error::InvalidArgument("cbam spatial kernel must be odd".into()));
                }
            }
        }
        Ok(())
    }

    /// Layers implementing this block, named under `prefix`. Weights start
    /// at zero, so every gate is 0.5; see [`Layer::init`].
    pub fn layers(&self, prefix: &str) -> Result<Vec<(String, Layer)>> {
        self.validate()?;
        Ok(match self.kind {
            AttentionKind::Cbam => {
                let cbam = Cbam::new(self.channels, self.reduction, self.spatial_kernel)?;
                vec![
                    (format!("{prefix}.ca"), Layer::ChannelAttention(cbam.channel)),
                    (format!("{prefix}.sa"), Layer::SpatialAttention(cbam.spatial)),
                ]
            }
            AttentionKind::Eca => {
                let k = self.eca_kernel.unwrap_or_else(|| Eca::adaptive_kernel(self.channels));
                vec![(format!("{prefix}.eca"), Layer::Eca(Eca::new(self.channels, k)?))]
            }
            AttentionKind::Shuffle => vec![(
                format!("{prefix}.shuffle"),
                Layer::ShuffleAttention(ShuffleAttention::new(self.channels, self.shuffle_groups)?),
            )],
        })
    }

    /// The block as a standalone randomly initialized network.
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Sequential> {
        Ok(Sequential {
            layers: self
                .layers("att")?
                .into_iter()
                .map(|(n, l)| (n, l.init(rng)))
                .collect(),
        })
    }
}

/// Channel attention followed by spatial attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Cbam {
    pub channel: ChannelAttention,
    pub spatial: SpatialAttention,
}

impl Cbam {
    pub fn new(channels: usize, reduction: usize, spatial_kernel: usize) -> Result<Self> {
        Ok(Cbam {
            channel: ChannelAttention::new(channels, reduction),
            spatial: SpatialAttention::new(spatial_kernel)?,
        })
    }

    pub fn init<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        Cbam {
            channel: self.channel.init(rng),
            spatial: self.spatial.init(rng),
        }
    }
}

impl Module for Cbam {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.spatial.forward(&self.channel.forward(input)?)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let mid = self.channel.forward(input)?;
        let gs = self.spatial.backward(&mid, upstream)?;
        let gc = self.channel.backward(input, &gs.input)?;
        Ok(Gradients {
            params: gc.params.into_iter().chain(gs.params).collect(),
            input: gc.input,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        Ok(self.channel.flops(input_shape)? + self.spatial.flops(input_shape)?)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        self.channel.output_shape(input_shape)
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let ca = self.channel.named_params().into_iter().map(|(n, t)| (format!("channel.{n}"), t));
        let sa = self.spatial.named_params().into_iter().map(|(n, t)| (format!("spatial.{n}"), t));
        ca.chain(sa).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.channel.params_mut();
        v.extend(self.spatial.params_mut());
        v
    }
}
