use rand::Rng;

use crate::detection::AttentionConfig;
use crate::error::{Error, Result};
use crate::numerics::{Conv2d, GlobalAvgPool, Gradients, GruCell, Layer, Module, Relu, Sequential, Tensor};
use crate::video::{resize_backward, resize_tensor};

/// Pixel standardization applied before the first conv.
pub const PIXEL_MEAN: f64 = 0.5;
pub const PIXEL_STD: f64 = 0.25;

/// Frame encoder: stride-2 3x3 conv blocks with ReLU, an optional attention
/// insert after each block, and a global average pool.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCnn {
    pub body: Sequential,
    in_channels: usize,
    feature_dim: usize,
}

impl FeatureCnn {
    pub fn new(in_channels: usize, widths: &[usize], attention: Option<&AttentionConfig>) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) || in_channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid cnn widths {widths:?} for {in_channels} input channels"
            )));
        }
        let mut body = Sequential::new();
        let mut cin = in_channels;
        for (b, &w) in widths.iter().enumerate() {
            body = body
                .push(format!("conv{b}"), Layer::Conv2d(Conv2d::new(cin, w, 3, 2, 1)))
                .push(format!("relu{b}"), Layer::Relu(Relu));
            if let Some(att) = attention {
                let cfg = AttentionConfig {
                    channels: w,
                    reduction: att.reduction.min(w).max(1),
                    ..att.clone()
                };
                body.layers.extend(cfg.layers(&format!("att{b}"))?);
            }
            cin = w;
        }
        body = body.push("pool", Layer::GlobalAvgPool(GlobalAvgPool));
        Ok(FeatureCnn {
            body,
            in_channels,
            feature_dim: cin,
        })
    }

    pub fn init<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        for (_, layer) in &mut self.body.layers {
            *layer = std::mem::replace(layer, Layer::Relu(Relu)).init(rng);
        }
        self
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Resizes `pixels` to `resolution` and standardizes them; the input
    /// the body sees.
    pub fn prepare(&self, pixels: &Tensor, resolution: usize) -> Result<Tensor> {
        Ok(resize_for(pixels, resolution)?.map(|v| (v - PIXEL_MEAN) / PIXEL_STD))
    }

    /// Resizes `pixels` to `resolution` and encodes it.
    pub fn features(&self, pixels: &Tensor, resolution: usize) -> Result<Tensor> {
        self.body.forward(&self.prepare(pixels, resolution)?)
    }

    /// Encoder FLOPs at a square input of side `resolution`. Resizing and
    /// standardization are input preparation and are not counted.
    pub fn flops_at(&self, resolution: usize) -> Result<u64> {
        self.body.flops(&[self.in_channels, resolution, resolution])
    }
}

/// `pixels` resized to a square of side `resolution`; unchanged if already
/// that size.
pub fn resize_for(pixels: &Tensor, resolution: usize) -> Result<Tensor> {
    let (_, h, w) = pixels.chw()?;
    if h == resolution && w == resolution {
        Ok(pixels.clone())
    } else {
        resize_tensor(pixels, resolution, resolution)
    }
}

/// Feature extraction for one step: CNN feature of the resized frame, then
/// one GRU update.
pub fn step_features(
    pixels: &Tensor,
    resolution: usize,
    cnn: &FeatureCnn,
    gru: &GruCell,
    h_prev: &Tensor,
) -> Result<(Tensor, u64)> {
    let x = cnn.features(pixels, resolution)?;
    let h = gru.step(&x, h_prev)?;
    Ok((h, step_cost(cnn, gru, resolution)?))
}

/// FLOPs of one feature-extraction step at `resolution`.
pub fn step_cost(cnn: &FeatureCnn, gru: &GruCell, resolution: usize) -> Result<u64> {
    Ok(cnn.flops_at(resolution)? + gru.step_flops())
}

/// One feature-extraction step as a module of the raw frame, for gradient
/// checking: resize, encode, advance the GRU from a fixed `h_prev`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub cnn: FeatureCnn,
    pub gru: GruCell,
    pub h_prev: Tensor,
    pub resolution: usize,
}

impl Module for StepFunction {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        step_features(input, self.resolution, &self.cnn, &self.gru, &self.h_prev).map(|(h, _)| h)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let prepared = self.cnn.prepare(input, self.resolution)?;
        let acts = self.cnn.body.forward_trace(&prepared)?;
        let x = acts.last().expect("nonempty");
        let (gru_grads, dx, _) = self.gru.step_backward(x, &self.h_prev, upstream)?;
        let cnn_grads = self.cnn.body.backward_from_trace(&acts, &dx)?;
        let dprep = cnn_grads.input.scale(1.0 / PIXEL_STD);
        let input_grad = if prepared.shape() == input.shape() {
            dprep
        } else {
            resize_backward(input.shape(), &dprep)?
        };
        Ok(Gradients {
            params: cnn_grads.params.into_iter().chain(gru_grads).collect(),
            input: input_grad,
        })
    }

    fn flops(&self, _input_shape: &[usize]) -> Result<u64> {
        step_cost(&self.cnn, &self.gru, self.resolution)
    }

    fn output_shape(&self, _input_shape: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![self.gru.hidden()])
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let cnn = self.cnn.body.named_params().into_iter().map(|(n, t)| (format!("cnn.{n}"), t));
        let gru = self.gru.named_params().into_iter().map(|(n, t)| (format!("gru.{n}"), t));
        cnn.chain(gru).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.cnn.body.params_mut();
        v.extend(self.gru.params_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_keeps_zero_state() {
        let cnn = FeatureCnn::new(1, &[4, 8], None).unwrap();
        let gru = GruCell::new(8, 6);
        let frame = Tensor::full(&[1, 16, 16], 0.7);
        let (h, _) = step_features(&frame, 12, &cnn, &gru, &Tensor::zeros(&[6])).unwrap();
        assert_eq!(h, Tensor::zeros(&[6]));
    }

    #[test]
    fn smaller_resolution_is_cheaper() {
        let cnn = FeatureCnn::new(1, &[8, 16, 32], None).unwrap();
        assert!(cnn.flops_at(12).unwrap() < cnn.flops_at(32).unwrap());
    }
}
