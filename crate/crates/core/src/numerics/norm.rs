use crate::error::{Error, Result};

use super::{Gradients, Module, Tensor};

pub const GROUP_NORM_EPS: f64 = 1e-5;

/// Group normalization over the channel axis of a `[C]` or `[C, H, W]`
/// input, with a learnable per-channel scale and shift.
///
/// FLOPs: 7 per element (mean 1, variance 3, normalize 1, affine 2).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm {
    pub groups: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl GroupNorm {
    pub fn new(groups: usize, channels: usize) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(Error::InvalidArgument(format!(
                "group norm: {channels} channels not divisible into {groups} groups"
            )));
        }
        Ok(GroupNorm {
            groups,
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            eps: GROUP_NORM_EPS,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Returns `(channels, spatial)` for a supported input shape.
    fn layout(&self, shape: &[usize]) -> Result<(usize, usize)> {
        let (c, s) = match shape {
            [c] => (*c, 1),
            [c, h, w] => (*c, h * w),
            _ => {
                return Err(Error::shape(
                    "group norm",
                    format!("expected [C] or [C, H, W], got {shape:?}"),
                ))
            }
        };
        if c != self.channels() {
            return Err(Error::shape(
                "group norm",
                format!("channels: expected {}, got {c}", self.channels()),
            ));
        }
        Ok((c, s))
    }

    /// Normalized values `x_hat` and per-group inverse standard deviations.
    fn normalize(&self, input: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let (c, s) = self.layout(input.shape())?;
        let per_group = c / self.groups * s;
        let x = input.data();
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let chunk = &x[g * per_group..(g + 1) * per_group];
            let mean = chunk.iter().sum::<f64>() / per_group as f64;
            let var = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per_group as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            for (dst, v) in xhat[g * per_group..(g + 1) * per_group].iter_mut().zip(chunk) {
                *dst = (v - mean) * is;
            }
            inv_std.push(is);
        }
        Ok((xhat, inv_std))
    }
}

impl Module for GroupNorm {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (_, s) = self.layout(input.shape())?;
        let (mut y, _) = self.normalize(input)?;
        for (i, v) in y.iter_mut().enumerate() {
            let ch = i / s;
            *v = *v * self.gamma.data()[ch] + self.beta.data()[ch];
        }
        Tensor::new(input.shape().to_vec(), y)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let (c, s) = self.layout(input.shape())?;
        upstream.expect_shape("group norm backward", input.shape())?;
        let (xhat, inv_std) = self.normalize(input)?;
        let g = upstream.data();
        let gamma = self.gamma.data();
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        let mut dxhat = vec![0.0; g.len()];
        for i in 0..g.len() {
            let ch = i / s;
            dgamma[ch] += g[i] * xhat[i];
            dbeta[ch] += g[i];
            dxhat[i] = g[i] * gamma[ch];
        }
        let per_group = c / self.groups * s;
        let m = per_group as f64;
        let mut dx = vec![0.0; g.len()];
        for grp in 0..self.groups {
            let range = grp * per_group..(grp + 1) * per_group;
            let sum_d: f64 = dxhat[range.clone()].iter().sum();
            let sum_dx: f64 = range.clone().map(|i| dxhat[i] * xhat[i]).sum();
            for i in range {
                dx[i] = inv_std[grp] / m * (m * dxhat[i] - sum_d - xhat[i] * sum_dx);
            }
        }
        Ok(Gradients {
            params: vec![Tensor::from_vec(dgamma), Tensor::from_vec(dbeta)],
            input: Tensor::new(input.shape().to_vec(), dx)?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        let (c, s) = self.layout(input_shape)?;
        Ok(7 * (c * s) as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        self.layout(input_shape)?;
        Ok(input_shape.to_vec())
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_have_zero_mean_unit_variance() {
        let gn = GroupNorm::new(2, 4).unwrap();
        let x = Tensor::from_vec(vec![1.0, 3.0, 10.0, 20.0]);
        let y = gn.forward(&x).unwrap();
        let d = y.data();
        assert!((d[0] + d[1]).abs() < 1e-12);
        assert!((d[2] + d[3]).abs() < 1e-12);
        assert!((d[0] * d[0] + d[1] * d[1] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn indivisible_channels_rejected() {
        assert!(GroupNorm::new(3, 8).is_err());
    }
}
