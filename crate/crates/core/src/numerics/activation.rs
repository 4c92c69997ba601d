//! Parameter-free element-wise and normalizing layers.
//!
//! FLOPs conventions: ReLU and sigmoid cost 1 per element; softmax costs 3
//! per element (exponential, running sum, division).

use crate::error::{Error, Result};

use super::{Gradients, Module, Tensor};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of softmax: `p * (g - <g, p>)`.
pub fn softmax_vjp(probs: &[f64], upstream: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(upstream).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(upstream)
        .map(|(p, g)| p * (g - dot))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Relu;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sigmoid;

/// Softmax over a rank-1 input.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Softmax;

impl Module for Relu {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(input.map(|x| x.max(0.0)))
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        upstream.expect_shape("relu backward", input.shape())?;
        Ok(Gradients {
            params: vec![],
            input: input.zip_map(upstream, |x, g| if x > 0.0 { g } else { 0.0 })?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        Ok(input_shape.iter().product::<usize>() as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        Ok(input_shape.to_vec())
    }
}

impl Module for Sigmoid {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(input.map(sigmoid))
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        upstream.expect_shape("sigmoid backward", input.shape())?;
        Ok(Gradients {
            params: vec![],
            input: input.zip_map(upstream, |x, g| {
                let s = sigmoid(x);
                g * s * (1.0 - s)
            })?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        Ok(input_shape.iter().product::<usize>() as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        Ok(input_shape.to_vec())
    }
}

impl Softmax {
    fn check(shape: &[usize]) -> Result<()> {
        if shape.len() != 1 {
            return Err(Error::shape(
                "softmax",
                format!("expected rank-1 input, got {shape:?}"),
            ));
        }
        Ok(())
    }
}

impl Module for Softmax {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Self::check(input.shape())?;
        Ok(Tensor::from_vec(softmax(input.data())))
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        Self::check(input.shape())?;
        upstream.expect_shape("softmax backward", input.shape())?;
        let p = softmax(input.data());
        Ok(Gradients {
            params: vec![],
            input: Tensor::from_vec(softmax_vjp(&p, upstream.data())),
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        Self::check(input_shape)?;
        Ok(3 * input_shape[0] as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        Self::check(input_shape)?;
        Ok(input_shape.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = Softmax.forward(&Tensor::zeros(&[4])).unwrap();
        assert_eq!(p.data(), &[0.25; 4]);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let g = Sigmoid
            .backward(&Tensor::zeros(&[1]), &Tensor::full(&[1], 1.0))
            .unwrap();
        assert_eq!(g.input.data(), &[0.25]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
