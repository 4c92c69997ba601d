use crate::error::{Error, Result};

use super::{Gradients, Module, Tensor};

/// `[C, H, W] -> [C]` mean over spatial positions. FLOPs: one add per
/// input element (`C * H * W`); the final division is not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlobalAvgPool;

/// Max pooling with a square window. FLOPs: `K*K - 1` comparisons per
/// output element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPool {
    pub kernel: usize,
    pub stride: usize,
}

impl Module for GlobalAvgPool {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (c, h, w) = input.chw()?;
        let n = (h * w) as f64;
        let out = input
            .data()
            .chunks(h * w)
            .map(|plane| plane.iter().sum::<f64>() / n)
            .collect::<Vec<_>>();
        debug_assert_eq!(out.len(), c);
        Ok(Tensor::from_vec(out))
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let (c, h, w) = input.chw()?;
        upstream.expect_shape("global avg pool backward", &[c])?;
        let n = (h * w) as f64;
        let dx = upstream
            .data()
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g / n, h * w))
            .collect();
        Ok(Gradients {
            params: vec![],
            input: Tensor::new(vec![c, h, w], dx)?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        Ok(input_shape.iter().product::<usize>() as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        match input_shape {
            [c, _, _] => Ok(vec![*c]),
            _ => Err(Error::shape(
                "global avg pool",
                format!("expected [C, H, W], got {input_shape:?}"),
            )),
        }
    }
}

impl MaxPool {
    pub fn new(kernel: usize, stride: usize) -> Self {
        MaxPool {
            kernel: kernel.max(1),
            stride: stride.max(1),
        }
    }

    fn geometry(&self, shape: &[usize]) -> Result<(usize, usize, usize, usize, usize)> {
        let [c, h, w] = shape[..] else {
            return Err(Error::shape(
                "max pool",
                format!("expected [C, H, W], got {shape:?}"),
            ));
        };
        if h < self.kernel || w < self.kernel {
            return Err(Error::shape(
                "max pool",
                format!("spatial size {h}x{w} smaller than window {}", self.kernel),
            ));
        }
        let ho = (h - self.kernel) / self.stride + 1;
        let wo = (w - self.kernel) / self.stride + 1;
        Ok((c, h, w, ho, wo))
    }

    /// Flat input index of each output's maximum (first occurrence on ties).
    fn argmax(&self, input: &Tensor) -> Result<(Vec<usize>, Vec<usize>)> {
        let (c, h, w, ho, wo) = self.geometry(input.shape())?;
        let x = input.data();
        let mut idx = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = (ch * h + oy * self.stride) * w + ox * self.stride;
                    for a in 0..self.kernel {
                        for b in 0..self.kernel {
                            let i = (ch * h + oy * self.stride + a) * w + ox * self.stride + b;
                            if x[i] > x[best] {
                                best = i;
                            }
                        }
                    }
                    idx.push(best);
                }
            }
        }
        Ok((idx, vec![c, ho, wo]))
    }
}

impl Module for MaxPool {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (idx, shape) = self.argmax(input)?;
        Tensor::new(shape, idx.iter().map(|&i| input.data()[i]).collect())
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let (idx, shape) = self.argmax(input)?;
        upstream.expect_shape("max pool backward", &shape)?;
        let mut dx = vec![0.0; input.len()];
        for (&i, &g) in idx.iter().zip(upstream.data()) {
            dx[i] += g;
        }
        Ok(Gradients {
            params: vec![],
            input: Tensor::new(input.shape().to_vec(), dx)?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        let (c, _, _, ho, wo) = self.geometry(input_shape)?;
        Ok(((self.kernel * self.kernel - 1) * c * ho * wo) as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let (c, _, _, ho, wo) = self.geometry(input_shape)?;
        Ok(vec![c, ho, wo])
    }
}
