use rand::Rng;

use crate::error::{Error, Result};

use super::init::uniform_tensor;
use super::{Gradients, Module, Tensor};

/// Fully connected layer `y = W x + b` on a rank-1 input.
///
/// FLOPs: `2 * in * out`; the bias add is not counted.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn init<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        let bound = (1.0 / self.inputs() as f64).sqrt();
        self.weight = uniform_tensor(self.weight.shape(), bound, rng);
        self
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check(&self, input_shape: &[usize]) -> Result<()> {
        match input_shape {
            [n] if *n == self.inputs() => Ok(()),
            [n] => Err(Error::shape(
                "dense",
                format!("input features: expected {}, got {n}", self.inputs()),
            )),
            _ => Err(Error::shape(
                "dense",
                format!("expected rank-1 input, got {input_shape:?}"),
            )),
        }
    }
}

impl Module for Dense {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check(input.shape())?;
        let n = self.inputs();
        let w = self.weight.data();
        let x = input.data();
        let out = self
            .bias
            .data()
            .iter()
            .enumerate()
            .map(|(o, &b)| b + w[o * n..(o + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        Ok(Tensor::from_vec(out))
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        self.check(input.shape())?;
        upstream.expect_shape("dense backward", &[self.outputs()])?;
        let n = self.inputs();
        let x = input.data();
        let g = upstream.data();
        let w = self.weight.data();
        let mut dw = vec![0.0; w.len()];
        let mut dx = vec![0.0; n];
        for (o, &go) in g.iter().enumerate() {
            for i in 0..n {
                dw[o * n + i] = go * x[i];
                dx[i] += w[o * n + i] * go;
            }
        }
        Ok(Gradients {
            params: vec![
                Tensor::new(self.weight.shape().to_vec(), dw)?,
                upstream.clone(),
            ],
            input: Tensor::from_vec(dx),
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        self.check(input_shape)?;
        Ok(2 * (self.inputs() * self.outputs()) as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        self.check(input_shape)?;
        Ok(vec![self.outputs()])
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let mut d = Dense::new(3, 3);
        d.weight = Tensor::new(
            vec![3, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let v = Tensor::from_vec(vec![0.3, -1.5, 2.0]);
        assert_eq!(d.forward(&v).unwrap(), v);
    }

    #[test]
    fn linear_map_gradients() {
        let mut d = Dense::new(2, 2);
        d.weight = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = Tensor::from_vec(vec![5.0, 6.0]);
        let g = Tensor::from_vec(vec![1.0, -1.0]);
        let grads = d.backward(&x, &g).unwrap();
        // g x^T
        assert_eq!(grads.params[0].data(), &[5.0, 6.0, -5.0, -6.0]);
        // W^T g
        assert_eq!(grads.input.data(), &[1.0 - 3.0, 2.0 - 4.0]);
        assert_eq!(grads.params[1].data(), g.data());
    }

    #[test]
    fn flops_dense_4_to_3() {
        assert_eq!(Dense::new(4, 3).flops(&[4]).unwrap(), 24);
    }
}
