use crate::error::Result;

use super::Tensor;

/// Gradients returned by a backward pass: one tensor per parameter (in
/// `named_params` order) and the gradient with respect to the input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

/// A differentiable map from one tensor to another.
///
/// `backward` recomputes whatever forward intermediates it needs from
/// `input`, so implementations hold no per-call state and can be shared
/// across threads.
pub trait Module {
    fn forward(&self, input: &Tensor) -> Result<Tensor>;

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients>;

    /// Floating-point operations for one forward pass on `input_shape`.
    fn flops(&self, input_shape: &[usize]) -> Result<u64>;

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>>;

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }
}
