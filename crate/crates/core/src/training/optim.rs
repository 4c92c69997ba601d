use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// SGD with momentum and L2 weight decay:
/// `v = momentum * v + (g + weight_decay * p)`, `p -= lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            if p.shape() != g.shape() || v.shape() != g.shape() {
                return Err(Error::shape(
                    "sgd",
                    format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape()),
                ));
            }
            for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = self.momentum * *vv + gv + self.weight_decay * *pv;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}

/// Sums per-sample gradient lists element-wise, in order.
pub(crate) fn sum_grads(per_sample: Vec<Vec<Tensor>>) -> Option<Vec<Tensor>> {
    let mut iter = per_sample.into_iter();
    let mut acc = iter.next()?;
    for g in iter {
        for (a, b) in acc.iter_mut().zip(&g) {
            a.add_assign(b).expect("gradient shapes agree");
        }
    }
    Some(acc)
}
