use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Dense, GroupNorm, Layer, Module, Sequential, Tensor};

use super::ActionDistribution;

/// Policy head: group normalization over `[h : station feature]` followed
/// by a fully connected layer; the softmax is applied in
/// [`ActionDistribution::from_logits`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub head: Sequential,
    hidden_dim: usize,
    station_dim: usize,
}

impl PolicyNet {
    pub fn new(hidden_dim: usize, station_dim: usize, actions: usize, groups: usize) -> Result<Self> {
        let input = hidden_dim + station_dim;
        let norm = GroupNorm::new(groups, input)?;
        Ok(PolicyNet {
            head: Sequential::new()
                .push("norm", Layer::GroupNorm(norm))
                .push("fc", Layer::Dense(Dense::new(input, actions))),
            hidden_dim,
            station_dim,
        })
    }

    pub fn init<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        if let Some((_, Layer::Dense(fc))) = self.head.layers.get_mut(1) {
            *fc = fc.clone().init(rng);
            // Small initial logits keep the starting distribution near uniform.
            fc.weight = fc.weight.scale(0.1);
        }
        self
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_dim + self.station_dim
    }

    pub fn num_actions(&self) -> usize {
        self.head.output_shape(&[self.input_dim()]).map(|s| s[0]).unwrap_or(0)
    }

    pub fn input(&self, hidden: &Tensor, station: &Tensor) -> Result<Tensor> {
        if hidden.shape() != [self.hidden_dim] {
            return Err(Error::shape(
                "policy",
                format!("hidden: expected [{}], got {:?}", self.hidden_dim, hidden.shape()),
            ));
        }
        if station.shape() != [self.station_dim] {
            return Err(Error::shape(
                "policy",
                format!("station feature: expected [{}], got {:?}", self.station_dim, station.shape()),
            ));
        }
        Ok(Tensor::concat(&[hidden, station]))
    }

    pub fn forward(&self, hidden: &Tensor, station: &Tensor) -> Result<ActionDistribution> {
        let x = self.input(hidden, station)?;
        let logits = self.head.forward(&x)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("policy logits".into()));
        }
        Ok(ActionDistribution::from_logits(logits.into_data()))
    }

    /// Parameter and input gradients given `dL/dlogits`.
    pub fn backward(&self, input: &Tensor, dlogits: &[f64]) -> Result<crate::numerics::Gradients> {
        self.head.backward(input, &Tensor::from_vec(dlogits.to_vec()))
    }

    /// Normalization, dense layer and softmax.
    pub fn flops(&self) -> u64 {
        self.head.flops(&[self.input_dim()]).unwrap_or(0) + 3 * self.num_actions() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_uniform_distribution() {
        let p = PolicyNet::new(8, 8, 4, 8).unwrap();
        let d = p
            .forward(&Tensor::from_vec((0..8).map(f64::from).collect()), &Tensor::full(&[8], 0.3))
            .unwrap();
        assert_eq!(d.probs, vec![0.25; 4]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = PolicyNet::new(8, 8, 4, 8).unwrap();
        assert!(p.forward(&Tensor::zeros(&[7]), &Tensor::zeros(&[8])).is_err());
    }
}
