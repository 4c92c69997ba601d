use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::activation::softmax_vjp;
use crate::numerics::softmax;

use super::{argmax_first, ActionDistribution};

/// Standard Gumbel noise `-ln(-ln U)`, `U ~ Uniform(0, 1)` open interval.
pub fn sample_gumbel<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

fn perturbed(dist: &ActionDistribution, noise: &[f64]) -> Vec<f64> {
    assert_eq!(dist.probs.len(), noise.len(), "noise length mismatch");
    dist.probs
        .iter()
        .zip(noise)
        .map(|(p, g)| p.ln() + g)
        .collect()
}

/// `argmax(log p + G)` for a given noise draw; ties resolve to the smaller
/// index.
pub fn gumbel_max_with_noise(dist: &ActionDistribution, noise: &[f64]) -> usize {
    argmax_first(&perturbed(dist, noise))
}

pub fn gumbel_max<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> usize {
    let noise = sample_gumbel(dist.probs.len(), rng);
    gumbel_max_with_noise(dist, &noise)
}

/// `softmax((log p + G) / tau)` for a given noise draw.
pub fn gumbel_softmax_with_noise(dist: &ActionDistribution, noise: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let z: Vec<f64> = perturbed(dist, noise).iter().map(|v| v / tau).collect();
    Ok(softmax(&z))
}

pub fn gumbel_softmax<R: Rng + ?Sized>(dist: &ActionDistribution, tau: f64, rng: &mut R) -> Result<Vec<f64>> {
    let noise = sample_gumbel(dist.probs.len(), rng);
    gumbel_softmax_with_noise(dist, &noise, tau)
}

/// Gradient of a loss with respect to the policy logits, given the relaxed
/// sample and the loss gradient with respect to it.
///
/// `log softmax(z)` differs from `z` by a constant, so the relaxed sample
/// is `softmax((z + G) / tau)` and its Jacobian is the softmax Jacobian
/// scaled by `1 / tau`.
pub fn gumbel_softmax_backward(relaxed: &[f64], upstream: &[f64], tau: f64) -> Vec<f64> {
    softmax_vjp(relaxed, upstream)
        .into_iter()
        .map(|v| v / tau)
        .collect()
}

/// Draws one shared noise realization and returns `(hard index, relaxed
/// sample)`. The forward pass uses the one-hot of the hard index; gradients
/// go through the relaxed sample.
pub fn straight_through<R: Rng + ?Sized>(
    dist: &ActionDistribution,
    tau: f64,
    rng: &mut R,
) -> Result<(usize, Vec<f64>)> {
    let noise = sample_gumbel(dist.probs.len(), rng);
    Ok((
        gumbel_max_with_noise(dist, &noise),
        gumbel_softmax_with_noise(dist, &noise, tau)?,
    ))
}

/// Linear temperature annealing from `initial` to `floor` over
/// `total_steps`, constant at `floor` afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureSchedule {
    pub initial: f64,
    pub floor: f64,
    pub total_steps: usize,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            initial: 5.0,
            floor: 0.01,
            total_steps: 1000,
        }
    }
}

impl TemperatureSchedule {
    pub fn anneal(&self, step: usize) -> f64 {
        if self.total_steps == 0 || step >= self.total_steps {
            return self.floor;
        }
        let frac = step as f64 / self.total_steps as f64;
        self.initial + (self.floor - self.initial) * frac
    }
}
