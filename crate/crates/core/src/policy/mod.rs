//! The policy head, its action/resolution spaces and Gumbel sampling.

mod gumbel;
mod network;

pub use gumbel::{
    gumbel_max, gumbel_max_with_noise, gumbel_softmax, gumbel_softmax_backward,
    gumbel_softmax_with_noise, sample_gumbel, straight_through, TemperatureSchedule,
};
pub use network::PolicyNet;

use crate::error::{Error, Result};

/// Fuse counts and their paired input resolutions. Index `j` maps action
/// `actions[j]` to resolution `resolutions[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    actions: Vec<usize>,
    resolutions: Vec<usize>,
}

impl ActionSpace {
    pub fn new(actions: Vec<usize>, resolutions: Vec<usize>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidArgument("action space is empty".into()));
        }
        if actions.len() != resolutions.len() {
            return Err(Error::InvalidArgument(format!(
                "{} actions but {} resolutions",
                actions.len(),
                resolutions.len()
            )));
        }
        if actions[0] == 0 || actions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "actions must be positive and strictly increasing: {actions:?}"
            )));
        }
        if resolutions[resolutions.len() - 1] < 2 || resolutions.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "resolutions must be at least 2 and strictly decreasing: {resolutions:?}"
            )));
        }
        Ok(ActionSpace {
            actions,
            resolutions,
        })
    }

    /// `{1, 3, 5, 7}` at `{224, 168, 112, 84}`.
    pub fn full_default() -> Self {
        Self::new(vec![1, 3, 5, 7], vec![224, 168, 112, 84]).expect("valid")
    }

    /// `{1, 3, 5, 7}` at `{32, 24, 16, 12}`, sized for 32x32 frames.
    pub fn desk_default() -> Self {
        Self::new(vec![1, 3, 5, 7], vec![32, 24, 16, 12]).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions
    }

    pub fn action(&self, index: usize) -> usize {
        self.actions[index]
    }

    pub fn resolution(&self, index: usize) -> usize {
        self.resolutions[index]
    }

    /// Resolution of the finest action; used for station points and the
    /// first episode step.
    pub fn full_resolution(&self) -> usize {
        self.resolutions[0]
    }
}

impl Default for ActionSpace {
    fn default() -> Self {
        Self::desk_default()
    }
}

/// Policy output for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub logits: Vec<f64>,
    /// `softmax(logits)`.
    pub probs: Vec<f64>,
    /// Gumbel-Softmax relaxed sample, when drawn.
    pub relaxed: Option<Vec<f64>>,
    /// Gumbel-Max (or argmax) choice, when drawn.
    pub chosen: Option<usize>,
}

impl ActionDistribution {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let probs = crate::numerics::softmax(&logits);
        ActionDistribution {
            logits,
            probs,
            relaxed: None,
            chosen: None,
        }
    }

    /// Distribution with the given probabilities (logits are their logs).
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "probabilities must be strictly positive: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        let probs: Vec<f64> = probs.iter().map(|p| p / sum).collect();
        Ok(ActionDistribution {
            logits: probs.iter().map(|p| p.ln()).collect(),
            probs,
            relaxed: None,
            chosen: None,
        })
    }

    /// Index of the largest probability, ties toward the smaller index.
    pub fn argmax(&self) -> usize {
        argmax_first(&self.probs)
    }
}

pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
