use std::fmt;
use std::str::FromStr;

use crate::engine::FlopsLedger;
use crate::error::{Error, Result};
use crate::numerics::{softmax, Dense, Module, Tensor};

/// Default weight of the balance loss.
pub const DEFAULT_BETA: f64 = 0.3;
/// Default weight of the FLOPs loss.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Cross-entropy of `logits` against class `target`, with its gradient
/// with respect to the logits.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("logits {logits:?}")));
    }
    if target >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "class {target} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((lse - logits[target], grad))
}

/// Video classification loss of one final hidden state.
pub fn classification_loss(h_final: &Tensor, label: bool, classifier: &Dense) -> Result<f64> {
    let logits = classifier.forward(h_final)?;
    cross_entropy(logits.data(), label as usize).map(|(l, _)| l)
}

/// Cross-entropy given class probabilities directly (clamped at 1e-12).
pub fn cross_entropy_probs(probs: &[f64], target: usize) -> f64 {
    -probs[target].max(1e-12).ln()
}

/// Per-summand penalty of the balance loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BalanceForm {
    /// `sum_k |u_k - 1/|A||`
    #[default]
    Abs,
    /// `sum_k (u_k - 1/|A|)^2`
    Square,
}

impl fmt::Display for BalanceForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BalanceForm::Abs => "abs",
            BalanceForm::Square => "square",
        })
    }
}

impl FromStr for BalanceForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(BalanceForm::Abs),
            "square" => Ok(BalanceForm::Square),
            _ => Err(Error::InvalidArgument(format!("unknown balance form {s:?} (abs, square)"))),
        }
    }
}

/// Deviation of action usage fractions from uniform.
pub fn balance_loss(usage: &[f64], form: BalanceForm) -> f64 {
    let target = 1.0 / usage.len() as f64;
    usage
        .iter()
        .map(|u| match form {
            BalanceForm::Abs => (u - target).abs(),
            BalanceForm::Square => (u - target).powi(2),
        })
        .sum()
}

/// Gradient of [`balance_loss`] with respect to each usage fraction. The
/// absolute value uses subgradient 0 at the kink.
pub fn balance_grad(usage: &[f64], form: BalanceForm) -> Vec<f64> {
    let target = 1.0 / usage.len() as f64;
    usage
        .iter()
        .map(|u| {
            let d = u - target;
            match form {
                BalanceForm::Abs if d == 0.0 => 0.0,
                BalanceForm::Abs => d.signum(),
                BalanceForm::Square => 2.0 * d,
            }
        })
        .collect()
}

/// Mean per-step feature-extraction cost relative to one full-resolution
/// step.
pub fn flops_loss(ledger: &FlopsLedger, normalizer: u64) -> Result<f64> {
    if normalizer == 0 {
        return Err(Error::InvalidArgument("zero FLOPs normalizer".into()));
    }
    Ok(ledger.mean_per_step() / normalizer as f64)
}

/// Loss components and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub l_c: f64,
    pub l_b: f64,
    pub l_g: f64,
    pub total: f64,
    pub beta: f64,
    pub gamma: f64,
}

pub fn total_loss(l_c: f64, l_b: f64, l_g: f64, beta: f64, gamma: f64) -> Result<LossReport> {
    if ![l_c, l_b, l_g].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("loss components {l_c}, {l_b}, {l_g}")));
    }
    Ok(LossReport {
        l_c,
        l_b,
        l_g,
        total: l_c + beta * l_b + gamma * l_g,
        beta,
        gamma,
    })
}

impl LossReport {
    /// Component-wise mean of several reports with the same weights.
    pub fn mean(reports: &[LossReport]) -> LossReport {
        let Some(first) = reports.first() else {
            return LossReport::default();
        };
        let n = reports.len() as f64;
        let avg = |f: fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let (l_c, l_b, l_g) = (avg(|r| r.l_c), avg(|r| r.l_b), avg(|r| r.l_g));
        LossReport {
            l_c,
            l_b,
            l_g,
            total: l_c + first.beta * l_b + first.gamma * l_g,
            beta: first.beta,
            gamma: first.gamma,
        }
    }
}
