use crate::error::{Error, Result};

/// Probability clamp used by both classification losses.
pub const PROB_EPS: f64 = 1e-12;

fn clamp_prob(x: f64) -> f64 {
    x.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Weighted binary cross-entropy, averaged over the batch. Predictions are
/// clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(pred: &[f64], target: &[f64], weight: f64) -> Result<f64> {
    bce_loss_grad(pred, target, weight).map(|(l, _)| l)
}

/// BCE and its gradient with respect to the predictions. The gradient is
/// zero where the clamp is active.
pub fn bce_loss_grad(pred: &[f64], target: &[f64], weight: f64) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "bce needs equal nonempty inputs, got {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bce input".into()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&x, &y) in pred.iter().zip(target) {
        let xc = clamp_prob(x);
        loss -= weight * (y * xc.ln() + (1.0 - y) * (1.0 - xc).ln());
        let g = if xc == x {
            -weight * (y / xc - (1.0 - y) / (1.0 - xc)) / n
        } else {
            0.0
        };
        grad.push(g);
    }
    Ok((loss / n, grad))
}

/// Distribution focal loss for a continuous target `y` between two adjacent
/// bins `y_n <= y <= y_{n+1}` with predicted probabilities `s_n`, `s_n1`:
///
/// `-((y_{n+1} - y) ln s_n + (y - y_n) ln s_{n+1}) / (y_{n+1} - y_n)`
///
/// Some write-ups print this loss as the log of a ratio that is identically
/// 1; the form here is the usual one. With unit bin width the divisor is 1.
pub fn dfl_loss(s_n: f64, s_n1: f64, y: f64, y_n: f64, y_n1: f64) -> Result<f64> {
    dfl_loss_grad(s_n, s_n1, y, y_n, y_n1).map(|(l, _)| l)
}

/// DFL and its gradient with respect to `(s_n, s_n1)`.
pub fn dfl_loss_grad(s_n: f64, s_n1: f64, y: f64, y_n: f64, y_n1: f64) -> Result<(f64, [f64; 2])> {
    if !(y_n < y_n1) {
        return Err(Error::InvalidArgument(format!("bins must satisfy y_n < y_n+1, got {y_n}, {y_n1}")));
    }
    if !(y_n..=y_n1).contains(&y) {
        return Err(Error::InvalidArgument(format!("target {y} outside [{y_n}, {y_n1}]")));
    }
    if !s_n.is_finite() || !s_n1.is_finite() {
        return Err(Error::NonFinite("dfl probabilities".into()));
    }
    let width = y_n1 - y_n;
    let (wl, wr) = ((y_n1 - y) / width, (y - y_n) / width);
    let (a, b) = (clamp_prob(s_n), clamp_prob(s_n1));
    let loss = -(wl * a.ln() + wr * b.ln());
    let ga = if a == s_n { -wl / a } else { 0.0 };
    let gb = if b == s_n1 { -wr / b } else { 0.0 };
    Ok((loss, [ga, gb]))
}
