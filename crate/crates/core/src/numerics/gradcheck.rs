//! Central finite-difference gradient checking.

use crate::error::{Error, Result};

use super::{Module, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Gradients below this magnitude are compared absolutely; FD noise at step
/// 1e-5 is around 1e-10, so this floor keeps near-zero entries meaningful.
const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of a scalar function at every coordinate of `x`.
pub fn numeric_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest relative error between an analytic gradient and finite
/// differences of `f` at `x`.
pub fn max_relative_error(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
) -> f64 {
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    numeric_gradient(f, x, FD_STEP)
        .iter()
        .zip(analytic)
        .map(|(&n, &a)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub params: Vec<ParamCheck>,
    pub input_rel_error: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.worst() < self.tolerance
    }

    pub fn worst(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(self.input_rel_error, f64::max)
    }
}

/// Scalar loss over a module's output, returning the loss and its gradient
/// with respect to that output.
pub type LossFn<'a> = &'a dyn Fn(&Tensor) -> (f64, Tensor);

fn eval_loss<M: Module>(module: &M, input: &Tensor, loss: LossFn) -> Result<f64> {
    let (l, _) = loss(&module.forward(input)?);
    if !l.is_finite() {
        return Err(Error::NonFinite(format!("gradcheck loss {l}")));
    }
    Ok(l)
}

/// Compares `module.backward` against central finite differences of
/// `loss(module.forward(input))` for every parameter and the input.
pub fn gradcheck<M: Module + Clone>(module: &M, input: &Tensor, loss: LossFn) -> Result<GradcheckReport> {
    eval_loss(module, input, loss)?;
    let out = module.forward(input)?;
    let (_, upstream) = loss(&out);
    let grads = module.backward(input, &upstream)?;

    let names: Vec<String> = module.named_params().into_iter().map(|(n, _)| n).collect();
    let mut probe = module.clone();
    let mut params = Vec::with_capacity(names.len());
    for (idx, name) in names.into_iter().enumerate() {
        let n = probe.params_mut()[idx].len();
        let mut worst = 0.0f64;
        for k in 0..n {
            let orig = probe.params_mut()[idx].data()[k];
            probe.params_mut()[idx].data_mut()[k] = orig + FD_STEP;
            let up = eval_loss(&probe, input, loss)?;
            probe.params_mut()[idx].data_mut()[k] = orig - FD_STEP;
            let down = eval_loss(&probe, input, loss)?;
            probe.params_mut()[idx].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grads.params[idx].data()[k], numeric));
        }
        params.push(ParamCheck {
            name,
            max_rel_error: worst,
        });
    }

    let shape = input.shape().to_vec();
    let mut failure = None;
    let mut f = |x: &[f64]| {
        let t = Tensor::new(shape.clone(), x.to_vec()).expect("same shape");
        match eval_loss(module, &t, loss) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let input_rel_error = max_relative_error(&mut f, input.data(), grads.input.data());
    if let Some(e) = failure {
        return Err(e);
    }

    Ok(GradcheckReport {
        params,
        input_rel_error,
        tolerance: GRADCHECK_TOLERANCE,
    })
}

/// `0.5 * sum(w_i * y_i^2)` with fixed pseudo-random weights, so every
/// output coordinate contributes a distinct gradient.
pub fn weighted_square_loss(out: &Tensor) -> (f64, Tensor) {
    let weights: Vec<f64> = (0..out.len())
        .map(|i| 0.5 + ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    let loss = out
        .data()
        .iter()
        .zip(&weights)
        .map(|(y, w)| 0.5 * w * y * y)
        .sum();
    let grad = out
        .data()
        .iter()
        .zip(&weights)
        .map(|(y, w)| w * y)
        .collect();
    (loss, Tensor::new(out.shape().to_vec(), grad).expect("same shape"))
}
