use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

use crate::video::Frame;

/// Fuses a clip into one frame: `lambda * first + (1 - lambda) * last`.
/// A single-frame clip is returned unchanged. The fused frame is labelled
/// positive if any clip frame is.
pub fn clip_mixup(clip: &[Frame], lambda: f64) -> Result<Frame> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "mixup lambda {lambda} outside [0, 1]"
        )));
    }
    let (first, last) = match clip {
        [] => return Err(Error::InvalidArgument("empty clip".into())),
        [only] => return Ok(only.clone()),
        [first, .., last] => (first, last),
    };
    let pixels = first
        .pixels()
        .zip_map(last.pixels(), |a, b| lambda * a + (1.0 - lambda) * b)?;
    let label = clip
        .iter()
        .filter_map(|f| f.label)
        .reduce(|a, b| a || b);
    Ok(Frame::from_parts(pixels, label))
}

/// Draws `lambda ~ Beta(alpha, alpha)` as `X / (X + Y)` with
/// `X, Y ~ Gamma(alpha, 1)`.
pub fn sample_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "mixup alpha must be positive, got {alpha}"
        )));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let x = gamma.sample(rng);
    let y = gamma.sample(rng);
    if x + y == 0.0 {
        return Ok(0.5);
    }
    Ok(x / (x + y))
}
