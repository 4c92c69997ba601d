use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Source taps `(i0, i1, w0, w1)` for each output coordinate along one axis.
fn taps(input: usize, output: usize) -> Vec<(usize, usize, f64, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            let frac = src - i0 as f64;
            (i0, i1, 1.0 - frac, frac)
        })
        .collect()
}

/// Bilinear resize of a `[C, H, W]` tensor with half-pixel centers.
pub fn resize_tensor(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be positive".into()));
    }
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let x = input.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, wy0, wy1) in &ty {
            for &(x0, x1, wx0, wx1) in &tx {
                out.push(
                    wy0 * (wx0 * plane[y0 * w + x0] + wx1 * plane[y0 * w + x1])
                        + wy1 * (wx0 * plane[y1 * w + x0] + wx1 * plane[y1 * w + x1]),
                );
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Gradient of [`resize_tensor`] with respect to its input (the transpose
/// of the interpolation map).
pub fn resize_backward(input_shape: &[usize], upstream: &Tensor) -> Result<Tensor> {
    let [c, h, w] = input_shape[..] else {
        return Err(Error::shape("resize backward", format!("{input_shape:?}")));
    };
    let (uc, out_h, out_w) = upstream.chw()?;
    if uc != c {
        return Err(Error::shape(
            "resize backward",
            format!("channels {uc} vs {c}"),
        ));
    }
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let g = upstream.data();
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        let base = ch * h * w;
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let go = g[(ch * out_h + oy) * out_w + ox];
                dx[base + y0 * w + x0] += go * wy0 * wx0;
                dx[base + y0 * w + x1] += go * wy0 * wx1;
                dx[base + y1 * w + x0] += go * wy1 * wx0;
                dx[base + y1 * w + x1] += go * wy1 * wx1;
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx)
}
