use rand::Rng;

use crate::error::{Error, Result};

use super::init::uniform_tensor;
use super::{Gradients, Module, Tensor};

/// 2-D convolution over a `[C, H, W]` input with zero padding.
///
/// FLOPs: `2 * Kh * Kw * Cin * Cout * Hout * Wout`; bias additions are not
/// counted.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Conv2d {
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(&[out_channels]),
            stride: stride.max(1),
            padding,
        }
    }

    /// Kaiming-uniform style initialization.
    pub fn init<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        let fan_in = self.in_channels() * self.kernel_h() * self.kernel_w();
        let bound = (6.0 / fan_in as f64).sqrt();
        self.weight = uniform_tensor(self.weight.shape(), bound, rng);
        self
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    fn kernel_h(&self) -> usize {
        self.weight.shape()[2]
    }

    fn kernel_w(&self) -> usize {
        self.weight.shape()[3]
    }

    fn geometry(&self, input_shape: &[usize]) -> Result<(usize, usize, usize, usize, usize)> {
        let [c, h, w] = input_shape[..] else {
            return Err(Error::shape(
                "conv2d",
                format!("expected [C, H, W], got {input_shape:?}"),
            ));
        };
        if c != self.in_channels() {
            return Err(Error::shape(
                "conv2d",
                format!("input channels: expected {}, got {c}", self.in_channels()),
            ));
        }
        let (kh, kw) = (self.kernel_h(), self.kernel_w());
        if h + 2 * self.padding < kh {
            return Err(Error::shape(
                "conv2d",
                format!("height {h} smaller than kernel {kh}"),
            ));
        }
        if w + 2 * self.padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!("width {w} smaller than kernel {kw}"),
            ));
        }
        let ho = (h + 2 * self.padding - kh) / self.stride + 1;
        let wo = (w + 2 * self.padding - kw) / self.stride + 1;
        Ok((c, h, w, ho, wo))
    }
}

impl Module for Conv2d {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (cin, h, w, ho, wo) = self.geometry(input.shape())?;
        let cout = self.out_channels();
        let (kh, kw) = (self.kernel_h(), self.kernel_w());
        let (s, p) = (self.stride as isize, self.padding as isize);
        let x = input.data();
        let wt = self.weight.data();
        let mut out = vec![0.0; cout * ho * wo];
        for o in 0..cout {
            let b = self.bias.data()[o];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b;
                    for i in 0..cin {
                        for a in 0..kh {
                            let iy = oy as isize * s + a as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = (i * h + iy as usize) * w;
                            let wrow = ((o * cin + i) * kh + a) * kw;
                            for bcol in 0..kw {
                                let ix = ox as isize * s + bcol as isize - p;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += wt[wrow + bcol] * x[row + ix as usize];
                            }
                        }
                    }
                    out[(o * ho + oy) * wo + ox] = acc;
                }
            }
        }
        Tensor::new(vec![cout, ho, wo], out)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let (cin, h, w, ho, wo) = self.geometry(input.shape())?;
        let cout = self.out_channels();
        upstream.expect_shape("conv2d backward", &[cout, ho, wo])?;
        let (kh, kw) = (self.kernel_h(), self.kernel_w());
        let (s, p) = (self.stride as isize, self.padding as isize);
        let x = input.data();
        let wt = self.weight.data();
        let g = upstream.data();
        let mut dw = vec![0.0; wt.len()];
        let mut db = vec![0.0; cout];
        let mut dx = vec![0.0; x.len()];
        for o in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let go = g[(o * ho + oy) * wo + ox];
                    if go == 0.0 {
                        continue;
                    }
                    db[o] += go;
                    for i in 0..cin {
                        for a in 0..kh {
                            let iy = oy as isize * s + a as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = (i * h + iy as usize) * w;
                            let wrow = ((o * cin + i) * kh + a) * kw;
                            for bcol in 0..kw {
                                let ix = ox as isize * s + bcol as isize - p;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                dw[wrow + bcol] += go * x[row + ix as usize];
                                dx[row + ix as usize] += go * wt[wrow + bcol];
                            }
                        }
                    }
                }
            }
        }
        Ok(Gradients {
            params: vec![
                Tensor::new(self.weight.shape().to_vec(), dw)?,
                Tensor::new(vec![cout], db)?,
            ],
            input: Tensor::new(input.shape().to_vec(), dx)?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        let (cin, _, _, ho, wo) = self.geometry(input_shape)?;
        Ok(2 * (self.kernel_h() * self.kernel_w() * cin * self.out_channels() * ho * wo) as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        let (_, _, _, ho, wo) = self.geometry(input_shape)?;
        Ok(vec![self.out_channels(), ho, wo])
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straightforward nested-loop convolution used as an oracle; also counts
    /// scalar multiplications.
    fn naive_conv(
        x: &[f64],
        (cin, h, w): (usize, usize, usize),
        k: &[f64],
        (cout, kh, kw): (usize, usize, usize),
        stride: usize,
    ) -> (Vec<f64>, u64) {
        let ho = (h - kh) / stride + 1;
        let wo = (w - kw) / stride + 1;
        let mut out = vec![0.0; cout * ho * wo];
        let mut mults = 0u64;
        for o in 0..cout {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut acc = 0.0;
                    for i in 0..cin {
                        for a in 0..kh {
                            for b in 0..kw {
                                acc += k[((o * cin + i) * kh + a) * kw + b]
                                    * x[(i * h + y * stride + a) * w + xx * stride + b];
                                mults += 1;
                            }
                        }
                    }
                    out[(o * ho + y) * wo + xx] = acc;
                }
            }
        }
        (out, mults)
    }

    #[test]
    fn ones_kernel_on_ones_image() {
        let mut conv = Conv2d::new(1, 1, 3, 1, 0);
        conv.weight = Tensor::full(&[1, 1, 3, 3], 1.0);
        let out = conv.forward(&Tensor::full(&[1, 5, 5], 1.0)).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn flops_of_worked_example() {
        // 1 -> 2 channels, 3x3 kernel, 8x8 input without padding gives 6x6.
        let conv = Conv2d::new(1, 2, 3, 1, 0);
        assert_eq!(conv.output_shape(&[1, 8, 8]).unwrap(), vec![2, 6, 6]);
        assert_eq!(conv.flops(&[1, 8, 8]).unwrap(), 1296);
    }

    #[test]
    fn matches_naive_oracle_values_and_flops() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(cin, cout, k, h, w, s) in &[
            (1, 2, 3, 8, 8, 1),
            (2, 3, 3, 7, 9, 2),
            (3, 1, 1, 4, 5, 1),
            (2, 2, 2, 6, 6, 2),
        ] {
            let conv = Conv2d::new(cin, cout, k, s, 0).init(&mut rng);
            let x = uniform_tensor(&[cin, h, w], 1.0, &mut rng);
            let (expected, mults) =
                naive_conv(x.data(), (cin, h, w), conv.weight.data(), (cout, k, k), s);
            let got = conv.forward(&x).unwrap();
            for (a, b) in got.data().iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(conv.flops(&[cin, h, w]).unwrap(), 2 * mults);
        }
    }

    #[test]
    fn shape_error_names_dimension() {
        let conv = Conv2d::new(2, 1, 3, 1, 1);
        let err = conv.forward(&Tensor::zeros(&[3, 4, 4])).unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
    }
}
