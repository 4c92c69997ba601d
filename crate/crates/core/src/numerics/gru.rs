use rand::Rng;

use crate::error::{Error, Result};

use super::activation::sigmoid;
use super::init::uniform_tensor;
use super::{Gradients, Module, Tensor};

/// Single GRU cell with reset, update and candidate gates:
///
/// ```text
/// r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
/// z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
///
/// Gate rows are stacked `[r; z; n]`. As a [`Module`] the input is the
/// concatenation `[x : h]` and the output is `h'`.
///
/// FLOPs: `2 * 3H * (In + H)` for the two matrix products plus `11 * H` for
/// gate arithmetic (three pre-activation sums, the reset product, three
/// nonlinearities, four for the final blend).
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
}

struct GruActivations {
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn h + b_hn`
    gh_n: Vec<f64>,
}

fn matvec(w: &[f64], cols: usize, x: &[f64], bias: &[f64]) -> Vec<f64> {
    bias.iter()
        .enumerate()
        .map(|(o, &b)| b + w[o * cols..(o + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

impl GruCell {
    pub fn new(input: usize, hidden: usize) -> Self {
        GruCell {
            w_ih: Tensor::zeros(&[3 * hidden, input]),
            w_hh: Tensor::zeros(&[3 * hidden, hidden]),
            b_ih: Tensor::zeros(&[3 * hidden]),
            b_hh: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn init<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        let bound = 1.0 / (self.hidden() as f64).sqrt();
        self.w_ih = uniform_tensor(self.w_ih.shape(), bound, rng);
        self.w_hh = uniform_tensor(self.w_hh.shape(), bound, rng);
        self.b_ih = uniform_tensor(self.b_ih.shape(), bound, rng);
        self.b_hh = uniform_tensor(self.b_hh.shape(), bound, rng);
        self
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    /// Advances the cell by one step.
    pub fn step(&self, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        self.check_step(x, h)?;
        let acts = self.activations(x.data(), h.data());
        Ok(Tensor::from_vec(blend(&acts, h.data())))
    }

    /// Backward for one step; returns `(param grads, dx, dh_prev)`.
    pub fn step_backward(
        &self,
        x: &Tensor,
        h: &Tensor,
        upstream: &Tensor,
    ) -> Result<(Vec<Tensor>, Tensor, Tensor)> {
        self.check_step(x, h)?;
        let hd = self.hidden();
        upstream.expect_shape("gru backward", &[hd])?;
        let (xd, hv, g) = (x.data(), h.data(), upstream.data());
        let GruActivations { r, z, n, gh_n } = self.activations(xd, hv);

        let mut dgi = vec![0.0; 3 * hd];
        let mut dgh = vec![0.0; 3 * hd];
        let mut dh_prev = vec![0.0; hd];
        for k in 0..hd {
            let dz = g[k] * (hv[k] - n[k]);
            let dn = g[k] * (1.0 - z[k]);
            dh_prev[k] = g[k] * z[k];
            let dan = dn * (1.0 - n[k] * n[k]);
            let dr = dan * gh_n[k];
            let dar = dr * r[k] * (1.0 - r[k]);
            let daz = dz * z[k] * (1.0 - z[k]);
            dgi[k] = dar;
            dgh[k] = dar;
            dgi[hd + k] = daz;
            dgh[hd + k] = daz;
            dgi[2 * hd + k] = dan;
            dgh[2 * hd + k] = dan * r[k];
        }

        let ni = self.input_size();
        let mut dw_ih = vec![0.0; 3 * hd * ni];
        let mut dw_hh = vec![0.0; 3 * hd * hd];
        let mut dx = vec![0.0; ni];
        let wih = self.w_ih.data();
        let whh = self.w_hh.data();
        for o in 0..3 * hd {
            for i in 0..ni {
                dw_ih[o * ni + i] = dgi[o] * xd[i];
                dx[i] += wih[o * ni + i] * dgi[o];
            }
            for i in 0..hd {
                dw_hh[o * hd + i] = dgh[o] * hv[i];
                dh_prev[i] += whh[o * hd + i] * dgh[o];
            }
        }
        Ok((
            vec![
                Tensor::new(vec![3 * hd, ni], dw_ih)?,
                Tensor::new(vec![3 * hd, hd], dw_hh)?,
                Tensor::from_vec(dgi),
                Tensor::from_vec(dgh),
            ],
            Tensor::from_vec(dx),
            Tensor::from_vec(dh_prev),
        ))
    }

    pub fn step_flops(&self) -> u64 {
        let (i, h) = (self.input_size() as u64, self.hidden() as u64);
        2 * 3 * h * (i + h) + 11 * h
    }

    fn check_step(&self, x: &Tensor, h: &Tensor) -> Result<()> {
        if x.shape() != [self.input_size()] {
            return Err(Error::shape(
                "gru",
                format!("input size: expected {}, got {:?}", self.input_size(), x.shape()),
            ));
        }
        if h.shape() != [self.hidden()] {
            return Err(Error::shape(
                "gru",
                format!("hidden size: expected {}, got {:?}", self.hidden(), h.shape()),
            ));
        }
        Ok(())
    }

    fn activations(&self, x: &[f64], h: &[f64]) -> GruActivations {
        let hd = self.hidden();
        let gi = matvec(self.w_ih.data(), self.input_size(), x, self.b_ih.data());
        let gh = matvec(self.w_hh.data(), hd, h, self.b_hh.data());
        let r: Vec<f64> = (0..hd).map(|k| sigmoid(gi[k] + gh[k])).collect();
        let z: Vec<f64> = (0..hd).map(|k| sigmoid(gi[hd + k] + gh[hd + k])).collect();
        let gh_n = gh[2 * hd..].to_vec();
        let n = (0..hd)
            .map(|k| (gi[2 * hd + k] + r[k] * gh_n[k]).tanh())
            .collect();
        GruActivations { r, z, n, gh_n }
    }

    fn split(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        let (ni, hd) = (self.input_size(), self.hidden());
        if input.shape() != [ni + hd] {
            return Err(Error::shape(
                "gru",
                format!("expected [x : h] of length {}, got {:?}", ni + hd, input.shape()),
            ));
        }
        let d = input.data();
        Ok((
            Tensor::from_vec(d[..ni].to_vec()),
            Tensor::from_vec(d[ni..].to_vec()),
        ))
    }
}

fn blend(acts: &GruActivations, h: &[f64]) -> Vec<f64> {
    acts.z
        .iter()
        .zip(&acts.n)
        .zip(h)
        .map(|((z, n), hp)| (1.0 - z) * n + z * hp)
        .collect()
}

impl Module for GruCell {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (x, h) = self.split(input)?;
        self.step(&x, &h)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let (x, h) = self.split(input)?;
        let (params, dx, dh) = self.step_backward(&x, &h, upstream)?;
        Ok(Gradients {
            params,
            input: Tensor::concat(&[&dx, &dh]),
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        self.output_shape(input_shape)?;
        Ok(self.step_flops())
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        if input_shape != [self.input_size() + self.hidden()] {
            return Err(Error::shape(
                "gru",
                format!(
                    "expected [x : h] of length {}, got {input_shape:?}",
                    self.input_size() + self.hidden()
                ),
            ));
        }
        Ok(vec![self.hidden()])
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_ih".into(), &self.w_ih),
            ("w_hh".into(), &self.w_hh),
            ("b_ih".into(), &self.b_ih),
            ("b_hh".into(), &self.b_hh),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.b_ih, &mut self.b_hh]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cell_keeps_zero_state() {
        let cell = GruCell::new(3, 4);
        let h = cell
            .step(&Tensor::from_vec(vec![1.0, -2.0, 0.5]), &Tensor::zeros(&[4]))
            .unwrap();
        assert_eq!(h.data(), &[0.0; 4]);
    }

    #[test]
    fn zero_cell_halves_previous_state() {
        // z = sigmoid(0) = 0.5 and n = 0, so h' = 0.5 h.
        let cell = GruCell::new(2, 2);
        let h = cell
            .step(&Tensor::zeros(&[2]), &Tensor::from_vec(vec![1.0, -4.0]))
            .unwrap();
        assert_eq!(h.data(), &[0.5, -2.0]);
    }
}
