//! Attention layers that rescale a `[C, H, W]` feature map by sigmoid gates:
//! CBAM's channel and spatial sub-modules, ECA, and shuffle attention.
//!
//! All of them preserve the input shape. `weights` exposes the gate values
//! (each in `(0, 1)`) for inspection.

use rand::Rng;

use crate::error::{Error, Result};

use super::activation::sigmoid;
use super::conv::Conv2d;
use super::dense::Dense;
use super::init::uniform_tensor;
use super::{Gradients, Module, Tensor};

fn check_channels(context: &'static str, shape: &[usize], channels: usize) -> Result<(usize, usize)> {
    match shape {
        [c, h, w] if *c == channels => Ok((*h, *w)),
        [c, _, _] => Err(Error::shape(
            context,
            format!("channels: expected {channels}, got {c}"),
        )),
        _ => Err(Error::shape(
            context,
            format!("expected [C, H, W], got {shape:?}"),
        )),
    }
}

/// Per-channel average and max over spatial positions, plus the flat index
/// of each channel's maximum (first occurrence).
fn pool_channels(x: &[f64], c: usize, hw: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut avg = Vec::with_capacity(c);
    let mut max = Vec::with_capacity(c);
    let mut arg = Vec::with_capacity(c);
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        avg.push(plane.iter().sum::<f64>() / hw as f64);
        let (i, m) = plane
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, &v)| if v > bm { (i, v) } else { (bi, bm) });
        max.push(m);
        arg.push(ch * hw + i);
    }
    (avg, max, arg)
}

/// CBAM channel attention: `x * sigmoid(MLP(avgpool x) + MLP(maxpool x))`
/// with a shared two-layer bottleneck MLP.
///
/// FLOPs: `3*C*H*W + 8*C*Cr + 2*Cr + 2*C` (both poolings, two MLP passes,
/// the branch sum and sigmoid, then the rescale).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAttention {
    pub fc1: Dense,
    pub fc2: Dense,
}

impl ChannelAttention {
    pub fn new(channels: usize, reduction: usize) -> Self {
        let hidden = (channels / reduction.max(1)).max(1);
        ChannelAttention {
            fc1: Dense::new(channels, hidden),
            fc2: Dense::new(hidden, channels),
        }
    }

    pub fn init<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        self.fc1 = self.fc1.init(rng);
        self.fc2 = self.fc2.init(rng);
        self
    }

    pub fn channels(&self) -> usize {
        self.fc1.inputs()
    }

    fn mlp(&self, v: &Tensor) -> Result<Tensor> {
        let a = self.fc1.forward(v)?;
        self.fc2.forward(&a.map(|x| x.max(0.0)))
    }

    pub fn weights(&self, input: &Tensor) -> Result<Tensor> {
        let (h, w) = check_channels("channel attention", input.shape(), self.channels())?;
        let (avg, max, _) = pool_channels(input.data(), self.channels(), h * w);
        let a = self.mlp(&Tensor::from_vec(avg))?;
        let m = self.mlp(&Tensor::from_vec(max))?;
        Ok(a.zip_map(&m, |p, q| sigmoid(p + q))?)
    }
}

impl Module for ChannelAttention {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let att = self.weights(input)?;
        let hw = input.len() / self.channels();
        let data = input
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * att.data()[i / hw])
            .collect();
        Tensor::new(input.shape().to_vec(), data)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let c = self.channels();
        let (h, w) = check_channels("channel attention", input.shape(), c)?;
        upstream.expect_shape("channel attention backward", input.shape())?;
        let hw = h * w;
        let x = input.data();
        let g = upstream.data();
        let (avg, max, arg) = pool_channels(x, c, hw);
        let att = self.weights(input)?;
        let att = att.data();

        let mut dx: Vec<f64> = (0..x.len()).map(|i| g[i] * att[i / hw]).collect();
        let dpre: Vec<f64> = (0..c)
            .map(|ch| {
                let datt: f64 = (0..hw).map(|k| g[ch * hw + k] * x[ch * hw + k]).sum();
                datt * att[ch] * (1.0 - att[ch])
            })
            .collect();
        let dpre = Tensor::from_vec(dpre);

        let mut grads: Vec<Tensor> = self
            .named_params()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        for (pooled, is_max) in [(avg, false), (max, true)] {
            let v = Tensor::from_vec(pooled);
            let a1 = self.fc1.forward(&v)?;
            let r = a1.map(|x| x.max(0.0));
            let g2 = self.fc2.backward(&r, &dpre)?;
            let da1 = a1.zip_map(&g2.input, |a, d| if a > 0.0 { d } else { 0.0 })?;
            let g1 = self.fc1.backward(&v, &da1)?;
            for (acc, part) in grads.iter_mut().zip(g1.params.iter().chain(&g2.params)) {
                acc.add_assign(part)?;
            }
            for ch in 0..c {
                let dv = g1.input.data()[ch];
                if is_max {
                    dx[arg[ch]] += dv;
                } else {
                    for k in 0..hw {
                        dx[ch * hw + k] += dv / hw as f64;
                    }
                }
            }
        }
        Ok(Gradients {
            params: grads,
            input: Tensor::new(input.shape().to_vec(), dx)?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        let c = self.channels();
        let (h, w) = check_channels("channel attention", input_shape, c)?;
        let cr = self.fc1.outputs();
        Ok((3 * c * h * w + 8 * c * cr + 2 * cr + 2 * c) as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        check_channels("channel attention", input_shape, self.channels())?;
        Ok(input_shape.to_vec())
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("fc1.weight".into(), &self.fc1.weight),
            ("fc1.bias".into(), &self.fc1.bias),
            ("fc2.weight".into(), &self.fc2.weight),
            ("fc2.bias".into(), &self.fc2.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
        ]
    }
}

/// CBAM spatial attention: channel-wise mean and max are stacked into a
/// 2-channel map, convolved (`K x K`, same padding) and passed through a
/// sigmoid to give one gate per spatial position.
///
/// FLOPs: `3*C*H*W + 4*K*K*H*W + H*W`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttention {
    pub conv: Conv2d,
}

impl SpatialAttention {
    pub fn new(kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "spatial attention kernel must be odd, got {kernel}"
            )));
        }
        Ok(SpatialAttention {
            conv: Conv2d::new(2, 1, kernel, 1, kernel / 2),
        })
    }

    pub fn init<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        self.conv = self.conv.init(rng);
        self
    }

    fn kernel(&self) -> usize {
        self.conv.weight.shape()[2]
    }

    /// Stacked `[mean_c; max_c]` map and the argmax channel per position.
    fn pooled(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let (c, h, w) = input.chw()?;
        let hw = h * w;
        let x = input.data();
        let mut data = vec![0.0; 2 * hw];
        let mut arg = vec![0; hw];
        for k in 0..hw {
            let mut best = 0;
            let mut sum = 0.0;
            for ch in 0..c {
                let v = x[ch * hw + k];
                sum += v;
                if v > x[best * hw + k] {
                    best = ch;
                }
            }
            data[k] = sum / c as f64;
            data[hw + k] = x[best * hw + k];
            arg[k] = best;
        }
        Ok((Tensor::new(vec![2, h, w], data)?, arg))
    }

    pub fn weights(&self, input: &Tensor) -> Result<Tensor> {
        let (pooled, _) = Self::pooled(input)?;
        Ok(self.conv.forward(&pooled)?.map(sigmoid))
    }
}

impl Module for SpatialAttention {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let att = self.weights(input)?;
        let hw = att.len();
        let data = input
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * att.data()[i % hw])
            .collect();
        Tensor::new(input.shape().to_vec(), data)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let (c, h, w) = input.chw()?;
        upstream.expect_shape("spatial attention backward", input.shape())?;
        let hw = h * w;
        let x = input.data();
        let g = upstream.data();
        let (pooled, arg) = Self::pooled(input)?;
        let att = self.conv.forward(&pooled)?.map(sigmoid);
        let a = att.data();

        let mut dx: Vec<f64> = (0..x.len()).map(|i| g[i] * a[i % hw]).collect();
        let dpre: Vec<f64> = (0..hw)
            .map(|k| {
                let datt: f64 = (0..c).map(|ch| g[ch * hw + k] * x[ch * hw + k]).sum();
                datt * a[k] * (1.0 - a[k])
            })
            .collect();
        let gconv = self
            .conv
            .backward(&pooled, &Tensor::new(vec![1, h, w], dpre)?)?;
        let dp = gconv.input.data();
        for k in 0..hw {
            for ch in 0..c {
                dx[ch * hw + k] += dp[k] / c as f64;
            }
            dx[arg[k] * hw + k] += dp[hw + k];
        }
        Ok(Gradients {
            params: gconv.params,
            input: Tensor::new(input.shape().to_vec(), dx)?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        let [c, h, w] = input_shape[..] else {
            return Err(Error::shape(
                "spatial attention",
                format!("expected [C, H, W], got {input_shape:?}"),
            ));
        };
        let k = self.kernel();
        Ok((3 * c * h * w + 4 * k * k * h * w + h * w) as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        match input_shape {
            [_, _, _] => Ok(input_shape.to_vec()),
            _ => Err(Error::shape(
                "spatial attention",
                format!("expected [C, H, W], got {input_shape:?}"),
            )),
        }
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("conv.weight".into(), &self.conv.weight),
            ("conv.bias".into(), &self.conv.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.conv.weight, &mut self.conv.bias]
    }
}

/// Efficient channel attention: global average pool, a zero-padded 1-D
/// convolution across the channel vector, sigmoid, channel-wise rescale.
///
/// FLOPs: `2*C*H*W + 2*k*C + C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eca {
    pub weight: Tensor,
    pub bias: Tensor,
    pub channels: usize,
}

impl Eca {
    pub fn new(channels: usize, kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "eca kernel must be odd, got {kernel}"
            )));
        }
        Ok(Eca {
            weight: Tensor::zeros(&[kernel]),
            bias: Tensor::zeros(&[1]),
            channels,
        })
    }

    /// Kernel size from the channel count: nearest odd value to
    /// `(log2(C) + b) / gamma`, with `gamma = 2`, `b = 1`.
    pub fn adaptive_kernel(channels: usize) -> usize {
        let t = (((channels as f64).log2() + 1.0) / 2.0).floor() as usize;
        if t % 2 == 1 {
            t
        } else {
            t + 1
        }
    }

    pub fn init<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        let bound = 1.0 / (self.kernel() as f64).sqrt();
        self.weight = uniform_tensor(self.weight.shape(), bound, rng);
        self
    }

    pub fn kernel(&self) -> usize {
        self.weight.len()
    }

    fn gate_input(&self, pooled: &[f64]) -> Vec<f64> {
        let k = self.kernel() as isize;
        let half = k / 2;
        let c = pooled.len() as isize;
        let wt = self.weight.data();
        (0..c)
            .map(|ch| {
                let mut acc = self.bias.data()[0];
                for j in 0..k {
                    let src = ch + j - half;
                    if (0..c).contains(&src) {
                        acc += wt[j as usize] * pooled[src as usize];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn weights(&self, input: &Tensor) -> Result<Tensor> {
        let (h, w) = check_channels("eca", input.shape(), self.channels)?;
        let (avg, _, _) = pool_channels(input.data(), self.channels, h * w);
        Ok(Tensor::from_vec(
            self.gate_input(&avg).into_iter().map(sigmoid).collect(),
        ))
    }
}

impl Module for Eca {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let att = self.weights(input)?;
        let hw = input.len() / self.channels;
        let data = input
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * att.data()[i / hw])
            .collect();
        Tensor::new(input.shape().to_vec(), data)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let c = self.channels;
        let (h, w) = check_channels("eca", input.shape(), c)?;
        upstream.expect_shape("eca backward", input.shape())?;
        let hw = h * w;
        let x = input.data();
        let g = upstream.data();
        let (avg, _, _) = pool_channels(x, c, hw);
        let att: Vec<f64> = self.gate_input(&avg).into_iter().map(sigmoid).collect();

        let mut dx: Vec<f64> = (0..x.len()).map(|i| g[i] * att[i / hw]).collect();
        let dpre: Vec<f64> = (0..c)
            .map(|ch| {
                let datt: f64 = (0..hw).map(|k| g[ch * hw + k] * x[ch * hw + k]).sum();
                datt * att[ch] * (1.0 - att[ch])
            })
            .collect();

        let k = self.kernel() as isize;
        let half = k / 2;
        let wt = self.weight.data();
        let mut dw = vec![0.0; k as usize];
        let mut davg = vec![0.0; c];
        for ch in 0..c as isize {
            for j in 0..k {
                let src = ch + j - half;
                if (0..c as isize).contains(&src) {
                    dw[j as usize] += dpre[ch as usize] * avg[src as usize];
                    davg[src as usize] += dpre[ch as usize] * wt[j as usize];
                }
            }
        }
        for ch in 0..c {
            for kk in 0..hw {
                dx[ch * hw + kk] += davg[ch] / hw as f64;
            }
        }
        Ok(Gradients {
            params: vec![
                Tensor::from_vec(dw),
                Tensor::from_vec(vec![dpre.iter().sum()]),
            ],
            input: Tensor::new(input.shape().to_vec(), dx)?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        let (h, w) = check_channels("eca", input_shape, self.channels)?;
        let c = self.channels;
        Ok((2 * c * h * w + 2 * self.kernel() * c + c) as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        check_channels("eca", input_shape, self.channels)?;
        Ok(input_shape.to_vec())
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Source channel for each output channel of a channel shuffle: channels are
/// viewed as a `[groups, C / groups]` matrix and transposed.
pub fn shuffle_permutation(channels: usize, groups: usize) -> Result<Vec<usize>> {
    if groups == 0 || channels % groups != 0 {
        return Err(Error::InvalidArgument(format!(
            "{channels} channels not divisible into {groups} groups"
        )));
    }
    let per = channels / groups;
    let mut perm = vec![0; channels];
    for g in 0..groups {
        for i in 0..per {
            perm[i * groups + g] = g * per + i;
        }
    }
    Ok(perm)
}

/// Channel shuffle of a `[C, H, W]` map.
pub fn channel_shuffle(input: &Tensor, groups: usize) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let perm = shuffle_permutation(c, groups)?;
    let hw = h * w;
    let x = input.data();
    let data = perm
        .iter()
        .flat_map(|&src| x[src * hw..(src + 1) * hw].iter().copied())
        .collect();
    Tensor::new(vec![c, h, w], data)
}

/// Shuffle attention. Channels split into `groups`; inside each group the
/// first half is gated by pooled channel statistics and the second half by
/// an instance-normalized spatial gate. Gate parameters are shared across
/// groups. The result is channel-shuffled with two groups so the two
/// branches mix.
///
/// FLOPs: `(C/2) * (2*H*W + 3) + (C/2) * 9*H*W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleAttention {
    pub groups: usize,
    pub channels: usize,
    pub cweight: Tensor,
    pub cbias: Tensor,
    pub sweight: Tensor,
    pub sbias: Tensor,
    pub eps: f64,
}

impl ShuffleAttention {
    pub fn new(channels: usize, groups: usize) -> Result<Self> {
        if groups == 0 || channels % (2 * groups) != 0 {
            return Err(Error::InvalidArgument(format!(
                "shuffle attention: {channels} channels not divisible into {groups} groups of even size"
            )));
        }
        let half = channels / (2 * groups);
        Ok(ShuffleAttention {
            groups,
            channels,
            cweight: Tensor::zeros(&[half]),
            cbias: Tensor::full(&[half], 1.0),
            sweight: Tensor::zeros(&[half]),
            sbias: Tensor::full(&[half], 1.0),
            eps: super::norm::GROUP_NORM_EPS,
        })
    }

    pub fn init<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        for t in [&mut self.cweight, &mut self.sweight] {
            *t = uniform_tensor(t.shape(), 0.5, rng);
        }
        self
    }

    fn half(&self) -> usize {
        self.channels / (2 * self.groups)
    }

    /// `(branch index within half, is_spatial)` for an unshuffled channel.
    fn role(&self, ch: usize) -> (usize, bool) {
        let per_group = self.channels / self.groups;
        let within = ch % per_group;
        let half = self.half();
        if within < half {
            (within, false)
        } else {
            (within - half, true)
        }
    }

    fn instance_norm(plane: &[f64], eps: f64) -> (Vec<f64>, f64) {
        let n = plane.len() as f64;
        let mean = plane.iter().sum::<f64>() / n;
        let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let is = 1.0 / (var + eps).sqrt();
        (plane.iter().map(|v| (v - mean) * is).collect(), is)
    }

    /// Gate values before shuffling, laid out like the input.
    pub fn weights(&self, input: &Tensor) -> Result<Tensor> {
        let (h, w) = check_channels("shuffle attention", input.shape(), self.channels)?;
        let hw = h * w;
        let x = input.data();
        let mut gates = vec![0.0; x.len()];
        for ch in 0..self.channels {
            let plane = &x[ch * hw..(ch + 1) * hw];
            let (j, spatial) = self.role(ch);
            let dst = &mut gates[ch * hw..(ch + 1) * hw];
            if spatial {
                let (xhat, _) = Self::instance_norm(plane, self.eps);
                for (d, v) in dst.iter_mut().zip(xhat) {
                    *d = sigmoid(self.sweight.data()[j] * v + self.sbias.data()[j]);
                }
            } else {
                let mean = plane.iter().sum::<f64>() / hw as f64;
                let a = sigmoid(self.cweight.data()[j] * mean + self.cbias.data()[j]);
                dst.iter_mut().for_each(|d| *d = a);
            }
        }
        Tensor::new(input.shape().to_vec(), gates)
    }
}

impl Module for ShuffleAttention {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let gates = self.weights(input)?;
        let gated = input.zip_map(&gates, |x, a| x * a)?;
        channel_shuffle(&gated, 2)
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let (h, w) = check_channels("shuffle attention", input.shape(), self.channels)?;
        upstream.expect_shape("shuffle attention backward", input.shape())?;
        let hw = h * w;
        let perm = shuffle_permutation(self.channels, 2)?;
        let mut g = vec![0.0; input.len()];
        for (dst, &src) in perm.iter().enumerate() {
            g[src * hw..(src + 1) * hw].copy_from_slice(&upstream.data()[dst * hw..(dst + 1) * hw]);
        }

        let x = input.data();
        let half = self.half();
        let mut dcw = vec![0.0; half];
        let mut dcb = vec![0.0; half];
        let mut dsw = vec![0.0; half];
        let mut dsb = vec![0.0; half];
        let mut dx = vec![0.0; x.len()];
        for ch in 0..self.channels {
            let range = ch * hw..(ch + 1) * hw;
            let plane = &x[range.clone()];
            let gp = &g[range.clone()];
            let (j, spatial) = self.role(ch);
            if spatial {
                let (xhat, is) = Self::instance_norm(plane, self.eps);
                let (sw, sb) = (self.sweight.data()[j], self.sbias.data()[j]);
                let mut dxhat = vec![0.0; hw];
                for k in 0..hw {
                    let a = sigmoid(sw * xhat[k] + sb);
                    dx[ch * hw + k] += gp[k] * a;
                    let dpre = gp[k] * plane[k] * a * (1.0 - a);
                    dsw[j] += dpre * xhat[k];
                    dsb[j] += dpre;
                    dxhat[k] = dpre * sw;
                }
                let m = hw as f64;
                let sum_d: f64 = dxhat.iter().sum();
                let sum_dx: f64 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                for k in 0..hw {
                    dx[ch * hw + k] += is / m * (m * dxhat[k] - sum_d - xhat[k] * sum_dx);
                }
            } else {
                let mean = plane.iter().sum::<f64>() / hw as f64;
                let (cw, cb) = (self.cweight.data()[j], self.cbias.data()[j]);
                let a = sigmoid(cw * mean + cb);
                let datt: f64 = gp.iter().zip(plane).map(|(g, x)| g * x).sum();
                let dpre = datt * a * (1.0 - a);
                dcw[j] += dpre * mean;
                dcb[j] += dpre;
                let dmean = dpre * cw / hw as f64;
                for k in 0..hw {
                    dx[ch * hw + k] += gp[k] * a + dmean;
                }
            }
        }
        Ok(Gradients {
            params: vec![
                Tensor::from_vec(dcw),
                Tensor::from_vec(dcb),
                Tensor::from_vec(dsw),
                Tensor::from_vec(dsb),
            ],
            input: Tensor::new(input.shape().to_vec(), dx)?,
        })
    }

    fn flops(&self, input_shape: &[usize]) -> Result<u64> {
        let (h, w) = check_channels("shuffle attention", input_shape, self.channels)?;
        let hw = h * w;
        let half_c = self.channels / 2;
        Ok((half_c * (2 * hw + 3) + half_c * 9 * hw) as u64)
    }

    fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        check_channels("shuffle attention", input_shape, self.channels)?;
        Ok(input_shape.to_vec())
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("cweight".into(), &self.cweight),
            ("cbias".into(), &self.cbias),
            ("sweight".into(), &self.sweight),
            ("sbias".into(), &self.sbias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.cweight,
            &mut self.cbias,
            &mut self.sweight,
            &mut self.sbias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_two_groups_of_four() {
        assert_eq!(shuffle_permutation(4, 2).unwrap(), vec![0, 2, 1, 3]);
        assert!(shuffle_permutation(6, 4).is_err());
    }

    #[test]
    fn zero_eca_halves_input() {
        let eca = Eca::new(4, 3).unwrap();
        let x = Tensor::full(&[4, 2, 2], 0.8);
        let y = eca.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.4));
    }

    #[test]
    fn adaptive_kernel_is_odd() {
        for c in [4, 16, 64, 256, 512] {
            assert_eq!(Eca::adaptive_kernel(c) % 2, 1);
        }
        assert_eq!(Eca::adaptive_kernel(256), 5);
    }

    #[test]
    fn even_kernels_rejected() {
        assert!(Eca::new(8, 4).is_err());
        assert!(SpatialAttention::new(6).is_err());
        assert!(ShuffleAttention::new(12, 4).is_err());
    }
}
