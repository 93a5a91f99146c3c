use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NnError, Real, Tensor};

/// A trainable buffer and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Vec<T>) -> Self {
        let grad = vec![T::ZERO; value.len()];
        Self { value, grad }
    }

    fn uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self::new((0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect())
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::ZERO);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Bias-free convolution over NHWC batches, computed as im2col + GEMM.
/// Weights are laid out `[kh, kw, cin, cout]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Param<T>,
}

pub(crate) struct ConvCache<T> {
    input_shape: [usize; 4],
    cols: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(rng: &mut ChaCha8Rng, in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        let fan_in = kernel * kernel * in_channels;
        Self { in_channels, out_channels, kernel, stride, weight: Param::uniform(rng, fan_in * out_channels, fan_in) }
    }

    pub fn output_size(&self, input: usize) -> Option<usize> {
        (input >= self.kernel).then(|| (input - self.kernel) / self.stride + 1)
    }

    fn dims(&self, shape: &[usize]) -> Result<[usize; 6], NnError> {
        let &[b, h, w, c] = shape else {
            return Err(NnError::Shape(format!("conv expects [B,H,W,C], got {shape:?}")));
        };
        if c != self.in_channels {
            return Err(NnError::Shape(format!("conv expects {} channels, got {c}", self.in_channels)));
        }
        match (self.output_size(h), self.output_size(w)) {
            (Some(oh), Some(ow)) => Ok([b, h, w, c, oh, ow]),
            _ => Err(NnError::Shape(format!("input {h}x{w} smaller than kernel {}", self.kernel))),
        }
    }

    pub(crate) fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>), NnError> {
        let [b, h, w, c, oh, ow] = self.dims(x.shape())?;
        let (k, s) = (self.kernel, self.stride);
        let kk = k * k * c;
        let rows = b * oh * ow;
        let mut cols = vec![T::ZERO; rows * kk];
        let xd = x.data();
        let run = k * c;
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let r = (bi * oh + oy) * ow + ox;
                    for ky in 0..k {
                        let src = ((bi * h + oy * s + ky) * w + ox * s) * c;
                        let dst = r * kk + ky * run;
                        cols[dst..dst + run].copy_from_slice(&xd[src..src + run]);
                    }
                }
            }
        }
        let mut out = vec![T::ZERO; rows * self.out_channels];
        T::gemm(rows, kk, self.out_channels, &cols, false, &self.weight.value, false, &mut out, false);
        Ok((Tensor::from_vec(&[b, oh, ow, self.out_channels], out)?, ConvCache { input_shape: [b, h, w, c], cols }))
    }

    /// Accumulates the weight gradient; returns the input gradient when asked.
    pub(crate) fn backward(&mut self, cache: &ConvCache<T>, dy: &[T], need_input: bool) -> Option<Tensor<T>> {
        let [b, h, w, c] = cache.input_shape;
        let (k, s) = (self.kernel, self.stride);
        let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
        let kk = k * k * c;
        let rows = b * oh * ow;
        T::gemm(kk, rows, self.out_channels, &cache.cols, true, dy, false, &mut self.weight.grad, true);
        if !need_input {
            return None;
        }
        let mut dcols = vec![T::ZERO; rows * kk];
        T::gemm(rows, self.out_channels, kk, dy, false, &self.weight.value, true, &mut dcols, false);
        let mut dx = vec![T::ZERO; b * h * w * c];
        let run = k * c;
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let r = (bi * oh + oy) * ow + ox;
                    for ky in 0..k {
                        let dst = ((bi * h + oy * s + ky) * w + ox * s) * c;
                        let src = r * kk + ky * run;
                        for (d, v) in dx[dst..dst + run].iter_mut().zip(&dcols[src..src + run]) {
                            *d += *v;
                        }
                    }
                }
            }
        }
        Some(Tensor::from_vec(&[b, h, w, c], dx).expect("shape matches"))
    }
}

/// Per-channel batch normalisation over the trailing dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

pub(crate) struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(vec![T::ONE; channels]),
            beta: Param::new(vec![T::ZERO; channels]),
            running_mean: vec![T::ZERO; channels],
            running_var: vec![T::ONE; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    /// Normalises `x` (rows × channels) in place.
    pub(crate) fn forward(&mut self, x: &mut [T], mode: Mode) -> BnCache<T> {
        let c = self.channels();
        let n = x.len() / c;
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0f64; c];
                for row in x.chunks_exact(c) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v.to_f64();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0f64; c];
                for row in x.chunks_exact(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = v.to_f64() - m;
                        *s += d * d;
                    }
                }
                let unbiased = n.max(2) as f64 - 1.0;
                for j in 0..c {
                    let m = self.momentum;
                    self.running_mean[j] = T::of((1.0 - m) * self.running_mean[j].to_f64() + m * mean[j]);
                    self.running_var[j] = T::of((1.0 - m) * self.running_var[j].to_f64() + m * var[j] / unbiased);
                    var[j] /= n as f64;
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.iter().map(|v| v.to_f64()).collect(),
                self.running_var.iter().map(|v| v.to_f64()).collect(),
            ),
        };
        let (xhat, inv_std) = self.normalize(x, &mean, &var, true);
        BnCache { xhat, inv_std, mode }
    }

    /// Eval-mode forward without a cache; mutates only `x`.
    pub(crate) fn forward_eval(&self, x: &mut [T]) {
        let mean: Vec<f64> = self.running_mean.iter().map(|v| v.to_f64()).collect();
        let var: Vec<f64> = self.running_var.iter().map(|v| v.to_f64()).collect();
        self.normalize(x, &mean, &var, false);
    }

    fn normalize(&self, x: &mut [T], mean: &[f64], var: &[f64], keep_xhat: bool) -> (Vec<T>, Vec<T>) {
        let c = self.channels();
        let inv_std: Vec<T> = var.iter().map(|v| T::of(1.0 / (v + self.eps).sqrt())).collect();
        let mean: Vec<T> = mean.iter().map(|&m| T::of(m)).collect();
        let mut xhat = if keep_xhat { vec![T::ZERO; x.len()] } else { Vec::new() };
        for (r, row) in x.chunks_exact_mut(c).enumerate() {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                if keep_xhat {
                    xhat[r * c + j] = h;
                }
                row[j] = self.gamma.value[j] * h + self.beta.value[j];
            }
        }
        (xhat, inv_std)
    }

    /// Accumulates γ/β gradients and rewrites `dy` into the input gradient.
    pub(crate) fn backward(&mut self, cache: &BnCache<T>, dy: &mut [T]) {
        let c = self.channels();
        let n = dy.len() / c;
        let mut sum_dy = vec![T::ZERO; c];
        let mut sum_dy_xhat = vec![T::ZERO; c];
        for (row, hrow) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                sum_dy[j] += row[j];
                sum_dy_xhat[j] += row[j] * hrow[j];
            }
        }
        for j in 0..c {
            self.gamma.grad[j] += sum_dy_xhat[j];
            self.beta.grad[j] += sum_dy[j];
        }
        let nt = T::of(n as f64);
        for (row, hrow) in dy.chunks_exact_mut(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                let g = self.gamma.value[j] * cache.inv_std[j];
                row[j] = match cache.mode {
                    Mode::Train => g * (nt * row[j] - sum_dy[j] - hrow[j] * sum_dy_xhat[j]) / nt,
                    Mode::Eval => g * row[j],
                };
            }
        }
    }
}

pub(crate) fn relu<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

/// Zeroes gradient entries where the ReLU output was clipped.
pub(crate) fn relu_backward<T: Real>(y: &[T], dy: &mut [T]) {
    for (g, v) in dy.iter_mut().zip(y) {
        if *v <= T::ZERO {
            *g = T::ZERO;
        }
    }
}

/// Affine layer `y = x·W + b` with `W` laid out `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(rng: &mut ChaCha8Rng, in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::uniform(rng, in_features * out_features, in_features),
            bias: Param::uniform(rng, out_features, in_features),
        }
    }

    pub(crate) fn forward(&self, x: &[T], batch: usize) -> Result<Vec<T>, NnError> {
        if x.len() != batch * self.in_features {
            return Err(NnError::Shape(format!(
                "linear expects {batch}x{}, got {} values",
                self.in_features,
                x.len()
            )));
        }
        let mut y = Vec::with_capacity(batch * self.out_features);
        for _ in 0..batch {
            y.extend_from_slice(&self.bias.value);
        }
        T::gemm(batch, self.in_features, self.out_features, x, false, &self.weight.value, false, &mut y, true);
        Ok(y)
    }

    pub(crate) fn backward(&mut self, x: &[T], dy: &[T], batch: usize, need_input: bool) -> Option<Vec<T>> {
        T::gemm(self.in_features, batch, self.out_features, x, true, dy, false, &mut self.weight.grad, true);
        for row in dy.chunks_exact(self.out_features) {
            for (g, v) in self.bias.grad.iter_mut().zip(row) {
                *g += *v;
            }
        }
        need_input.then(|| {
            let mut dx = vec![T::ZERO; batch * self.in_features];
            T::gemm(batch, self.out_features, self.in_features, dy, false, &self.weight.value, true, &mut dx, false);
            dx
        })
    }
}
