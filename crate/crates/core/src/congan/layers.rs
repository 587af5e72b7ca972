//! Layers with cached forward state and hand-written backward passes.
//!
//! `forward` caches what `backward` needs; `backward` accumulates parameter
//! gradients (`+=`) and returns the gradient with respect to the input.

use super::param::{join, Param};
use super::spectral::SpectralNorm;
use super::tensor::{gemm, Tensor4};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Cap on im2col buffer size (elements) per GEMM chunk.
const COL_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A weight matrix (`rows` = output channels), optionally spectrally normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    pub w: Param,
    pub sn: Option<SpectralNorm>,
}

impl Weight {
    pub fn new(shape: &[usize], spectral: bool, rng: &mut StreamRng) -> Self {
        let rows = shape[0];
        let fan_in: usize = shape[1..].iter().product();
        let std = (2.0 / (fan_in + rows) as f64).sqrt();
        let w = Param::normal(shape, std, rng);
        let sn = spectral.then(|| {
            let mut sn = SpectralNorm::new(rows, rng);
            sn.refresh(&w.value, 1);
            sn
        });
        Self { w, sn }
    }

    pub fn rows(&self) -> usize {
        self.w.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.w.len() / self.rows()
    }

    /// The weight used in the forward pass: `W / sigma` under spectral norm.
    pub fn effective(&self) -> Vec<f64> {
        match &self.sn {
            Some(sn) => {
                let s = sn.sigma();
                self.w.value.iter().map(|v| v / s).collect()
            }
            None => self.w.value.clone(),
        }
    }

    /// Accumulates `dL/dW` from `dL/dW_eff`, treating sigma as constant.
    pub fn add_grad(&mut self, d_eff: &[f64]) {
        let scale = self.sn.as_ref().map_or(1.0, |sn| 1.0 / sn.sigma());
        for (g, d) in self.w.grad.iter_mut().zip(d_eff) {
            *g += d * scale;
        }
    }

    /// Power-iteration refresh; no-op without spectral norm.
    pub fn refresh_sn(&mut self, iters: usize) -> Option<f64> {
        let w = &self.w.value;
        self.sn.as_mut().map(|sn| sn.refresh(w, iters))
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sn.as_ref().map(|sn| sn.sigma())
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.w);
        if let Some(sn) = &mut self.sn {
            sn.visit(prefix, f);
        }
    }
}

/// Fully connected layer on `n x d x 1 x 1` (any input is flattened per sample).
#[derive(Debug, Clone)]
pub struct Linear {
    pub d_in: usize,
    pub d_out: usize,
    pub weight: Weight,
    pub bias: Option<Param>,
    cache: Option<(Tensor4, Vec<f64>)>,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, bias: bool, spectral: bool, rng: &mut StreamRng) -> Self {
        Self {
            d_in,
            d_out,
            weight: Weight::new(&[d_out, d_in], spectral, rng),
            bias: bias.then(|| Param::filled(&[d_out], 0.0)),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        if x.sample_len() != self.d_in {
            return Err(Error::Argument(format!(
                "linear expects {} inputs per sample, got {}",
                self.d_in,
                x.sample_len()
            )));
        }
        let n = x.n;
        let w = self.weight.effective();
        let mut out = vec![0.0; n * self.d_out];
        if let Some(b) = &self.bias {
            for row in out.chunks_mut(self.d_out) {
                row.copy_from_slice(&b.value);
            }
        }
        gemm(n, self.d_in, self.d_out, &x.data, false, &w, true, 1.0, &mut out);
        self.cache = Some((x.clone(), w));
        Ok(Tensor4::matrix(n, self.d_out, out))
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Tensor4 {
        let (x, w) = self.cache.take().expect("linear backward before forward");
        let n = x.n;
        let mut dw = vec![0.0; self.d_out * self.d_in];
        gemm(self.d_out, n, self.d_in, &dy.data, true, &x.data, false, 0.0, &mut dw);
        self.weight.add_grad(&dw);
        if let Some(b) = &mut self.bias {
            for row in dy.data.chunks(self.d_out) {
                for (g, d) in b.grad.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let mut dx = vec![0.0; n * self.d_in];
        gemm(n, self.d_out, self.d_in, &dy.data, false, &w, false, 0.0, &mut dx);
        Tensor4::from_vec(x.n, x.c, x.h, x.w, dx)
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.weight.visit(prefix, f);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

/// Square-kernel convolution, stride 1, zero "same" padding (`k` odd).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub weight: Weight,
    pub bias: Option<Param>,
    cache: Option<(Tensor4, Vec<f64>)>,
}

fn im2col(x: &Tensor4, first: usize, count: usize, k: usize, col: &mut [f64]) {
    let (c, h, w) = (x.c, x.h, x.w);
    let hw = h * w;
    let pad = (k / 2) as isize;
    let width = count * hw;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let r = (ci * k + ky) * k + kx;
                let row = &mut col[r * width..(r + 1) * width];
                for s in 0..count {
                    let plane = &x.data[((first + s) * c + ci) * hw..((first + s) * c + ci + 1) * hw];
                    let dst = &mut row[s * hw..(s + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad;
                        let out = &mut dst[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            out.iter_mut().for_each(|v| *v = 0.0);
                            continue;
                        }
                        let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                        for (xo, o) in out.iter_mut().enumerate() {
                            let sx = xo as isize + kx as isize - pad;
                            *o = if sx < 0 || sx >= w as isize { 0.0 } else { src[sx as usize] };
                        }
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], first: usize, count: usize, k: usize, dx: &mut Tensor4) {
    let (c, h, w) = (dx.c, dx.h, dx.w);
    let hw = h * w;
    let pad = (k / 2) as isize;
    let width = count * hw;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let r = (ci * k + ky) * k + kx;
                let row = &col[r * width..(r + 1) * width];
                for s in 0..count {
                    let base = ((first + s) * c + ci) * hw;
                    let src = &row[s * hw..(s + 1) * hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for xo in 0..w {
                            let sx = xo as isize + kx as isize - pad;
                            if sx >= 0 && sx < w as isize {
                                dx.data[base + sy as usize * w + sx as usize] += src[y * w + xo];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Conv2d {
    pub fn new(c_in: usize, c_out: usize, k: usize, bias: bool, spectral: bool, rng: &mut StreamRng) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        Self {
            c_in,
            c_out,
            k,
            weight: Weight::new(&[c_out, c_in, k, k], spectral, rng),
            bias: bias.then(|| Param::filled(&[c_out], 0.0)),
            cache: None,
        }
    }

    fn chunk(&self, hw: usize) -> usize {
        (COL_LIMIT / (self.c_in * self.k * self.k * hw).max(1)).max(1)
    }

    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        if x.c != self.c_in {
            return Err(Error::Argument(format!(
                "conv expects {} channels, got {}",
                self.c_in, x.c
            )));
        }
        let w = self.weight.effective();
        let (hw, rows) = (x.h * x.w, self.c_in * self.k * self.k);
        let mut out = Tensor4::zeros(x.n, self.c_out, x.h, x.w);
        let step = self.chunk(hw);
        let mut col = Vec::new();
        let mut y = Vec::new();
        for first in (0..x.n).step_by(step) {
            let count = step.min(x.n - first);
            let width = count * hw;
            col.resize(rows * width, 0.0);
            y.resize(self.c_out * width, 0.0);
            im2col(x, first, count, self.k, &mut col);
            gemm(self.c_out, rows, width, &w, false, &col, false, 0.0, &mut y);
            for s in 0..count {
                for co in 0..self.c_out {
                    let b = self.bias.as_ref().map_or(0.0, |b| b.value[co]);
                    let dst = &mut out.data[((first + s) * self.c_out + co) * hw..][..hw];
                    let src = &y[co * width + s * hw..][..hw];
                    for (d, v) in dst.iter_mut().zip(src) {
                        *d = v + b;
                    }
                }
            }
        }
        self.cache = Some((x.clone(), w));
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Tensor4 {
        let (x, w) = self.cache.take().expect("conv backward before forward");
        let (hw, rows) = (x.h * x.w, self.c_in * self.k * self.k);
        let mut dx = x.zeros_like();
        let mut dw = vec![0.0; self.c_out * rows];
        let step = self.chunk(hw);
        let (mut col, mut dcol, mut dyc) = (Vec::new(), Vec::new(), Vec::new());
        for first in (0..x.n).step_by(step) {
            let count = step.min(x.n - first);
            let width = count * hw;
            col.resize(rows * width, 0.0);
            dcol.resize(rows * width, 0.0);
            dyc.resize(self.c_out * width, 0.0);
            for s in 0..count {
                for co in 0..self.c_out {
                    let src = &dy.data[((first + s) * self.c_out + co) * hw..][..hw];
                    dyc[co * width + s * hw..][..hw].copy_from_slice(src);
                    if let Some(b) = &mut self.bias {
                        b.grad[co] += src.iter().sum::<f64>();
                    }
                }
            }
            im2col(&x, first, count, self.k, &mut col);
            gemm(self.c_out, width, rows, &dyc, false, &col, true, 1.0, &mut dw);
            gemm(rows, self.c_out, width, &w, true, &dyc, false, 0.0, &mut dcol);
            col2im(&dcol, first, count, self.k, &mut dx);
        }
        self.weight.add_grad(&dw);
        dx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.weight.visit(prefix, f);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor4,
    invstd: Vec<f64>,
    gamma: Vec<f64>,
    y: Vec<usize>,
    z: Vec<f64>,
    train: bool,
}

/// Batch normalization whose per-channel scale and offset depend on a class
/// label (embedding tables) and, optionally, a latent chunk (linear maps).
///
/// `gamma[n, c] = gamma_embed[y_n, c] + gamma_z[c, :] . z_n`, likewise `beta`.
/// With one class and no latent this is plain batch norm.
#[derive(Debug, Clone)]
pub struct CondBatchNorm {
    pub channels: usize,
    pub n_classes: usize,
    pub z_dim: usize,
    pub gamma_embed: Param,
    pub beta_embed: Param,
    pub gamma_z: Option<Param>,
    pub beta_z: Option<Param>,
    pub running_mean: Param,
    pub running_var: Param,
    pub eps: f64,
    pub momentum: f64,
    batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    cache: Option<BnCache>,
}

impl CondBatchNorm {
    pub fn new(channels: usize, n_classes: usize, z_dim: usize, rng: &mut StreamRng) -> Self {
        let z_std = if z_dim > 0 { 0.02 } else { 0.0 };
        Self {
            channels,
            n_classes,
            z_dim,
            gamma_embed: Param::filled(&[n_classes, channels], 1.0),
            beta_embed: Param::filled(&[n_classes, channels], 0.0),
            gamma_z: (z_dim > 0).then(|| Param::normal(&[channels, z_dim], z_std, rng)),
            beta_z: (z_dim > 0).then(|| Param::normal(&[channels, z_dim], z_std, rng)),
            running_mean: Param::buffer(&[channels], vec![0.0; channels]),
            running_var: Param::buffer(&[channels], vec![1.0; channels]),
            eps: 1e-5,
            momentum: 0.1,
            batch_stats: None,
            cache: None,
        }
    }

    /// Unconditional batch norm (single class, no latent input).
    pub fn plain(channels: usize, rng: &mut StreamRng) -> Self {
        Self::new(channels, 1, 0, rng)
    }

    /// Per-channel `(mean, biased variance)` of the last training-mode batch.
    pub fn batch_stats(&self) -> Option<&(Vec<f64>, Vec<f64>)> {
        self.batch_stats.as_ref()
    }

    fn affine(&self, y: &[usize], z: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let c = self.channels;
        let mut gamma = vec![0.0; n * c];
        let mut beta = vec![0.0; n * c];
        for i in 0..n {
            let yi = y[i];
            gamma[i * c..(i + 1) * c].copy_from_slice(&self.gamma_embed.value[yi * c..(yi + 1) * c]);
            beta[i * c..(i + 1) * c].copy_from_slice(&self.beta_embed.value[yi * c..(yi + 1) * c]);
        }
        if let (Some(gz), Some(bz)) = (&self.gamma_z, &self.beta_z) {
            gemm(n, self.z_dim, c, z, false, &gz.value, true, 1.0, &mut gamma);
            gemm(n, self.z_dim, c, z, false, &bz.value, true, 1.0, &mut beta);
        }
        (gamma, beta)
    }

    /// `y` selects the class row per sample; `z` is `n x z_dim` (empty when
    /// `z_dim == 0`). Training mode normalizes with batch statistics over
    /// `(n, h, w)` and updates the running estimates.
    pub fn forward(&mut self, x: &Tensor4, y: &[usize], z: &[f64], mode: Mode) -> Result<Tensor4> {
        let (n, c, hw) = (x.n, self.channels, x.h * x.w);
        if x.c != c {
            return Err(Error::Argument(format!("batch norm expects {c} channels, got {}", x.c)));
        }
        if y.len() != n {
            return Err(Error::Argument(format!("{} labels for a batch of {n}", y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&v| v >= self.n_classes) {
            return Err(Error::Argument(format!(
                "class index {bad} out of range for {} classes",
                self.n_classes
            )));
        }
        if z.len() != n * self.z_dim {
            return Err(Error::Argument(format!(
                "latent input has {} values, expected {}",
                z.len(),
                n * self.z_dim
            )));
        }
        let train = mode == Mode::Train;
        let m = (n * hw) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        if train {
            if n * hw < 2 {
                return Err(Error::Argument("batch norm needs at least two values per channel".into()));
            }
            for i in 0..n {
                for (ch, mu) in mean.iter_mut().enumerate() {
                    *mu += x.data[(i * c + ch) * hw..][..hw].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            for i in 0..n {
                for ch in 0..c {
                    let mu = mean[ch];
                    var[ch] += x.data[(i * c + ch) * hw..][..hw].iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            let unbias = m / (m - 1.0);
            for ch in 0..c {
                let rm = &mut self.running_mean.value[ch];
                *rm = (1.0 - self.momentum) * *rm + self.momentum * mean[ch];
                let rv = &mut self.running_var.value[ch];
                *rv = (1.0 - self.momentum) * *rv + self.momentum * var[ch] * unbias;
            }
            self.batch_stats = Some((mean.clone(), var.clone()));
        } else {
            mean.copy_from_slice(&self.running_mean.value);
            var.copy_from_slice(&self.running_var.value);
        }
        let invstd: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (gamma, beta) = self.affine(y, z, n);
        let mut xhat = x.zeros_like();
        let mut out = x.zeros_like();
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                let (mu, is) = (mean[ch], invstd[ch]);
                let (g, b) = (gamma[i * c + ch], beta[i * c + ch]);
                for p in off..off + hw {
                    let h = (x.data[p] - mu) * is;
                    xhat.data[p] = h;
                    out.data[p] = g * h + b;
                }
            }
        }
        self.cache = Some(BnCache {
            xhat,
            invstd,
            gamma,
            y: y.to_vec(),
            z: z.to_vec(),
            train,
        });
        Ok(out)
    }

    /// Returns `(dx, dz)`; `dz` is `n x z_dim` (empty when `z_dim == 0`).
    pub fn backward(&mut self, dy: &Tensor4) -> (Tensor4, Vec<f64>) {
        let cache = self.cache.take().expect("batch norm backward before forward");
        let (n, c, hw) = (dy.n, self.channels, dy.h * dy.w);
        let mut dgamma = vec![0.0; n * c];
        let mut dbeta = vec![0.0; n * c];
        let mut dxhat = dy.zeros_like();
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                let g = cache.gamma[i * c + ch];
                let (mut sg, mut sb) = (0.0, 0.0);
                for p in off..off + hw {
                    sg += dy.data[p] * cache.xhat.data[p];
                    sb += dy.data[p];
                    dxhat.data[p] = dy.data[p] * g;
                }
                dgamma[i * c + ch] = sg;
                dbeta[i * c + ch] = sb;
            }
        }
        for i in 0..n {
            let yi = cache.y[i];
            for ch in 0..c {
                self.gamma_embed.grad[yi * c + ch] += dgamma[i * c + ch];
                self.beta_embed.grad[yi * c + ch] += dbeta[i * c + ch];
            }
        }
        let mut dz = vec![0.0; n * self.z_dim];
        if let (Some(gz), Some(bz)) = (&mut self.gamma_z, &mut self.beta_z) {
            let k = self.z_dim;
            gemm(c, n, k, &dgamma, true, &cache.z, false, 1.0, &mut gz.grad);
            gemm(c, n, k, &dbeta, true, &cache.z, false, 1.0, &mut bz.grad);
            gemm(n, c, k, &dgamma, false, &gz.value, false, 0.0, &mut dz);
            gemm(n, c, k, &dbeta, false, &bz.value, false, 1.0, &mut dz);
        }
        let mut dx = dy.zeros_like();
        if cache.train {
            let m = (n * hw) as f64;
            for ch in 0..c {
                let (mut s1, mut s2) = (0.0, 0.0);
                for i in 0..n {
                    let off = (i * c + ch) * hw;
                    for p in off..off + hw {
                        s1 += dxhat.data[p];
                        s2 += dxhat.data[p] * cache.xhat.data[p];
                    }
                }
                let is = cache.invstd[ch];
                for i in 0..n {
                    let off = (i * c + ch) * hw;
                    for p in off..off + hw {
                        dx.data[p] = is / m * (m * dxhat.data[p] - s1 - cache.xhat.data[p] * s2);
                    }
                }
            }
        } else {
            for i in 0..n {
                for ch in 0..c {
                    let off = (i * c + ch) * hw;
                    for p in off..off + hw {
                        dx.data[p] = dxhat.data[p] * cache.invstd[ch];
                    }
                }
            }
        }
        (dx, dz)
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gamma_embed"), &mut self.gamma_embed);
        f(&join(prefix, "beta_embed"), &mut self.beta_embed);
        if let Some(p) = &mut self.gamma_z {
            f(&join(prefix, "gamma_z"), p);
        }
        if let Some(p) = &mut self.beta_z {
            f(&join(prefix, "beta_z"), p);
        }
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient through ReLU given its pre-activation input.
pub fn relu_backward(pre: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let mut dx = dy.clone();
    for (d, p) in dx.data.iter_mut().zip(&pre.data) {
        if *p <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

pub fn tanh(x: &Tensor4) -> Tensor4 {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| *v = v.tanh());
    y
}

/// Gradient through tanh given its output.
pub fn tanh_backward(out: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let mut dx = dy.clone();
    for (d, o) in dx.data.iter_mut().zip(&out.data) {
        *d *= 1.0 - o * o;
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2x(x: &Tensor4) -> Tensor4 {
    let (h, w) = (x.h, x.w);
    let mut y = Tensor4::zeros(x.n, x.c, 2 * h, 2 * w);
    for (plane, out) in x.data.chunks(h * w).zip(y.data.chunks_mut(4 * h * w)) {
        for oy in 0..2 * h {
            for ox in 0..2 * w {
                out[oy * 2 * w + ox] = plane[(oy / 2) * w + ox / 2];
            }
        }
    }
    y
}

pub fn upsample2x_backward(dy: &Tensor4) -> Tensor4 {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor4::zeros(dy.n, dy.c, h, w);
    for (plane, out) in dy.data.chunks(4 * h * w).zip(dx.data.chunks_mut(h * w)) {
        for oy in 0..2 * h {
            for ox in 0..2 * w {
                out[(oy / 2) * w + ox / 2] += plane[oy * 2 * w + ox];
            }
        }
    }
    dx
}

/// 2x2 average pooling; spatial dims must be even.
pub fn avgpool2(x: &Tensor4) -> Result<Tensor4> {
    if !x.h.is_multiple_of(2) || !x.w.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "average pooling needs even spatial size, got {}x{}",
            x.h, x.w
        )));
    }
    let (h, w) = (x.h / 2, x.w / 2);
    let mut y = Tensor4::zeros(x.n, x.c, h, w);
    for (plane, out) in x.data.chunks(4 * h * w).zip(y.data.chunks_mut(h * w)) {
        for oy in 0..h {
            for ox in 0..w {
                let a = plane[2 * oy * 2 * w + 2 * ox] + plane[2 * oy * 2 * w + 2 * ox + 1];
                let b = plane[(2 * oy + 1) * 2 * w + 2 * ox] + plane[(2 * oy + 1) * 2 * w + 2 * ox + 1];
                out[oy * w + ox] = 0.25 * (a + b);
            }
        }
    }
    Ok(y)
}

pub fn avgpool2_backward(dy: &Tensor4) -> Tensor4 {
    let (h, w) = (dy.h, dy.w);
    let mut dx = Tensor4::zeros(dy.n, dy.c, 2 * h, 2 * w);
    for (plane, out) in dy.data.chunks(h * w).zip(dx.data.chunks_mut(4 * h * w)) {
        for oy in 0..2 * h {
            for ox in 0..2 * w {
                out[oy * 2 * w + ox] = 0.25 * plane[(oy / 2) * w + ox / 2];
            }
        }
    }
    dx
}

/// Global sum over spatial positions, giving `n x c x 1 x 1`.
pub fn sum_pool(x: &Tensor4) -> Tensor4 {
    let hw = x.h * x.w;
    let data = x.data.chunks(hw.max(1)).map(|p| p.iter().sum()).collect();
    Tensor4::matrix(x.n, x.c, data)
}

pub fn sum_pool_backward(dy: &Tensor4, h: usize, w: usize) -> Tensor4 {
    let mut dx = Tensor4::zeros(dy.n, dy.c, h, w);
    for (plane, &d) in dx.data.chunks_mut((h * w).max(1)).zip(&dy.data) {
        plane.iter_mut().for_each(|v| *v = d);
    }
    dx
}
