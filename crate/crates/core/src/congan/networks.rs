//! Generator and projection discriminator.

use super::attention::SelfAttention;
use super::blocks::{DBlock, GBlock};
use super::config::GanConfig;
use super::layers::{relu, relu_backward, sum_pool, sum_pool_backward, tanh, tanh_backward, CondBatchNorm, Conv2d, Linear, Mode};
use super::param::{join, Module, Param};
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::rng::StreamRng;

fn check_labels(y: &[usize], n: usize, k: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Argument(format!("{} labels for a batch of {n}", y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&v| v >= k) {
        return Err(Error::Argument(format!("class index {bad} out of range for {k} classes")));
    }
    Ok(())
}

/// Columns `[from, from + width)` of an `n x d` row-major matrix.
fn columns(data: &[f64], d: usize, from: usize, width: usize) -> Vec<f64> {
    data.chunks(d).flat_map(|r| r[from..from + width].iter().copied()).collect()
}

/// Residual generator with hierarchical latent input: chunk 0 of `z` feeds
/// the input projection, chunk `i + 1` conditions block `i`.
#[derive(Debug, Clone)]
pub struct Generator {
    pub cfg: GanConfig,
    pub input: Linear,
    pub blocks: Vec<GBlock>,
    pub attn: SelfAttention,
    pub bn_out: CondBatchNorm,
    pub conv_out: Conv2d,
    cache: Option<(Tensor4, Tensor4)>,
}

impl Generator {
    pub fn new(cfg: &GanConfig, rng: &mut StreamRng) -> Self {
        let c = cfg.base_channels;
        let zc = cfg.z_chunk();
        let input = Linear::new(zc, c * cfg.base_h() * cfg.base_w(), false, false, rng);
        let blocks = (0..cfg.n_gen_blocks)
            .map(|_| GBlock::new(c, c, cfg.n_classes, zc, rng))
            .collect();
        Self {
            cfg: cfg.clone(),
            input,
            blocks,
            attn: SelfAttention::new(c, false, rng),
            bn_out: CondBatchNorm::plain(c, rng),
            conv_out: Conv2d::new(c, cfg.img_channels, 3, true, false, rng),
            cache: None,
        }
    }

    /// `z` is `n x z_dim`; returns `n x img_channels x img_h x img_w` in `[-1, 1]`.
    pub fn forward(&mut self, z: &Tensor4, y: &[usize], mode: Mode) -> Result<Tensor4> {
        let cfg = &self.cfg;
        if z.sample_len() != cfg.z_dim {
            return Err(Error::Argument(format!(
                "latent has {} dims, expected {}",
                z.sample_len(),
                cfg.z_dim
            )));
        }
        let n = z.n;
        check_labels(y, n, cfg.n_classes)?;
        let zc = cfg.z_chunk();
        let z0 = Tensor4::matrix(n, zc, columns(&z.data, cfg.z_dim, 0, zc));
        let mut h = self
            .input
            .forward(&z0)?
            .reshape(cfg.base_channels, cfg.base_h(), cfg.base_w());
        for (i, block) in self.blocks.iter_mut().enumerate() {
            if i == cfg.attention_position {
                h = self.attn.forward(&h)?;
            }
            let zi = columns(&z.data, cfg.z_dim, (i + 1) * zc, zc);
            h = block.forward(&h, y, &zi, mode)?;
        }
        let zeros = vec![0; n];
        let pre = self.bn_out.forward(&h, &zeros, &[], mode)?;
        let out = tanh(&self.conv_out.forward(&relu(&pre))?);
        self.cache = Some((pre, out.clone()));
        Ok(out)
    }

    /// Returns `dL/dz` (`n x z_dim`).
    pub fn backward(&mut self, dout: &Tensor4) -> Tensor4 {
        let (pre, out) = self.cache.take().expect("generator backward before forward");
        let cfg = &self.cfg;
        let (n, zc) = (dout.n, cfg.z_chunk());
        let mut dz = vec![0.0; n * cfg.z_dim];
        let da = self.conv_out.backward(&tanh_backward(&out, dout));
        let (mut dh, _) = self.bn_out.backward(&relu_backward(&pre, &da));
        for (i, block) in self.blocks.iter_mut().enumerate().rev() {
            let (dx, dzi) = block.backward(&dh);
            for (row, chunk) in dz.chunks_mut(cfg.z_dim).zip(dzi.chunks(zc)) {
                row[(i + 1) * zc..(i + 2) * zc].copy_from_slice(chunk);
            }
            dh = dx;
            if i == cfg.attention_position {
                dh = self.attn.backward(&dh);
            }
        }
        let dz0 = self.input.backward(&dh.reshape(self.input.d_out, 1, 1));
        for (row, chunk) in dz.chunks_mut(cfg.z_dim).zip(dz0.data.chunks(zc)) {
            row[..zc].copy_from_slice(chunk);
        }
        Tensor4::matrix(n, cfg.z_dim, dz)
    }
}

impl Module for Generator {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.input.visit(&join(prefix, "input"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
        self.attn.visit(&join(prefix, "attn"), f);
        self.bn_out.visit(&join(prefix, "bn_out"), f);
        self.conv_out.visit(&join(prefix, "conv_out"), f);
    }
}

/// Per-sample outputs of the discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct DOutput {
    pub adv: Vec<f64>,
    /// `n x n_classes`, row-major.
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone)]
struct DCache {
    pre: Tensor4,
    phi: Vec<f64>,
    y: Vec<usize>,
}

/// Residual discriminator: `adv = w.phi + b + embed(y).phi`, plus an
/// auxiliary classifier head on `phi`.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub cfg: GanConfig,
    pub blocks: Vec<DBlock>,
    pub attn: SelfAttention,
    pub adv_head: Linear,
    pub embed: Param,
    pub ac_head: Linear,
    cache: Option<DCache>,
}

impl Discriminator {
    pub fn new(cfg: &GanConfig, rng: &mut StreamRng) -> Self {
        let c = cfg.base_channels;
        let blocks = (0..cfg.n_gen_blocks)
            .map(|i| DBlock::new(if i == 0 { cfg.img_channels } else { c }, c, i > 0, rng))
            .collect();
        let k = cfg.n_classes;
        Self {
            cfg: cfg.clone(),
            blocks,
            attn: SelfAttention::new(c, true, rng),
            adv_head: Linear::new(c, 1, true, true, rng),
            embed: Param::normal(&[k, c], (2.0 / (k + c) as f64).sqrt(), rng),
            ac_head: Linear::new(c, k, true, true, rng),
            cache: None,
        }
    }

    /// Block after which self-attention runs (same resolution as the
    /// generator's attention input).
    pub fn attention_after(&self) -> usize {
        self.cfg.n_gen_blocks - 1 - self.cfg.attention_position
    }

    pub fn forward(&mut self, x: &Tensor4, y: &[usize]) -> Result<DOutput> {
        let cfg = &self.cfg;
        if [x.c, x.h, x.w] != [cfg.img_channels, cfg.img_h, cfg.img_w] {
            return Err(Error::Argument(format!(
                "discriminator expects {}x{}x{} images, got {}x{}x{}",
                cfg.img_channels, cfg.img_h, cfg.img_w, x.c, x.h, x.w
            )));
        }
        check_labels(y, x.n, cfg.n_classes)?;
        let at = self.attention_after();
        let mut h = x.clone();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            h = block.forward(&h)?;
            if i == at {
                h = self.attn.forward(&h)?;
            }
        }
        let phi = sum_pool(&relu(&h));
        let mut adv = self.adv_head.forward(&phi)?.data;
        let c = phi.c;
        for (i, a) in adv.iter_mut().enumerate() {
            let e = &self.embed.value[y[i] * c..(y[i] + 1) * c];
            *a += e.iter().zip(phi.sample(i)).map(|(p, q)| p * q).sum::<f64>();
        }
        let logits = self.ac_head.forward(&phi)?.data;
        self.cache = Some(DCache {
            pre: h,
            phi: phi.data,
            y: y.to_vec(),
        });
        Ok(DOutput { adv, logits })
    }

    /// Pooled features of the last forward pass (`n x c`).
    pub fn phi(&self) -> Option<&[f64]> {
        self.cache.as_ref().map(|c| c.phi.as_slice())
    }

    /// Returns `dL/dx` given gradients with respect to both heads.
    pub fn backward(&mut self, d_adv: &[f64], d_logits: &[f64]) -> Tensor4 {
        let cache = self.cache.take().expect("discriminator backward before forward");
        let n = d_adv.len();
        let c = self.cfg.base_channels;
        let mut dphi = self.adv_head.backward(&Tensor4::matrix(n, 1, d_adv.to_vec()));
        dphi.add_assign(&self.ac_head.backward(&Tensor4::matrix(n, self.cfg.n_classes, d_logits.to_vec())));
        for i in 0..n {
            let yi = cache.y[i];
            for ch in 0..c {
                dphi.data[i * c + ch] += d_adv[i] * self.embed.value[yi * c + ch];
                self.embed.grad[yi * c + ch] += d_adv[i] * cache.phi[i * c + ch];
            }
        }
        let da = sum_pool_backward(&dphi, cache.pre.h, cache.pre.w);
        let mut dh = relu_backward(&cache.pre, &da);
        let at = self.attention_after();
        for (i, block) in self.blocks.iter_mut().enumerate().rev() {
            if i == at {
                dh = self.attn.backward(&dh);
            }
            dh = block.backward(&dh);
        }
        dh
    }

    /// One power-iteration refresh of every normalized weight; returns the
    /// new sigma estimates in visiting order.
    pub fn refresh_sn(&mut self, iters: usize) -> Vec<f64> {
        for b in &mut self.blocks {
            b.refresh_sn(iters);
        }
        self.attn.refresh_sn(iters);
        self.adv_head.weight.refresh_sn(iters);
        self.ac_head.weight.refresh_sn(iters);
        self.sigmas()
    }

    pub fn sigmas(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |name, p| {
            if name.ends_with("sn_sigma") {
                out.push(p.value[0]);
            }
        });
        out
    }
}

impl Module for Discriminator {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
        self.attn.visit(&join(prefix, "attn"), f);
        self.adv_head.visit(&join(prefix, "adv"), f);
        f(&join(prefix, "embed"), &mut self.embed);
        self.ac_head.visit(&join(prefix, "ac"), f);
    }
}
