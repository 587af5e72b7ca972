//! Central finite-difference verification of every hand-written backward pass.
//!
//! Each check reduces a layer's output to a scalar through a fixed random
//! projection, perturbs parameters and inputs one entry at a time and compares
//! `(L(p + h) - L(p - h)) / 2h` with the analytic gradient. Spectral-norm
//! layers keep `u` and `sigma` frozen.

use serde::Serialize;

use super::attention::SelfAttention;
use super::blocks::{DBlock, GBlock};
use super::config::GanConfig;
use super::layers::{CondBatchNorm, Conv2d, Linear, Mode};
use super::loss::{d_loss, g_loss};
use super::networks::{Discriminator, Generator};
use super::param::{Module, Param};
use super::tensor::Tensor4;
use crate::rng::StreamRng;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so entries whose true gradient
/// vanishes are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-6;
/// Entries checked per tensor (evenly spaced when the tensor is larger).
pub const MAX_ENTRIES: usize = 48;
pub const LINEAR_TOL: f64 = 1e-8;
pub const NONLINEAR_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerGradReport {
    pub layer: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// Parameter and input names that were perturbed.
    pub covered: Vec<String>,
    pub entries: usize,
    /// Entry with the largest error: `(name, index, analytic, numeric)`.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl LayerGradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn entries(len: usize) -> Vec<usize> {
    if len <= MAX_ENTRIES {
        (0..len).collect()
    } else {
        (0..MAX_ENTRIES).map(|i| i * len / MAX_ENTRIES).collect()
    }
}

fn set_value<M: Module + ?Sized>(m: &mut M, target: &str, idx: usize, v: f64) {
    m.visit("", &mut |name, p| {
        if name == target {
            p.value[idx] = v;
        }
    });
}

/// Loss evaluation: returns `L`; when `grads` is given it also runs the
/// backward pass, accumulating parameter gradients and filling one gradient
/// vector per input.
pub type LossFn<'a, M> = dyn FnMut(&mut M, &[Vec<f64>], Option<&mut Vec<Vec<f64>>>) -> f64 + 'a;

/// Compares analytic and numeric gradients for all trainable parameters of
/// `m` and all `inputs`.
pub fn check_module<M: Module>(
    layer: &str,
    tolerance: f64,
    m: &mut M,
    inputs: &[(&str, Vec<f64>)],
    run: &mut LossFn<'_, M>,
) -> LayerGradReport {
    let mut vals: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    m.zero_grad();
    let mut dins = Vec::new();
    run(m, &vals, Some(&mut dins));
    let mut params: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    m.visit("", &mut |name, p: &mut Param| {
        if p.trainable {
            params.push((name.to_string(), p.value.clone(), p.grad.clone()));
        }
    });
    let mut worst = 0.0f64;
    let mut worst_at = None;
    let mut count = 0;
    let mut record = |name: &str, i: usize, a: f64, n: f64| {
        let e = rel_err(a, n);
        if e > worst || worst_at.is_none() {
            worst = e;
            worst_at = Some((name.to_string(), i, a, n));
        }
    };
    let mut covered = Vec::new();
    for (name, value, grad) in &params {
        for i in entries(value.len()) {
            set_value(m, name, i, value[i] + FD_STEP);
            let lp = run(m, &vals, None);
            set_value(m, name, i, value[i] - FD_STEP);
            let lm = run(m, &vals, None);
            set_value(m, name, i, value[i]);
            record(name, i, grad[i], (lp - lm) / (2.0 * FD_STEP));
            count += 1;
        }
        covered.push(name.clone());
    }
    for (k, (name, _)) in inputs.iter().enumerate() {
        for i in entries(vals[k].len()) {
            let orig = vals[k][i];
            vals[k][i] = orig + FD_STEP;
            let lp = run(m, &vals, None);
            vals[k][i] = orig - FD_STEP;
            let lm = run(m, &vals, None);
            vals[k][i] = orig;
            record(name, i, dins[k][i], (lp - lm) / (2.0 * FD_STEP));
            count += 1;
        }
        covered.push(format!("input:{name}"));
    }
    LayerGradReport {
        layer: layer.to_string(),
        max_rel_err: worst,
        tolerance,
        covered,
        entries: count,
        worst: worst_at,
    }
}

macro_rules! module_via_visit {
    ($($t:ty),*) => {$(
        impl Module for $t {
            fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
                <$t>::visit(self, prefix, f)
            }
        }
    )*};
}

module_via_visit!(Linear, Conv2d, CondBatchNorm, SelfAttention, GBlock, DBlock);

struct NoParams;

impl Module for NoParams {
    fn visit(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param)) {}
}

/// Generator and discriminator checked as one module.
struct Pair<'a> {
    g: &'a mut Generator,
    d: &'a mut Discriminator,
}

impl Module for Pair<'_> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.g.visit(&super::param::join(prefix, "g"), f);
        self.d.visit(&super::param::join(prefix, "d"), f);
    }
}

fn normals(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Moves every trainable parameter off its initial value so no gradient is
/// identically zero (attention gates, zero biases, unit batch-norm scales).
fn jitter<M: Module + ?Sized>(m: &mut M, rng: &mut StreamRng, scale: f64) {
    m.visit("", &mut |_, p| {
        if p.trainable {
            for v in p.value.iter_mut() {
                *v += scale * rng.normal();
            }
        }
    });
}

/// A configuration small enough for exhaustive-ish finite differences.
pub fn tiny_config() -> GanConfig {
    GanConfig {
        img_h: 8,
        img_w: 8,
        img_channels: 3,
        base_channels: 8,
        n_classes: 3,
        z_dim: 6,
        n_gen_blocks: 2,
        attention_position: 1,
        batch_size: 2,
        ..GanConfig::default()
    }
}

fn tensor(shape: [usize; 4], v: &[f64]) -> Tensor4 {
    Tensor4::from_vec(shape[0], shape[1], shape[2], shape[3], v.to_vec())
}

fn check_linear(spectral: bool, rng: &mut StreamRng) -> LayerGradReport {
    let mut lin = Linear::new(5, 4, true, spectral, rng);
    jitter(&mut lin, rng, 0.1);
    let x = normals(15, rng);
    let r = normals(12, rng);
    let name = if spectral { "linear_sn" } else { "linear" };
    check_module(name, LINEAR_TOL, &mut lin, &[("x", x)], &mut |m, v, grads| {
        let y = m.forward(&Tensor4::matrix(3, 5, v[0].clone())).unwrap();
        if let Some(g) = grads {
            *g = vec![m.backward(&Tensor4::matrix(3, 4, r.clone())).data];
        }
        y.dot(&Tensor4::matrix(3, 4, r.clone()))
    })
}

fn check_conv(k: usize, spectral: bool, rng: &mut StreamRng) -> LayerGradReport {
    let mut conv = Conv2d::new(3, 4, k, true, spectral, rng);
    jitter(&mut conv, rng, 0.1);
    let x = normals(2 * 3 * 4 * 5, rng);
    let r = tensor([2, 4, 4, 5], &normals(2 * 4 * 4 * 5, rng));
    let name = format!("conv{k}x{k}{}", if spectral { "_sn" } else { "" });
    check_module(&name, NONLINEAR_TOL, &mut conv, &[("x", x)], &mut |m, v, grads| {
        let y = m.forward(&tensor([2, 3, 4, 5], &v[0])).unwrap();
        if let Some(g) = grads {
            *g = vec![m.backward(&r).data];
        }
        y.dot(&r)
    })
}

fn check_cbn(mode: Mode, rng: &mut StreamRng) -> LayerGradReport {
    let mut bn = CondBatchNorm::new(3, 3, 2, rng);
    jitter(&mut bn, rng, 0.3);
    bn.running_mean.value = vec![0.1, -0.2, 0.3];
    bn.running_var.value = vec![0.5, 1.5, 2.0];
    let y = [0, 2, 1, 2];
    let x = normals(4 * 3 * 2 * 3, rng);
    let z = normals(4 * 2, rng);
    let r = tensor([4, 3, 2, 3], &normals(72, rng));
    let name = match mode {
        Mode::Train => "cond_batchnorm",
        Mode::Eval => "cond_batchnorm_eval",
    };
    check_module(name, NONLINEAR_TOL, &mut bn, &[("x", x), ("z", z)], &mut |m, v, grads| {
        let rm = m.running_mean.value.clone();
        let rv = m.running_var.value.clone();
        let out = m.forward(&tensor([4, 3, 2, 3], &v[0]), &y, &v[1], mode).unwrap();
        m.running_mean.value = rm;
        m.running_var.value = rv;
        if let Some(g) = grads {
            let (dx, dz) = m.backward(&r);
            *g = vec![dx.data, dz];
        }
        out.dot(&r)
    })
}

fn check_attention(rng: &mut StreamRng) -> LayerGradReport {
    let mut sa = SelfAttention::new(16, true, rng);
    jitter(&mut sa, rng, 0.3);
    let shape = [2, 16, 3, 3];
    let x = normals(2 * 16 * 9, rng);
    let r = tensor(shape, &normals(2 * 16 * 9, rng));
    check_module("self_attention", NONLINEAR_TOL, &mut sa, &[("x", x)], &mut |m, v, grads| {
        let out = m.forward(&tensor(shape, &v[0])).unwrap();
        if let Some(g) = grads {
            *g = vec![m.backward(&r).data];
        }
        out.dot(&r)
    })
}

fn check_gblock(rng: &mut StreamRng) -> LayerGradReport {
    let mut blk = GBlock::new(4, 3, 3, 2, rng);
    jitter(&mut blk, rng, 0.2);
    let y = [1, 0, 2];
    let x = normals(3 * 4 * 2 * 2, rng);
    let z = normals(3 * 2, rng);
    let r = tensor([3, 3, 4, 4], &normals(3 * 3 * 16, rng));
    check_module("gblock", NONLINEAR_TOL, &mut blk, &[("x", x), ("z", z)], &mut |m, v, grads| {
        let out = m.forward(&tensor([3, 4, 2, 2], &v[0]), &y, &v[1], Mode::Train).unwrap();
        if let Some(g) = grads {
            let (dx, dz) = m.backward(&r);
            *g = vec![dx.data, dz];
        }
        out.dot(&r)
    })
}

fn check_dblock(preact: bool, rng: &mut StreamRng) -> LayerGradReport {
    let mut blk = DBlock::new(3, 4, preact, rng);
    jitter(&mut blk, rng, 0.2);
    let x = normals(2 * 3 * 4 * 4, rng);
    let r = tensor([2, 4, 2, 2], &normals(2 * 4 * 4, rng));
    let name = if preact { "dblock" } else { "dblock_input" };
    check_module(name, NONLINEAR_TOL, &mut blk, &[("x", x)], &mut |m, v, grads| {
        let out = m.forward(&tensor([2, 3, 4, 4], &v[0])).unwrap();
        if let Some(g) = grads {
            *g = vec![m.backward(&r).data];
        }
        out.dot(&r)
    })
}

fn check_losses(rng: &mut StreamRng) -> Vec<LayerGradReport> {
    let (n, k) = (4, 3);
    let yr = [0, 1, 2, 1];
    let yf = [2, 2, 0, 1];
    // Scores kept away from the hinge kinks at +-1.
    let ar = vec![0.3, 1.7, -0.8, 0.95];
    let af = vec![-1.4, 0.2, -0.5, 2.0];
    let lr = normals(n * k, rng);
    let lf = normals(n * k, rng);
    let d = check_module(
        "loss_d",
        1e-6,
        &mut NoParams,
        &[("adv_real", ar), ("adv_fake", af.clone()), ("logits_real", lr), ("logits_fake", lf.clone())],
        &mut |_, v, grads| {
            let l = d_loss(&v[0], &v[1], &v[2], &v[3], &yr, &yf, k, 0.7, true);
            if let Some(g) = grads {
                *g = vec![l.d_adv_real, l.d_adv_fake, l.d_logits_real, l.d_logits_fake];
            }
            l.loss
        },
    );
    let g = check_module(
        "loss_g",
        1e-6,
        &mut NoParams,
        &[("adv_fake", af), ("logits_fake", lf)],
        &mut |_, v, grads| {
            let l = g_loss(&v[0], &v[1], &yf, k, 0.7);
            if let Some(g) = grads {
                *g = vec![l.d_adv, l.d_logits];
            }
            l.loss
        },
    );
    vec![d, g]
}

fn check_networks(cfg: &GanConfig, rng: &mut StreamRng) -> Vec<LayerGradReport> {
    let n = cfg.batch_size;
    let mut g = Generator::new(cfg, rng);
    let mut d = Discriminator::new(cfg, rng);
    jitter(&mut g, rng, 0.1);
    jitter(&mut d, rng, 0.1);
    let y: Vec<usize> = (0..n).map(|i| i % cfg.n_classes).collect();
    let z = normals(n * cfg.z_dim, rng);
    let img = [n, cfg.img_channels, cfg.img_h, cfg.img_w];
    let npx = img.iter().product();
    let x: Vec<f64> = normals(npx, rng).iter().map(|v| v.tanh()).collect();
    let rg = tensor(img, &normals(npx, rng));
    let ra = normals(n, rng);
    let rl = normals(n * cfg.n_classes, rng);
    let mut out = Vec::new();

    out.push(check_module("generator", NONLINEAR_TOL, &mut g, &[("z", z.clone())], &mut |m, v, grads| {
        let imgs = m.forward(&Tensor4::matrix(n, cfg.z_dim, v[0].clone()), &y, Mode::Train).unwrap();
        if let Some(gr) = grads {
            *gr = vec![m.backward(&rg).data];
        }
        imgs.dot(&rg)
    }));

    out.push(check_module("discriminator", NONLINEAR_TOL, &mut d, &[("x", x.clone())], &mut |m, v, grads| {
        let o = m.forward(&tensor(img, &v[0]), &y).unwrap();
        if let Some(gr) = grads {
            *gr = vec![m.backward(&ra, &rl).data];
        }
        let s: f64 = o.adv.iter().zip(&ra).map(|(a, b)| a * b).sum();
        s + o.logits.iter().zip(&rl).map(|(a, b)| a * b).sum::<f64>()
    }));

    let k = cfg.n_classes;
    let lambda = cfg.lambda_ac;
    let mut pair = Pair { g: &mut g, d: &mut d };
    out.push(check_module("composite_g_loss", NONLINEAR_TOL, &mut pair, &[("z", z.clone())], &mut |m, v, grads| {
        let fake = m.g.forward(&Tensor4::matrix(n, cfg.z_dim, v[0].clone()), &y, Mode::Train).unwrap();
        let o = m.d.forward(&fake, &y).unwrap();
        let l = g_loss(&o.adv, &o.logits, &y, k, lambda);
        if let Some(gr) = grads {
            let dx = m.d.backward(&l.d_adv, &l.d_logits);
            *gr = vec![m.g.backward(&dx).data];
        }
        l.loss
    }));

    let y_fake: Vec<usize> = (0..n).map(|i| (i + 1) % k).collect();
    out.push(check_module(
        "composite_d_loss",
        NONLINEAR_TOL,
        &mut pair,
        &[("x_real", x), ("z", z)],
        &mut |m, v, grads| {
            let fake = m.g.forward(&Tensor4::matrix(n, cfg.z_dim, v[1].clone()), &y_fake, Mode::Train).unwrap();
            let mut both = v[0].clone();
            both.extend_from_slice(&fake.data);
            let mut yy = y.clone();
            yy.extend_from_slice(&y_fake);
            let o = m.d.forward(&tensor([2 * n, img[1], img[2], img[3]], &both), &yy).unwrap();
            let (lr, lf) = o.logits.split_at(n * k);
            let l = d_loss(&o.adv[..n], &o.adv[n..], lr, lf, &y, &y_fake, k, lambda, true);
            if let Some(gr) = grads {
                let mut da = l.d_adv_real.clone();
                da.extend_from_slice(&l.d_adv_fake);
                let mut dl = l.d_logits_real.clone();
                dl.extend_from_slice(&l.d_logits_fake);
                let dx = m.d.backward(&da, &dl);
                let (dreal, dfake) = dx.data.split_at(npx);
                let dz = m.g.backward(&tensor(img, dfake));
                *gr = vec![dreal.to_vec(), dz.data];
            }
            l.loss
        },
    ));
    out
}

/// Runs every layer check plus whole-network and composite-loss checks on
/// `cfg` (which should be tiny).
pub fn grad_check_all(cfg: &GanConfig) -> Vec<LayerGradReport> {
    let mut rng = StreamRng::new(cfg.seed ^ 0x6772_6164);
    let mut out = vec![
        check_linear(false, &mut rng),
        check_linear(true, &mut rng),
        check_conv(3, false, &mut rng),
        check_conv(1, true, &mut rng),
        check_conv(3, true, &mut rng),
        check_cbn(Mode::Train, &mut rng),
        check_cbn(Mode::Eval, &mut rng),
        check_attention(&mut rng),
        check_gblock(&mut rng),
        check_dblock(true, &mut rng),
        check_dblock(false, &mut rng),
    ];
    out.extend(check_losses(&mut rng));
    out.extend(check_networks(cfg, &mut rng));
    out
}
