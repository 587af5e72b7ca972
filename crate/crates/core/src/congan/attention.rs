//! Self-attention over spatial positions with a learned residual gate.

use super::layers::Conv2d;
use super::param::{join, Param};
use super::tensor::{gemm, Tensor4};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone)]
struct AttnCache {
    f: Tensor4,
    g: Tensor4,
    h: Tensor4,
    attn: Vec<f64>,
    o: Vec<f64>,
}

/// `out = x + gamma * (h(x) A^T)` where `A = softmax_rows(f(x)^T g(x))` and
/// `f`, `g`, `h` are bias-free 1x1 convolutions (`f`, `g` to `max(c/8, 1)`
/// channels).
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub channels: usize,
    pub key_channels: usize,
    pub f: Conv2d,
    pub g: Conv2d,
    pub h: Conv2d,
    pub gamma: Param,
    cache: Option<AttnCache>,
}

impl SelfAttention {
    pub fn new(channels: usize, spectral: bool, rng: &mut StreamRng) -> Self {
        let key_channels = (channels / 8).max(1);
        Self {
            channels,
            key_channels,
            f: Conv2d::new(channels, key_channels, 1, false, spectral, rng),
            g: Conv2d::new(channels, key_channels, 1, false, spectral, rng),
            h: Conv2d::new(channels, channels, 1, false, spectral, rng),
            gamma: Param::filled(&[1], 0.0),
            cache: None,
        }
    }

    /// Attention maps of the last forward pass, `n x N x N` with `N = h*w`.
    pub fn attention(&self) -> Option<&[f64]> {
        self.cache.as_ref().map(|c| c.attn.as_slice())
    }

    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let np = x.h * x.w;
        if np == 0 {
            return Err(Error::Argument("self-attention on an empty feature map".into()));
        }
        let (c, ck) = (self.channels, self.key_channels);
        let f = self.f.forward(x)?;
        let g = self.g.forward(x)?;
        let h = self.h.forward(x)?;
        let mut attn = vec![0.0; x.n * np * np];
        let mut o = vec![0.0; x.n * c * np];
        let gamma = self.gamma.value[0];
        let mut out = x.clone();
        for i in 0..x.n {
            let a = &mut attn[i * np * np..(i + 1) * np * np];
            gemm(np, ck, np, f.sample(i), true, g.sample(i), false, 0.0, a);
            for row in a.chunks_mut(np) {
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - mx).exp();
                    s += *v;
                }
                row.iter_mut().for_each(|v| *v /= s);
            }
            let oi = &mut o[i * c * np..(i + 1) * c * np];
            gemm(c, np, np, h.sample(i), false, a, true, 0.0, oi);
            for (dst, v) in out.sample_mut(i).iter_mut().zip(oi.iter()) {
                *dst += gamma * v;
            }
        }
        self.cache = Some(AttnCache { f, g, h, attn, o });
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Tensor4 {
        let cache = self.cache.take().expect("attention backward before forward");
        let (c, ck, np) = (self.channels, self.key_channels, dy.h * dy.w);
        let gamma = self.gamma.value[0];
        let mut df = cache.f.zeros_like();
        let mut dg = cache.g.zeros_like();
        let mut dh = cache.h.zeros_like();
        let mut do_ = vec![0.0; c * np];
        let mut da = vec![0.0; np * np];
        for i in 0..dy.n {
            let dyi = dy.sample(i);
            let oi = &cache.o[i * c * np..(i + 1) * c * np];
            self.gamma.grad[0] += dyi.iter().zip(oi).map(|(a, b)| a * b).sum::<f64>();
            for (d, v) in do_.iter_mut().zip(dyi) {
                *d = gamma * v;
            }
            let a = &cache.attn[i * np * np..(i + 1) * np * np];
            gemm(c, np, np, &do_, false, a, false, 0.0, dh.sample_mut(i));
            gemm(np, c, np, &do_, true, cache.h.sample(i), false, 0.0, &mut da);
            for (arow, drow) in a.chunks(np).zip(da.chunks_mut(np)) {
                let dot: f64 = arow.iter().zip(drow.iter()).map(|(p, q)| p * q).sum();
                for (d, p) in drow.iter_mut().zip(arow) {
                    *d = p * (*d - dot);
                }
            }
            gemm(ck, np, np, cache.g.sample(i), false, &da, true, 0.0, df.sample_mut(i));
            gemm(ck, np, np, cache.f.sample(i), false, &da, false, 0.0, dg.sample_mut(i));
        }
        let mut dx = dy.clone();
        dx.add_assign(&self.f.backward(&df));
        dx.add_assign(&self.g.backward(&dg));
        dx.add_assign(&self.h.backward(&dh));
        dx
    }

    pub fn refresh_sn(&mut self, iters: usize) {
        for conv in [&mut self.f, &mut self.g, &mut self.h] {
            conv.weight.refresh_sn(iters);
        }
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.f.visit(&join(prefix, "f"), f);
        self.g.visit(&join(prefix, "g"), f);
        self.h.visit(&join(prefix, "h"), f);
        f(&join(prefix, "gamma"), &mut self.gamma);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> Tensor4 {
        let data = (0..2 * 16 * 3 * 3).map(|i| (i as f64 * 0.13).cos()).collect();
        Tensor4::from_vec(2, 16, 3, 3, data)
    }

    #[test]
    fn zero_gate_is_identity() {
        let mut sa = SelfAttention::new(16, false, &mut StreamRng::new(3));
        let x = input();
        assert_eq!(sa.forward(&x).unwrap(), x);
    }

    #[test]
    fn rows_sum_to_one() {
        let mut sa = SelfAttention::new(16, false, &mut StreamRng::new(3));
        sa.forward(&input()).unwrap();
        for row in sa.attention().unwrap().chunks(9) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_map_rejected() {
        let mut sa = SelfAttention::new(8, false, &mut StreamRng::new(3));
        assert!(sa.forward(&Tensor4::zeros(1, 8, 0, 0)).is_err());
    }
}
