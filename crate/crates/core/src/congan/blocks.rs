//! Residual up/down blocks.

use super::layers::{
    avgpool2, avgpool2_backward, relu, relu_backward, upsample2x, upsample2x_backward, CondBatchNorm, Conv2d, Mode,
};
use super::param::{join, Param};
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Generator block: `CBN -> ReLU -> up -> conv3 -> CBN -> ReLU -> conv3`,
/// plus skip `conv1(up(x))`. Both batch norms are conditioned on the class
/// and the block's latent chunk. Convolutions carry no bias because every one
/// of them feeds a batch norm.
#[derive(Debug, Clone)]
pub struct GBlock {
    pub bn1: CondBatchNorm,
    pub conv1: Conv2d,
    pub bn2: CondBatchNorm,
    pub conv2: Conv2d,
    pub skip: Conv2d,
    cache: Option<(Tensor4, Tensor4)>,
}

impl GBlock {
    pub fn new(c_in: usize, c_out: usize, n_classes: usize, z_dim: usize, rng: &mut StreamRng) -> Self {
        Self {
            bn1: CondBatchNorm::new(c_in, n_classes, z_dim, rng),
            conv1: Conv2d::new(c_in, c_out, 3, false, false, rng),
            bn2: CondBatchNorm::new(c_out, n_classes, z_dim, rng),
            conv2: Conv2d::new(c_out, c_out, 3, false, false, rng),
            skip: Conv2d::new(c_in, c_out, 1, false, false, rng),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor4, y: &[usize], z: &[f64], mode: Mode) -> Result<Tensor4> {
        let h1 = self.bn1.forward(x, y, z, mode)?;
        let c1 = self.conv1.forward(&upsample2x(&relu(&h1)))?;
        let h2 = self.bn2.forward(&c1, y, z, mode)?;
        let mut out = self.conv2.forward(&relu(&h2))?;
        // A 1x1 convolution commutes with nearest-neighbour upsampling.
        out.add_assign(&upsample2x(&self.skip.forward(x)?));
        self.cache = Some((h1, h2));
        Ok(out)
    }

    /// Returns `(dx, dz)`.
    pub fn backward(&mut self, dy: &Tensor4) -> (Tensor4, Vec<f64>) {
        let (h1, h2) = self.cache.take().expect("block backward before forward");
        let da2 = self.conv2.backward(dy);
        let (dc1, mut dz) = self.bn2.backward(&relu_backward(&h2, &da2));
        let da1 = upsample2x_backward(&self.conv1.backward(&dc1));
        let (mut dx, dz1) = self.bn1.backward(&relu_backward(&h1, &da1));
        dx.add_assign(&self.skip.backward(&upsample2x_backward(dy)));
        for (a, b) in dz.iter_mut().zip(&dz1) {
            *a += b;
        }
        (dx, dz)
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.skip.visit(&join(prefix, "skip"), f);
    }
}

/// Discriminator block: `[ReLU] -> conv3 -> ReLU -> conv3 -> avgpool`, plus
/// skip `avgpool(conv1(x))`, all convolutions spectrally normalized. The
/// first block of the network omits the leading ReLU so raw pixels pass
/// through unclipped.
#[derive(Debug, Clone)]
pub struct DBlock {
    pub preact: bool,
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub skip: Conv2d,
    cache: Option<(Tensor4, Tensor4)>,
}

impl DBlock {
    pub fn new(c_in: usize, c_out: usize, preact: bool, rng: &mut StreamRng) -> Self {
        Self {
            preact,
            conv1: Conv2d::new(c_in, c_out, 3, true, true, rng),
            conv2: Conv2d::new(c_out, c_out, 3, true, true, rng),
            skip: Conv2d::new(c_in, c_out, 1, true, true, rng),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        if !x.h.is_multiple_of(2) || !x.w.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "discriminator block needs even spatial size, got {}x{}",
                x.h, x.w
            )));
        }
        let a0 = if self.preact { relu(x) } else { x.clone() };
        let c1 = self.conv1.forward(&a0)?;
        let c2 = self.conv2.forward(&relu(&c1))?;
        let mut out = avgpool2(&c2)?;
        // Average pooling commutes with a 1x1 convolution.
        out.add_assign(&self.skip.forward(&avgpool2(x)?)?);
        self.cache = Some((x.clone(), c1));
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Tensor4 {
        let (x, c1) = self.cache.take().expect("block backward before forward");
        let dc2 = avgpool2_backward(dy);
        let da1 = self.conv2.backward(&dc2);
        let da0 = self.conv1.backward(&relu_backward(&c1, &da1));
        let mut dx = if self.preact { relu_backward(&x, &da0) } else { da0 };
        dx.add_assign(&avgpool2_backward(&self.skip.backward(dy)));
        dx
    }

    pub fn refresh_sn(&mut self, iters: usize) {
        for conv in [&mut self.conv1, &mut self.conv2, &mut self.skip] {
            conv.weight.refresh_sn(iters);
        }
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.skip.visit(&join(prefix, "skip"), f);
    }
}
