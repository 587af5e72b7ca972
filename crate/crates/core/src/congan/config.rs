use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture, optimizer and schedule settings for the conditional GAN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub img_h: usize,
    pub img_w: usize,
    pub img_channels: usize,
    pub base_channels: usize,
    pub n_classes: usize,
    pub z_dim: usize,
    pub n_gen_blocks: usize,
    /// Generator block whose input receives self-attention (input resolution
    /// `base * 2^p`). The discriminator attends at the same resolution.
    pub attention_position: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub d_steps_per_g: usize,
    pub epochs: usize,
    pub lambda_ac: f64,
    /// Whether the auxiliary classifier loss on fake samples trains D.
    pub ac_fake_in_d: bool,
    pub n_power_iter: usize,
    /// Write a checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            img_h: 32,
            img_w: 32,
            img_channels: 3,
            base_channels: 32,
            n_classes: 10,
            z_dim: 120,
            n_gen_blocks: 4,
            attention_position: 2,
            lr_d: 5e-4,
            lr_g: 2e-5,
            adam_beta1: 0.0,
            adam_beta2: 0.9,
            adam_eps: 1e-8,
            batch_size: 32,
            d_steps_per_g: 2,
            epochs: 500,
            lambda_ac: 1.0,
            ac_fake_in_d: true,
            n_power_iter: 1,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

/// Update counts implied by a dataset size and a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IterationPlan {
    pub g_steps_per_epoch: u64,
    pub g_steps: u64,
    pub d_steps: u64,
}

impl GanConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let b = self.n_gen_blocks;
        if self.n_classes < 2 {
            v.push(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if b == 0 {
            v.push("n_gen_blocks must be at least 1".into());
        }
        if self.z_dim == 0 || !self.z_dim.is_multiple_of(b + 1) {
            v.push(format!(
                "z_dim {} must be a positive multiple of n_gen_blocks + 1 = {}",
                self.z_dim,
                b + 1
            ));
        }
        if b > 0 && b < usize::BITS as usize {
            let f = 1usize << b;
            if self.img_h == 0 || self.img_w == 0 || !self.img_h.is_multiple_of(f) || !self.img_w.is_multiple_of(f) {
                v.push(format!(
                    "image size {}x{} must be a positive multiple of 2^{b} = {f}",
                    self.img_h, self.img_w
                ));
            }
        }
        if b > 0 && self.attention_position >= b {
            v.push(format!(
                "attention_position {} must be below n_gen_blocks {b}",
                self.attention_position
            ));
        }
        if self.img_channels == 0 || self.base_channels == 0 {
            v.push("channel counts must be positive".into());
        }
        if self.batch_size < 2 {
            v.push("batch_size must be at least 2".into());
        }
        if self.d_steps_per_g == 0 {
            v.push("d_steps_per_g must be at least 1".into());
        }
        if self.n_power_iter == 0 {
            v.push("n_power_iter must be at least 1".into());
        }
        if !(self.lr_d > 0.0 && self.lr_g > 0.0) {
            v.push("learning rates must be positive".into());
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                v.push(format!("{name} must lie in [0, 1), got {beta}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            v.push("adam_eps must be positive".into());
        }
        if !(self.lambda_ac >= 0.0 && self.lambda_ac.is_finite()) {
            v.push("lambda_ac must be non-negative".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Argument(v.join("; ")))
        }
    }

    pub fn base_h(&self) -> usize {
        self.img_h >> self.n_gen_blocks
    }

    pub fn base_w(&self) -> usize {
        self.img_w >> self.n_gen_blocks
    }

    pub fn z_chunk(&self) -> usize {
        self.z_dim / (self.n_gen_blocks + 1)
    }

    /// One epoch is `floor(n_samples / batch_size)` generator updates, each
    /// preceded by `d_steps_per_g` discriminator updates.
    pub fn iteration_plan(&self, n_samples: usize) -> IterationPlan {
        let per = (n_samples / self.batch_size.max(1)) as u64;
        let g = per * self.epochs as u64;
        IterationPlan {
            g_steps_per_epoch: per,
            g_steps: g,
            d_steps: g * self.d_steps_per_g as u64,
        }
    }
}
