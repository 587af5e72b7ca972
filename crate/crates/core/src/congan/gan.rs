//! Model state, training loop, sampling.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::adam::{Adam, AdamConfig};
use super::checkpoint::{Checkpoint, NamedTensor};
use super::config::GanConfig;
use super::layers::Mode;
use super::loss::{accuracy, d_loss, g_loss};
use super::networks::{Discriminator, Generator};
use super::param::Module;
use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::pipeline::{self as image, DatasetManifest};
use crate::rng::StreamRng;

/// Images in `[-1, 1]` with class labels.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub images: Tensor4,
    pub labels: Vec<usize>,
}

impl TrainingSet {
    /// Maps `[0, 1]` pixel intensities linearly onto `[-1, 1]`.
    pub fn from_unit_images(unit: &Tensor4, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != unit.n {
            return Err(Error::arg(format!("{} labels for {} images", labels.len(), unit.n)));
        }
        let mut images = unit.clone();
        images.data.iter_mut().for_each(|v| *v = 2.0 * *v - 1.0);
        Ok(Self { images, labels })
    }

    /// Loads every record of a labeled manifest, resized to the configured
    /// size. One-channel configs use the luma of the RGB image.
    pub fn from_manifest(manifest: &DatasetManifest, cfg: &GanConfig) -> Result<Self> {
        let labels = manifest
            .labels()
            .ok_or_else(|| Error::arg("training manifest is unlabeled"))?;
        let (h, w, c) = (cfg.img_h, cfg.img_w, cfg.img_channels);
        if c != 1 && c != 3 {
            return Err(Error::arg(format!("img_channels must be 1 or 3 to load images, got {c}")));
        }
        let mut unit = Tensor4::zeros(manifest.len(), c, h, w);
        for (i, rec) in manifest.records.iter().enumerate() {
            let img = image::resize(&image::load_image(&rec.path)?, h, w)?;
            let dst = unit.sample_mut(i);
            let d = img.data();
            if c == 3 {
                for (o, v) in dst.iter_mut().zip(d) {
                    *o = *v as f64;
                }
            } else {
                let hw = h * w;
                for p in 0..hw {
                    dst[p] = 0.299 * d[p] as f64 + 0.587 * d[hw + p] as f64 + 0.114 * d[2 * hw + p] as f64;
                }
            }
        }
        Self::from_unit_images(&unit, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn gather(&self, idx: &[usize]) -> (Tensor4, Vec<usize>) {
        let s = self.images.sample_len();
        let mut data = Vec::with_capacity(idx.len() * s);
        for &i in idx {
            data.extend_from_slice(self.images.sample(i));
        }
        let x = Tensor4::from_vec(idx.len(), self.images.c, self.images.h, self.images.w, data);
        (x, idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Averages over one epoch of updates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub iter_d: u64,
    pub iter_g: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub ac_acc_real: f64,
    pub ac_acc_fake: f64,
    pub sigma_mean: f64,
    pub sigma_max: f64,
}

pub const METRICS_HEADER: &str = "epoch,iter_d,iter_g,loss_d,loss_g,ac_acc_real,ac_acc_fake";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.iter_d, self.iter_g, self.loss_d, self.loss_g, self.ac_acc_real, self.ac_acc_fake
        )
    }
}

/// Where `fit` writes checkpoints and the metric log.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub out_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

/// Draws batches from a permutation, reshuffling when fewer than a batch remain.
#[derive(Debug, Clone)]
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next(&mut self, size: usize, rng: &mut StreamRng) -> Vec<usize> {
        if self.pos + size > self.order.len() {
            rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        out
    }
}

/// `n x z_dim` standard normal latents.
pub fn sample_latent(n: usize, z_dim: usize, rng: &mut StreamRng) -> Tensor4 {
    Tensor4::matrix(n, z_dim, (0..n * z_dim).map(|_| rng.normal()).collect())
}

fn concat(a: &Tensor4, b: &Tensor4) -> Tensor4 {
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    Tensor4::from_vec(a.n + b.n, a.c, a.h, a.w, data)
}

#[derive(Debug, Clone, Copy, Default)]
struct StepStats {
    loss_d: f64,
    acc_real: f64,
    acc_fake: f64,
}

/// Generator, discriminator, both optimizers and the training RNG.
#[derive(Debug, Clone)]
pub struct Gan {
    pub cfg: GanConfig,
    pub g: Generator,
    pub d: Discriminator,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub rng: StreamRng,
    pub epoch: usize,
    pub iter_d: u64,
    pub iter_g: u64,
    sampler: Option<BatchSampler>,
}

impl Gan {
    pub fn new(cfg: &GanConfig) -> Result<Self> {
        cfg.validate()?;
        let root = StreamRng::new(cfg.seed);
        let mut g = Generator::new(cfg, &mut root.split(0));
        let mut d = Discriminator::new(cfg, &mut root.split(1));
        let adam = |lr| AdamConfig {
            lr,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
        };
        Ok(Self {
            opt_g: Adam::new(adam(cfg.lr_g), &mut g),
            opt_d: Adam::new(adam(cfg.lr_d), &mut d),
            g,
            d,
            rng: root.split(2),
            cfg: cfg.clone(),
            epoch: 0,
            iter_d: 0,
            iter_g: 0,
            sampler: None,
        })
    }

    fn fake_labels(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.rng.below(self.cfg.n_classes)).collect()
    }

    fn check_data(&self, data: &TrainingSet) -> Result<()> {
        let cfg = &self.cfg;
        if data.len() < cfg.batch_size {
            return Err(Error::arg(format!(
                "{} training samples is fewer than the batch size {}",
                data.len(),
                cfg.batch_size
            )));
        }
        let x = &data.images;
        if [x.c, x.h, x.w] != [cfg.img_channels, cfg.img_h, cfg.img_w] {
            return Err(Error::arg(format!(
                "training images are {}x{}x{}, config expects {}x{}x{}",
                x.c, x.h, x.w, cfg.img_channels, cfg.img_h, cfg.img_w
            )));
        }
        if let Some(&bad) = data.labels.iter().find(|&&y| y >= cfg.n_classes) {
            return Err(Error::arg(format!("label {bad} out of range for {} classes", cfg.n_classes)));
        }
        Ok(())
    }

    fn d_step(&mut self, data: &TrainingSet) -> Result<StepStats> {
        let (b, k) = (self.cfg.batch_size, self.cfg.n_classes);
        self.d.refresh_sn(self.cfg.n_power_iter);
        let sampler = self.sampler.get_or_insert_with(|| BatchSampler::new(data.len()));
        let idx = sampler.next(b, &mut self.rng);
        let (real, y_real) = data.gather(&idx);
        let z = sample_latent(b, self.cfg.z_dim, &mut self.rng);
        let y_fake = self.fake_labels(b);
        let fake = self.g.forward(&z, &y_fake, Mode::Train)?;
        let mut y = y_real.clone();
        y.extend_from_slice(&y_fake);
        let out = self.d.forward(&concat(&real, &fake), &y)?;
        let (lr, lf) = out.logits.split_at(b * k);
        let l = d_loss(
            &out.adv[..b],
            &out.adv[b..],
            lr,
            lf,
            &y_real,
            &y_fake,
            k,
            self.cfg.lambda_ac,
            self.cfg.ac_fake_in_d,
        );
        let mut d_adv = l.d_adv_real.clone();
        d_adv.extend_from_slice(&l.d_adv_fake);
        let mut d_logits = l.d_logits_real.clone();
        d_logits.extend_from_slice(&l.d_logits_fake);
        self.d.zero_grad();
        self.d.backward(&d_adv, &d_logits);
        self.opt_d.step(&mut self.d);
        self.iter_d += 1;
        Ok(StepStats {
            loss_d: l.loss,
            acc_real: accuracy(lr, &y_real, k),
            acc_fake: accuracy(lf, &y_fake, k),
        })
    }

    fn g_step(&mut self) -> Result<f64> {
        let (b, k) = (self.cfg.batch_size, self.cfg.n_classes);
        let z = sample_latent(b, self.cfg.z_dim, &mut self.rng);
        let y = self.fake_labels(b);
        let fake = self.g.forward(&z, &y, Mode::Train)?;
        let out = self.d.forward(&fake, &y)?;
        let l = g_loss(&out.adv, &out.logits, &y, k, self.cfg.lambda_ac);
        self.g.zero_grad();
        let dx = self.d.backward(&l.d_adv, &l.d_logits);
        self.g.backward(&dx);
        self.opt_g.step(&mut self.g);
        self.iter_g += 1;
        Ok(l.loss)
    }

    /// `d_steps_per_g` discriminator updates followed by one generator update.
    fn round(&mut self, data: &TrainingSet, acc: &mut [f64; 4]) -> Result<()> {
        for _ in 0..self.cfg.d_steps_per_g {
            let s = self.d_step(data)?;
            acc[0] += s.loss_d;
            acc[2] += s.acc_real;
            acc[3] += s.acc_fake;
        }
        acc[1] += self.g_step()?;
        Ok(())
    }

    /// Runs `g_steps` generator updates regardless of epoch boundaries.
    pub fn train_steps(&mut self, data: &TrainingSet, g_steps: u64) -> Result<()> {
        self.check_data(data)?;
        let mut acc = [0.0; 4];
        for _ in 0..g_steps {
            self.round(data, &mut acc)?;
        }
        Ok(())
    }

    /// One epoch: `floor(n / batch_size)` generator updates.
    pub fn train_epoch(&mut self, data: &TrainingSet) -> Result<EpochMetrics> {
        self.check_data(data)?;
        let per = (data.len() / self.cfg.batch_size) as u64;
        let mut acc = [0.0; 4];
        for _ in 0..per {
            self.round(data, &mut acc)?;
        }
        self.epoch += 1;
        let nd = (per * self.cfg.d_steps_per_g as u64).max(1) as f64;
        let sig = self.d.sigmas();
        let sigma_max = sig.iter().cloned().fold(0.0, f64::max);
        Ok(EpochMetrics {
            epoch: self.epoch,
            iter_d: self.iter_d,
            iter_g: self.iter_g,
            loss_d: acc[0] / nd,
            loss_g: acc[1] / per.max(1) as f64,
            ac_acc_real: acc[2] / nd,
            ac_acc_fake: acc[3] / nd,
            sigma_mean: sig.iter().sum::<f64>() / sig.len().max(1) as f64,
            sigma_max,
        })
    }

    /// Trains until `cfg.epochs`, writing checkpoints and the metric log as
    /// configured. Resumes from the current epoch counter.
    pub fn fit(&mut self, data: &TrainingSet, opts: &TrainOptions) -> Result<Vec<EpochMetrics>> {
        self.check_data(data)?;
        if let Some(dir) = &opts.out_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut log = match &opts.log_path {
            Some(p) => {
                let fresh = self.epoch == 0 || !p.exists();
                let file = std::fs::OpenOptions::new()
                    .create(true)
                    .append(!fresh)
                    .write(true)
                    .truncate(fresh)
                    .open(p)
                    .map_err(|e| Error::io(p, e))?;
                let mut w = std::io::BufWriter::new(file);
                if fresh {
                    writeln!(w, "{METRICS_HEADER}").map_err(|e| Error::io(p, e))?;
                }
                Some((p.clone(), w))
            }
            None => None,
        };
        let mut all = Vec::new();
        while self.epoch < self.cfg.epochs {
            let m = self.train_epoch(data)?;
            log::info!(
                "epoch {} loss_d {:.4} loss_g {:.4} ac_real {:.3} ac_fake {:.3}",
                m.epoch,
                m.loss_d,
                m.loss_g,
                m.ac_acc_real,
                m.ac_acc_fake
            );
            if let Some((p, w)) = &mut log {
                writeln!(w, "{}", m.csv_row())
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io(p.as_path(), e))?;
            }
            if let (Some(dir), every) = (&opts.out_dir, self.cfg.checkpoint_every) {
                if every > 0 && self.epoch.is_multiple_of(every) {
                    self.checkpoint().save(&dir.join(format!("epoch{:05}.ckpt", self.epoch)))?;
                }
            }
            all.push(m);
        }
        if let Some(dir) = &opts.out_dir {
            self.checkpoint().save(&dir.join(FINAL_CHECKPOINT))?;
        }
        Ok(all)
    }

    pub fn checkpoint(&mut self) -> Checkpoint {
        let mut tensors = Vec::new();
        let mut push = |prefix: &str, net: &mut dyn Module, opt: &Adam| {
            let mut i = 0;
            let mut moments = Vec::new();
            net.visit(prefix, &mut |name, p| {
                tensors.push(NamedTensor {
                    name: name.to_string(),
                    shape: p.shape.clone(),
                    data: p.value.iter().map(|&v| v as f32).collect(),
                });
                if p.trainable {
                    moments.push((name.to_string(), p.shape.clone(), i));
                    i += 1;
                }
            });
            for (which, store) in [("m", &opt.m), ("v", &opt.v)] {
                for (name, shape, j) in &moments {
                    tensors.push(NamedTensor {
                        name: format!("adam_{which}.{name}"),
                        shape: shape.clone(),
                        data: store[*j].iter().map(|&v| v as f32).collect(),
                    });
                }
            }
        };
        push("g", &mut self.g, &self.opt_g);
        push("d", &mut self.d, &self.opt_d);
        Checkpoint {
            config: self.cfg.clone(),
            epoch: self.epoch,
            iter_d: self.iter_d,
            iter_g: self.iter_g,
            adam_t_g: self.opt_g.t,
            adam_t_d: self.opt_d.t,
            rng_state: self.rng.state(),
            tensors,
        }
    }

    /// Rebuilds the model; every tensor required by the config must be
    /// present with its implied shape and no others may appear.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut gan = Gan::new(&ckpt.config)?;
        let template = gan.checkpoint();
        if template.tensors.len() != ckpt.tensors.len() {
            let missing: Vec<&str> = template
                .tensors
                .iter()
                .filter(|t| ckpt.tensor(&t.name).is_none())
                .map(|t| t.name.as_str())
                .collect();
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, config implies {} (missing: {})",
                ckpt.tensors.len(),
                template.tensors.len(),
                missing.join(", ")
            )));
        }
        for t in &template.tensors {
            let got = ckpt
                .tensor(&t.name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {}", t.name)))?;
            if got.shape != t.shape {
                return Err(Error::Format(format!(
                    "tensor {} has shape {:?}, config implies {:?}",
                    t.name, got.shape, t.shape
                )));
            }
        }
        let load = |v: &mut Vec<f64>, name: &str| {
            let t = ckpt.tensor(name).expect("checked above");
            *v = t.data.iter().map(|&x| x as f64).collect();
        };
        for (prefix, net, opt) in [
            ("g", &mut gan.g as &mut dyn Module, &mut gan.opt_g),
            ("d", &mut gan.d as &mut dyn Module, &mut gan.opt_d),
        ] {
            let mut i = 0;
            net.visit(prefix, &mut |name, p| {
                load(&mut p.value, name);
                if p.trainable {
                    load(&mut opt.m[i], &format!("adam_m.{name}"));
                    load(&mut opt.v[i], &format!("adam_v.{name}"));
                    i += 1;
                }
            });
        }
        gan.opt_g.t = ckpt.adam_t_g;
        gan.opt_d.t = ckpt.adam_t_d;
        gan.epoch = ckpt.epoch;
        gan.iter_d = ckpt.iter_d;
        gan.iter_g = ckpt.iter_g;
        gan.rng = StreamRng::from_state(ckpt.rng_state.0, ckpt.rng_state.1);
        Ok(gan)
    }

    /// Generator output in inference mode (running batch-norm statistics), so
    /// each sample depends only on its own latent and label.
    pub fn generate_from_latent(&mut self, z: &Tensor4, y: &[usize]) -> Result<Tensor4> {
        self.g.forward(z, y, Mode::Eval)
    }
}

pub const FINAL_CHECKPOINT: &str = "final.ckpt";

impl Checkpoint {
    /// Checks names and shapes against the architecture implied by the config.
    pub fn validate(&self) -> Result<()> {
        Gan::from_checkpoint(self).map(|_| ())
    }
}

/// Trains on a labeled manifest from a fresh initialization.
pub fn train(labeled: &DatasetManifest, cfg: &GanConfig, opts: &TrainOptions) -> Result<(Checkpoint, Vec<EpochMetrics>)> {
    let mut gan = Gan::new(cfg)?;
    let data = TrainingSet::from_manifest(labeled, cfg)?;
    let distinct = {
        let mut l = data.labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    };
    if distinct < cfg.n_classes {
        log::warn!("manifest has {distinct} distinct labels for {} classes", cfg.n_classes);
    }
    let metrics = gan.fit(&data, opts)?;
    Ok((gan.checkpoint(), metrics))
}

/// `n` samples; sample `i` has class `y[i % y.len()]` and latent drawn from `seed`.
pub fn generate(ckpt: &Checkpoint, y: &[usize], n: usize, seed: u64) -> Result<Tensor4> {
    if y.is_empty() {
        return Err(Error::arg("no class labels given"));
    }
    let mut gan = Gan::from_checkpoint(ckpt)?;
    let z = sample_latent(n, ckpt.config.z_dim, &mut StreamRng::new(seed));
    let labels: Vec<usize> = (0..n).map(|i| y[i % y.len()]).collect();
    gan.generate_from_latent(&z, &labels)
}

/// `steps` images along `z_t = (1 - t) z0 + t z1`, `t = 0, 1/(steps-1), ..., 1`.
pub fn interpolate(ckpt: &Checkpoint, y: usize, z0: &[f64], z1: &[f64], steps: usize) -> Result<Tensor4> {
    if steps < 2 {
        return Err(Error::arg(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    let d = ckpt.config.z_dim;
    if z0.len() != d || z1.len() != d {
        return Err(Error::arg(format!("latent endpoints must have {d} dims")));
    }
    let mut data = Vec::with_capacity(steps * d);
    for s in 0..steps {
        let t = s as f64 / (steps - 1) as f64;
        data.extend(z0.iter().zip(z1).map(|(a, b)| (1.0 - t) * a + t * b));
    }
    let mut gan = Gan::from_checkpoint(ckpt)?;
    gan.generate_from_latent(&Tensor4::matrix(steps, d, data), &vec![y; steps])
}

/// Writes a batch of `[-1, 1]` images as PNGs named `{prefix}{i:04}.png`.
pub fn save_images(images: &Tensor4, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(images.n);
    for i in 0..images.n {
        let data = images.sample(i).iter().map(|&v| ((v + 1.0) / 2.0).clamp(0.0, 1.0) as f32).collect();
        let img = image::ImageTensor::new(images.c, images.h, images.w, data)?;
        let path = dir.join(format!("{prefix}{i:04}.png"));
        image::save_png(&img, &path)?;
        paths.push(path);
    }
    Ok(paths)
}
