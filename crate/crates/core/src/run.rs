//! Run-directory orchestration: one config document drives every stage from
//! raw images to the Geometry Score report.
//!
//! ```text
//! run/
//!   manifest/    basic.jsonl, images/
//!   augmented/   augmented.jsonl, images/
//!   features/    basic.fmat
//!   labels/      labeled.jsonl, report.json
//!   ckpt/        final.ckpt, metrics.csv
//!   samples/     samples.jsonl, images/
//!   eval/        real.fmat, fake.fmat, gs.json, mrlt.csv, mrlt.svg
//!   provenance.jsonl
//! ```
//!
//! Stage seeds derive from the master seed; the `seed` fields inside the
//! section tables are overwritten.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{label_manifest, two_stage_cluster, ClusterConfig};
use crate::congan::{self, Checkpoint, GanConfig, TrainOptions, TrainingSet};
use crate::error::{Error, Result};
use crate::features::{self, FeatureMatrix, FeatureProvider, ImageSource};
use crate::geoscore::{mrlt_csv, mrlt_svg, score_clouds, GsConfig};
use crate::pipeline::{self, AugmentParams, DatasetManifest, ManifestRecord};
use crate::rng::StreamRng;

/// Version of the run-config document layout.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepareConfig {
    pub height: usize,
    pub width: usize,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self { height: 32, width: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderName {
    #[default]
    Raw,
    Edge,
    Randproj,
    External,
}

impl FromStr for ProviderName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "edge" => Ok(Self::Edge),
            "randproj" => Ok(Self::Randproj),
            "external" => Ok(Self::External),
            _ => Err(Error::arg(format!("unknown feature provider {s:?} (raw, edge, randproj, external)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub provider: ProviderName,
    /// Output dimension of the random projection.
    pub dim: usize,
    /// Project Sobel edges instead of RGB pixels.
    pub edges: bool,
    /// Externally computed `FMAT` file keyed by sample id.
    pub file: Option<PathBuf>,
    /// Z-score every feature dimension before clustering.
    pub standardize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            provider: ProviderName::Raw,
            dim: 64,
            edges: false,
            file: None,
            standardize: false,
        }
    }
}

impl FeatureConfig {
    pub fn provider(&self, seed: u64) -> Result<FeatureProvider> {
        Ok(match self.provider {
            ProviderName::Raw => FeatureProvider::raw_rgb(),
            ProviderName::Edge => FeatureProvider::raw_edge(),
            ProviderName::Randproj => {
                let src = if self.edges { ImageSource::Edge } else { ImageSource::Rgb };
                FeatureProvider::random_projection(src, self.dim, seed)
            }
            ProviderName::External => FeatureProvider::external(
                self.file
                    .clone()
                    .ok_or_else(|| Error::arg("the external provider needs a feature file"))?,
            ),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct GenerateConfig {
    /// Generated images per class; 0 matches the class sizes of the training set.
    pub per_class: usize,
}


/// Every stage's parameters plus the input directory and the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: Option<u32>,
    pub seed: Option<u64>,
    pub input_dir: PathBuf,
    #[serde(default = "default_run_dir")]
    pub run_dir: PathBuf,
    #[serde(default)]
    pub prepare: PrepareConfig,
    #[serde(default)]
    pub augment: AugmentParams,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub gan: GanConfig,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub score: GsConfig,
}

fn default_run_dir() -> PathBuf {
    PathBuf::from("run")
}

impl RunConfig {
    /// Parses a TOML document; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Format(format!("run config: {e}")))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.input_dir);
        rebase(&mut cfg.run_dir);
        if let Some(f) = &mut cfg.features.file {
            rebase(f);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("run config: {e}")))
    }

    pub fn master_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::arg("the master seed is mandatory"))
    }

    /// Every violated invariant, without touching the file system beyond
    /// existence checks. The class count of the GAN is set by clustering and
    /// is not checked here.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(s) = self.schema_version.filter(|&s| s != CONFIG_SCHEMA_VERSION) {
            v.push(format!("schema_version {s} is not supported (expected {CONFIG_SCHEMA_VERSION})"));
        }
        if self.seed.is_none() {
            v.push("seed: the master seed is mandatory".into());
        }
        if !self.input_dir.is_dir() {
            v.push(format!("input_dir {} is not a directory", self.input_dir.display()));
        }
        if self.prepare.height == 0 || self.prepare.width == 0 {
            v.push("prepare: height and width must be positive".into());
        }
        fn section(name: &'static str, list: Vec<String>) -> impl Iterator<Item = String> {
            list.into_iter().map(move |m| format!("{name}: {m}"))
        }
        v.extend(section("augment", self.augment.violations()));
        match self.features.provider {
            ProviderName::Randproj if self.features.dim == 0 => v.push("features: dim must be positive".into()),
            ProviderName::External => match &self.features.file {
                None => v.push("features: the external provider needs a file".into()),
                Some(f) if !f.is_file() => v.push(format!("features: file {} does not exist", f.display())),
                _ => {}
            },
            _ => {}
        }
        v.extend(section("cluster", self.cluster.violations()));
        let gan = GanConfig {
            n_classes: self.gan.n_classes.max(2),
            ..self.gan.clone()
        };
        v.extend(section("gan", gan.violations()));
        v.extend(section("score", self.score.violations()));
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
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prepare,
    Augment,
    Features,
    Cluster,
    Train,
    Generate,
    Score,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Prepare,
        Stage::Augment,
        Stage::Features,
        Stage::Cluster,
        Stage::Train,
        Stage::Generate,
        Stage::Score,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Augment => "augment",
            Stage::Features => "features",
            Stage::Cluster => "cluster",
            Stage::Train => "train",
            Stage::Generate => "generate",
            Stage::Score => "score",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown stage {s:?}")))
    }
}

/// Fixed artifact locations inside a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn basic_manifest(&self) -> PathBuf {
        self.root.join("manifest/basic.jsonl")
    }
    pub fn basic_images(&self) -> PathBuf {
        self.root.join("manifest/images")
    }
    pub fn augmented_manifest(&self) -> PathBuf {
        self.root.join("augmented/augmented.jsonl")
    }
    pub fn augmented_images(&self) -> PathBuf {
        self.root.join("augmented/images")
    }
    pub fn features(&self) -> PathBuf {
        self.root.join("features/basic.fmat")
    }
    pub fn labeled_manifest(&self) -> PathBuf {
        self.root.join("labels/labeled.jsonl")
    }
    pub fn cluster_report(&self) -> PathBuf {
        self.root.join("labels/report.json")
    }
    pub fn ckpt_dir(&self) -> PathBuf {
        self.root.join("ckpt")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.ckpt_dir().join(congan::FINAL_CHECKPOINT)
    }
    pub fn metrics(&self) -> PathBuf {
        self.ckpt_dir().join("metrics.csv")
    }
    pub fn samples_manifest(&self) -> PathBuf {
        self.root.join("samples/samples.jsonl")
    }
    pub fn sample_images(&self) -> PathBuf {
        self.root.join("samples/images")
    }
    pub fn real_features(&self) -> PathBuf {
        self.root.join("eval/real.fmat")
    }
    pub fn fake_features(&self) -> PathBuf {
        self.root.join("eval/fake.fmat")
    }
    pub fn gs_report(&self) -> PathBuf {
        self.root.join("eval/gs.json")
    }
    pub fn mrlt_csv(&self) -> PathBuf {
        self.root.join("eval/mrlt.csv")
    }
    pub fn mrlt_svg(&self) -> PathBuf {
        self.root.join("eval/mrlt.svg")
    }
    pub fn provenance(&self) -> PathBuf {
        self.root.join("provenance.jsonl")
    }

    fn inputs(&self, stage: Stage) -> Vec<PathBuf> {
        match stage {
            Stage::Prepare => vec![],
            Stage::Augment => vec![self.basic_manifest(), self.basic_images()],
            Stage::Features => vec![self.basic_manifest(), self.basic_images()],
            Stage::Cluster => vec![self.features(), self.basic_manifest(), self.augmented_manifest()],
            Stage::Train => vec![self.labeled_manifest(), self.augmented_images()],
            Stage::Generate => vec![self.checkpoint()],
            Stage::Score => vec![self.labeled_manifest(), self.samples_manifest(), self.sample_images()],
        }
    }

    fn outputs(&self, stage: Stage) -> Vec<PathBuf> {
        match stage {
            Stage::Prepare => vec![self.basic_manifest(), self.basic_images()],
            Stage::Augment => vec![self.augmented_manifest(), self.augmented_images()],
            Stage::Features => vec![self.features()],
            Stage::Cluster => vec![self.labeled_manifest(), self.cluster_report()],
            Stage::Train => vec![self.checkpoint(), self.metrics()],
            Stage::Generate => vec![self.samples_manifest(), self.sample_images()],
            Stage::Score => vec![self.gs_report(), self.mrlt_csv(), self.mrlt_svg()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// One line of `provenance.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub stage: Stage,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub duration_s: f64,
}

/// SHA-256 of a file, or of a directory as the digest of its sorted
/// `(relative path, file digest)` pairs.
pub fn hash_path(path: &Path) -> Result<String> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        return Ok(hex::encode(Sha256::digest(&bytes)));
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.file_name().unwrap_or_default().as_encoded_bytes());
        h.update(hash_path(&e)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

/// Which stages to execute; earlier stages must already have their outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub from: Stage,
    pub to: Stage,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            from: Stage::Prepare,
            to: Stage::Score,
        }
    }
}

/// Executes the selected stages in order and returns the run directory. A
/// failing stage aborts the run with [`Error::Stage`]; outputs already
/// written are kept.
pub fn run_pipeline(cfg: &RunConfig, opts: RunOptions) -> Result<PathBuf> {
    cfg.validate()?;
    if opts.from > opts.to {
        return Err(Error::arg(format!("stage range {}..{} is empty", opts.from, opts.to)));
    }
    let master = StreamRng::new(cfg.master_seed()?);
    let layout = RunLayout::new(&cfg.run_dir);
    std::fs::create_dir_all(&layout.root).map_err(|e| Error::io(&layout.root, e))?;
    for stage in Stage::ALL.into_iter().filter(|&s| s >= opts.from && s <= opts.to) {
        let seed = master.derive_seed(stage.index());
        let start = Instant::now();
        let res = (|| {
            let inputs = hash_all(&layout, &layout.inputs(stage))?;
            log::info!("stage {stage} started");
            run_stage(stage, cfg, &layout, seed)?;
            let outputs = hash_all(&layout, &layout.outputs(stage))?;
            append_provenance(
                &layout,
                &ProvenanceRecord {
                    stage,
                    seed,
                    inputs,
                    outputs,
                    duration_s: start.elapsed().as_secs_f64(),
                },
            )
        })();
        res.map_err(|e| e.in_stage(stage.name()))?;
        log::info!("stage {stage} finished in {:.1?}", start.elapsed());
    }
    Ok(layout.root)
}

fn hash_all(layout: &RunLayout, paths: &[PathBuf]) -> Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.strip_prefix(&layout.root).unwrap_or(p).display().to_string(),
                sha256: hash_path(p)?,
            })
        })
        .collect()
}

fn append_provenance(layout: &RunLayout, rec: &ProvenanceRecord) -> Result<()> {
    let path = layout.provenance();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let line = serde_json::to_string(rec)?;
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        None => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn run_stage(stage: Stage, cfg: &RunConfig, layout: &RunLayout, seed: u64) -> Result<()> {
    match stage {
        Stage::Prepare => {
            let set = pipeline::build_basic_set(
                &cfg.input_dir,
                &layout.basic_images(),
                cfg.prepare.height,
                cfg.prepare.width,
            )?;
            for (p, why) in &set.skipped {
                log::warn!("skipped {}: {why}", p.display());
            }
            set.manifest.save(&layout.basic_manifest())
        }
        Stage::Augment => {
            let basic = DatasetManifest::load(&layout.basic_manifest())?;
            let aug = pipeline::build_augmented_set(&basic, &cfg.augment, seed, &layout.augmented_images())?;
            ensure_parent(&layout.augmented_manifest())?;
            aug.save(&layout.augmented_manifest())
        }
        Stage::Features => {
            let basic = DatasetManifest::load(&layout.basic_manifest())?;
            let fm = features::extract(&basic, &cfg.features.provider(seed)?)?;
            ensure_parent(&layout.features())?;
            features::export_features(&fm, &layout.features())
        }
        Stage::Cluster => {
            let fm = features::import_features(&layout.features())?;
            let basic = DatasetManifest::load(&layout.basic_manifest())?;
            let augmented = DatasetManifest::load(&layout.augmented_manifest())?;
            if fm.ids() != basic.ids().as_slice() {
                return Err(Error::invariant("feature rows do not match the basic manifest"));
            }
            let ccfg = ClusterConfig {
                seed,
                ..cfg.cluster.clone()
            };
            let fm = if cfg.features.standardize { fm.standardized() } else { fm };
            let (labels, report) = two_stage_cluster(&fm.to_points(), &ccfg, seed)?;
            let labeled = label_manifest(&basic, &labels, &augmented)?;
            ensure_parent(&layout.labeled_manifest())?;
            labeled.save(&layout.labeled_manifest())?;
            write_file(&layout.cluster_report(), &serde_json::to_vec_pretty(&report)?)
        }
        Stage::Train => {
            let labeled = DatasetManifest::load(&layout.labeled_manifest())?;
            let gcfg = gan_config(cfg, &labeled, seed);
            let opts = TrainOptions {
                out_dir: Some(layout.ckpt_dir()),
                log_path: Some(layout.metrics()),
            };
            congan::train(&labeled, &gcfg, &opts).map(|_| ())
        }
        Stage::Generate => {
            let ckpt = Checkpoint::load(&layout.checkpoint())?;
            let labeled = DatasetManifest::load(&layout.labeled_manifest())?;
            generate_samples(&ckpt, &labeled, cfg.generate.per_class, seed, layout)
        }
        Stage::Score => {
            let ckpt = Checkpoint::load(&layout.checkpoint())?;
            let real = DatasetManifest::load(&layout.labeled_manifest())?;
            let fake = DatasetManifest::load(&layout.samples_manifest())?;
            let real = unit_pixels(&real, &ckpt.config)?;
            let fake = unit_pixels(&fake, &ckpt.config)?;
            ensure_parent(&layout.real_features())?;
            features::export_features(&real, &layout.real_features())?;
            features::export_features(&fake, &layout.fake_features())?;
            let gs = GsConfig {
                seed,
                ..cfg.score.clone()
            };
            let report = score_clouds(&real.to_points(), &fake.to_points(), &gs)?;
            write_file(&layout.gs_report(), &serde_json::to_vec_pretty(&report)?)?;
            write_file(&layout.mrlt_csv(), mrlt_csv(&report).as_bytes())?;
            write_file(&layout.mrlt_svg(), mrlt_svg(&report).as_bytes())
        }
    }
}

/// The configured GAN with the class count found by clustering and the
/// stage seed.
fn gan_config(cfg: &RunConfig, labeled: &DatasetManifest, seed: u64) -> GanConfig {
    let k = labeled.labels().map_or(0, |l| l.iter().max().map_or(0, |m| m + 1));
    GanConfig {
        n_classes: k,
        seed,
        ..cfg.gan.clone()
    }
}

/// Generates `per_class` images for every class (0: as many as the class
/// has training records) and writes them with a labeled manifest.
pub fn generate_samples(
    ckpt: &Checkpoint,
    labeled: &DatasetManifest,
    per_class: usize,
    seed: u64,
    layout: &RunLayout,
) -> Result<()> {
    let labels = labeled.labels().ok_or_else(|| Error::arg("training manifest is unlabeled"))?;
    let k = ckpt.config.n_classes;
    let mut records = Vec::new();
    let master = StreamRng::new(seed);
    for c in 0..k {
        let n = if per_class > 0 {
            per_class
        } else {
            labels.iter().filter(|&&l| l == c).count()
        };
        if n == 0 {
            continue;
        }
        let images = congan::generate(ckpt, &[c], n, master.derive_seed(c as u64))?;
        let paths = congan::save_images(&images, &layout.sample_images(), &format!("class{c:02}_"))?;
        for p in paths {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let mut r = ManifestRecord::original(id, p);
            r.label = Some(c);
            records.push(r);
        }
    }
    let m = DatasetManifest::new(records)?;
    ensure_parent(&layout.samples_manifest())?;
    m.save(&layout.samples_manifest())
}

/// Images of `manifest` at the GAN resolution, flattened to `[0, 1]` rows.
pub fn unit_pixels(manifest: &DatasetManifest, cfg: &GanConfig) -> Result<FeatureMatrix> {
    let set = TrainingSet::from_manifest(manifest, cfg)?;
    let x = &set.images;
    let rows = (0..x.n)
        .map(|i| x.sample(i).iter().map(|&v| ((v + 1.0) / 2.0) as f32).collect())
        .collect();
    FeatureMatrix::from_rows(manifest.ids(), rows)
}
