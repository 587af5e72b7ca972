//! `ccgan`: command-line front end. Every subcommand is a thin wrapper over a
//! library call in `ccgan-core`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use ccgan::clustering::{label_manifest, two_stage_cluster, ClusterConfig};
use ccgan::congan::{self, Checkpoint, GanConfig, TrainOptions};
use ccgan::features::{self, FeatureProvider, ImageSource};
use ccgan::geoscore::{mrlt_csv, mrlt_svg, score_clouds, GsConfig, GsReport, LandmarkSelection};
use ccgan::pipeline::{self, AugmentParams, DatasetManifest, ManifestRecord};
use ccgan::rng::StreamRng;
use ccgan::run::{self, RunConfig, RunOptions, Stage};

/// Semantic version plus the run-config schema version; a unit test keeps
/// the literal in step with the library constant.
const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (config schema 1)");

#[derive(Parser)]
#[command(name = "ccgan", version = VERSION, about = "Cluster-conditioned GAN toolkit")]
struct Cli {
    /// Report failures as one JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Resize every image in a directory and write the basic manifest.
    Prepare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
    },
    /// Expand a basic manifest with random affine copies.
    Augment(AugmentArgs),
    /// Write Sobel edge images for every record of a manifest.
    Edges {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract one feature vector per record into an FMAT file.
    Features(FeaturesArgs),
    /// Estimate the class count, cluster, and label the augmented manifest.
    Cluster(ClusterArgs),
    /// Train the conditional GAN on a labeled manifest.
    Train(TrainArgs),
    /// Sample images of one class from a checkpoint.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        class: usize,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Images along a straight latent path with the class held fixed.
    Interpolate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        class: usize,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Geometry Score between two FMAT point clouds.
    Score(ScoreArgs),
    /// Tabulate and plot the MRLT distributions of a score report.
    PlotMrlt {
        #[arg(long = "in")]
        input: PathBuf,
        /// CSV path followed by SVG path.
        #[arg(long, num_args = 2, value_names = ["CSV", "SVG"])]
        out: Vec<PathBuf>,
    },
    /// Execute the whole chain from a run config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "prepare", value_parser = parse_stage)]
        from: Stage,
        #[arg(long, default_value = "score", value_parser = parse_stage)]
        to: Stage,
    },
    /// List every violated invariant of a run config; exits 1 if any.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output manifest; images go to `--images` (default: `<out dir>/images`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    factor: usize,
    #[arg(long, default_value_t = 8.0)]
    rotate: f64,
    #[arg(long, default_value_t = 0.05)]
    shift: f64,
    #[arg(long, default_value_t = 0.90)]
    zoom_min: f64,
    #[arg(long, default_value_t = 1.10)]
    zoom_max: f64,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = ["raw", "edge", "randproj", "external"])]
    provider: String,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Project edge images (randproj only).
    #[arg(long)]
    edges: bool,
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    features: PathBuf,
    /// Basic manifest the feature rows belong to.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    augmented: PathBuf,
    #[arg(long, default_value_t = 1)]
    stages: usize,
    #[arg(long, default_value_t = 2)]
    kmin: usize,
    #[arg(long, default_value_t = 20)]
    kmax: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Z-score every feature dimension first.
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding the images; record paths are re-rooted here by file name.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, value_parser = parse_size, default_value = "32x32")]
    size: (usize, usize),
    #[arg(long, default_value_t = 3)]
    channels: usize,
    /// Class count; defaults to the largest label + 1.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr_d: f64,
    #[arg(long, default_value_t = 2e-5)]
    lr_g: f64,
    #[arg(long, default_value_t = 2)]
    d_steps: usize,
    #[arg(long, default_value_t = 32)]
    base_channels: usize,
    #[arg(long, default_value_t = 120)]
    z_dim: usize,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 2)]
    attention_position: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda_ac: f64,
    /// Whether the auxiliary loss on generated images also trains D.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    ac_fake_in_d: bool,
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    fake: PathBuf,
    #[arg(long, default_value_t = 64)]
    landmarks: usize,
    #[arg(long, default_value_t = 1.0 / 128.0)]
    gamma: f64,
    #[arg(long, default_value_t = 100)]
    imax: usize,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    /// Farthest-point landmarks instead of a uniform sample.
    #[arg(long)]
    maxmin: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HxW")?;
    let h = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    let w = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    Ok((h, w))
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse().map_err(|e: ccgan::Error| e.to_string())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn out_dir_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn execute(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Prepare { input, out, size } => {
            let set = pipeline::build_basic_set(&input, &out.join("images"), size.0, size.1)?;
            for (p, why) in &set.skipped {
                eprintln!("skipped {}: {why}", p.display());
            }
            let path = out.join("manifest.jsonl");
            set.manifest.save(&path)?;
            println!("{} images -> {}", set.manifest.len(), path.display());
        }
        Cmd::Augment(a) => {
            let basic = DatasetManifest::load(&a.manifest)?;
            let params = AugmentParams {
                rotate_deg_max: a.rotate,
                shift_frac_max: a.shift,
                zoom_min: a.zoom_min,
                zoom_max: a.zoom_max,
                factor: a.factor,
            };
            let images = a.images.unwrap_or_else(|| out_dir_of(&a.out).join("images"));
            let aug = pipeline::build_augmented_set(&basic, &params, a.seed, &images)?;
            std::fs::create_dir_all(out_dir_of(&a.out))?;
            aug.save(&a.out)?;
            println!("{} -> {} records", basic.len(), aug.len());
        }
        Cmd::Edges { manifest, out } => {
            let m = pipeline::build_edge_set(&DatasetManifest::load(&manifest)?, &out)?;
            m.save(&out.join("manifest.jsonl"))?;
        }
        Cmd::Features(f) => {
            let manifest = DatasetManifest::load(&f.manifest)?;
            let provider = match f.provider.as_str() {
                "raw" => FeatureProvider::raw_rgb(),
                "edge" => FeatureProvider::raw_edge(),
                "randproj" => {
                    let src = if f.edges { ImageSource::Edge } else { ImageSource::Rgb };
                    FeatureProvider::random_projection(src, f.dim, f.seed)
                }
                _ => FeatureProvider::external(f.file.ok_or_else(|| anyhow!("--provider external needs --file"))?),
            };
            let fm = features::extract(&manifest, &provider)?;
            features::export_features(&fm, &f.out)?;
            println!("{}x{} features -> {}", fm.rows(), fm.cols(), f.out.display());
        }
        Cmd::Cluster(c) => {
            let fm = features::import_features(&c.features)?;
            let basic = DatasetManifest::load(&c.manifest)?;
            let augmented = DatasetManifest::load(&c.augmented)?;
            let ids = basic.ids();
            let fm = features::lookup_external(&fm, &ids)?;
            let fm = if c.standardize { fm.standardized() } else { fm };
            let cfg = ClusterConfig {
                k_min: c.kmin,
                k_max: c.kmax,
                xmeans_runs: c.runs,
                restarts: c.restarts,
                stages: c.stages,
                seed: c.seed,
                ..ClusterConfig::default()
            };
            let (labels, report) = two_stage_cluster(&fm.to_points(), &cfg, c.seed)?;
            label_manifest(&basic, &labels, &augmented)?.save(&c.out)?;
            write_json(&c.report, &report)?;
            println!("{} classes", report.num_classes);
        }
        Cmd::Train(t) => {
            let mut labeled = DatasetManifest::load(&t.manifest)?;
            if let Some(dir) = &t.images {
                for r in &mut labeled.records {
                    r.path = dir.join(r.path.file_name().unwrap_or_default());
                }
            }
            let k = match t.classes {
                Some(k) => k,
                None => labeled
                    .labels()
                    .and_then(|l| l.into_iter().max())
                    .map(|m| m + 1)
                    .ok_or_else(|| anyhow!("training manifest is unlabeled"))?,
            };
            let cfg = GanConfig {
                img_h: t.size.0,
                img_w: t.size.1,
                img_channels: t.channels,
                base_channels: t.base_channels,
                n_classes: k,
                z_dim: t.z_dim,
                n_gen_blocks: t.blocks,
                attention_position: t.attention_position,
                lr_d: t.lr_d,
                lr_g: t.lr_g,
                batch_size: t.batch,
                d_steps_per_g: t.d_steps,
                epochs: t.epochs,
                lambda_ac: t.lambda_ac,
                ac_fake_in_d: t.ac_fake_in_d,
                checkpoint_every: t.checkpoint_every,
                seed: t.seed,
                ..GanConfig::default()
            };
            let opts = TrainOptions {
                out_dir: Some(t.out.clone()),
                log_path: t.log,
            };
            let (_, metrics) = congan::train(&labeled, &cfg, &opts)?;
            println!(
                "{} epochs -> {}",
                metrics.len(),
                t.out.join(congan::FINAL_CHECKPOINT).display()
            );
        }
        Cmd::Generate {
            ckpt,
            class,
            count,
            seed,
            out,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let images = congan::generate(&ck, &[class], count, seed)?;
            let paths = congan::save_images(&images, &out, &format!("class{class:02}_"))?;
            let records = paths
                .into_iter()
                .map(|p| {
                    let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    let mut r = ManifestRecord::original(id, p);
                    r.label = Some(class);
                    r
                })
                .collect();
            DatasetManifest::new(records)?.save(&out.join("manifest.jsonl"))?;
        }
        Cmd::Interpolate {
            ckpt,
            class,
            steps,
            seed,
            out,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let z = congan::sample_latent(2, ck.config.z_dim, &mut StreamRng::new(seed));
            let images = congan::interpolate(&ck, class, z.sample(0), z.sample(1), steps)?;
            congan::save_images(&images, &out, &format!("class{class:02}_step"))?;
        }
        Cmd::Score(s) => {
            let real = features::import_features(&s.real)?.to_points();
            let fake = features::import_features(&s.fake)?.to_points();
            let cfg = GsConfig {
                n_landmarks: s.landmarks,
                gamma: s.gamma,
                i_max: s.imax,
                n_repeats: s.repeats,
                seed: s.seed,
                landmarks: if s.maxmin {
                    LandmarkSelection::Maxmin
                } else {
                    LandmarkSelection::Uniform
                },
            };
            let report = score_clouds(&real, &fake, &cfg)?;
            write_json(&s.out, &report)?;
            println!("gs = {:.6e}", report.gs);
        }
        Cmd::PlotMrlt { input, out } => {
            let text = std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let report: GsReport = serde_json::from_slice(&text).map_err(ccgan::Error::from)?;
            std::fs::write(&out[0], mrlt_csv(&report)).with_context(|| format!("writing {}", out[0].display()))?;
            std::fs::write(&out[1], mrlt_svg(&report)).with_context(|| format!("writing {}", out[1].display()))?;
        }
        Cmd::Run { config, from, to } => {
            let cfg = RunConfig::load(&config)?;
            let dir = run::run_pipeline(&cfg, RunOptions { from, to })?;
            println!("{}", dir.display());
        }
        Cmd::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            let violations = cfg.violations();
            println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "violations": violations }))?);
            if !violations.is_empty() {
                return Err(anyhow!("{} violation(s)", violations.len()));
            }
        }
    }
    Ok(())
}

fn report(err: &anyhow::Error, json: bool) {
    let core = err.chain().find_map(|e| e.downcast_ref::<ccgan::Error>());
    if json {
        let stage = match core {
            Some(ccgan::Error::Stage { stage, .. }) => Some(stage.as_str()),
            _ => None,
        };
        let obj = serde_json::json!({
            "error": core.map_or("other", |e| e.kind()),
            "stage": stage,
            "message": format!("{err:#}"),
        });
        eprintln!("{obj}");
    } else {
        eprintln!("error: {err:#}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e, cli.json_errors);
            ExitCode::FAILURE
        }
    }
}
