//! The data path: ingestion, resizing, edges, augmentation and manifests.

mod augment;
mod image;
mod manifest;

use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

pub use self::augment::{augment_one, warp_affine, AugmentParams};
pub use self::image::{load_image, resize, save_png, to_edge, ImageTensor};
pub use self::manifest::{AffineParams, DatasetManifest, ManifestRecord, Transform};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

const SUPPORTED_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

/// Result of [`build_basic_set`]: the manifest plus the inputs that failed to decode.
#[derive(Debug)]
pub struct BasicSet {
    pub manifest: DatasetManifest,
    pub skipped: Vec<(PathBuf, String)>,
}

fn is_supported(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| SUPPORTED_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loads every supported image in `in_dir` (lexicographic by file name), resizes
/// it to `h x w` and writes it as PNG under `out_dir`. Files that fail to decode
/// are skipped and reported.
pub fn build_basic_set(in_dir: &Path, out_dir: &Path, h: usize, w: usize) -> Result<BasicSet> {
    if h == 0 || w == 0 {
        return Err(Error::arg(format!("target size {h}x{w} is empty")));
    }
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(in_dir)
        .map_err(|e| Error::io(in_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_supported(p))
        .collect();
    if inputs.is_empty() {
        return Err(Error::arg(format!("{} contains no supported images", in_dir.display())));
    }
    inputs.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    create_dir(out_dir)?;

    let ids = sample_ids(&inputs);
    let results: Vec<Result<ManifestRecord>> = inputs
        .par_iter()
        .zip(ids.par_iter())
        .map(|(path, id)| {
            let img = resize(&load_image(path)?, h, w)?;
            let out = out_dir.join(format!("{id}.png"));
            save_png(&img, &out)?;
            Ok(ManifestRecord::original(id.clone(), out))
        })
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (path, res) in inputs.into_iter().zip(results) {
        match res {
            Ok(r) => records.push(r),
            Err(e @ (Error::ImageFormat { .. } | Error::Io { .. })) => {
                warn!("skipping {}: {e}", path.display());
                skipped.push((path, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if records.is_empty() {
        return Err(Error::arg(format!("no image in {} could be decoded", in_dir.display())));
    }
    Ok(BasicSet {
        manifest: DatasetManifest::new(records)?,
        skipped,
    })
}

/// File stems, disambiguated with the extension when two inputs share a stem.
fn sample_ids(paths: &[PathBuf]) -> Vec<String> {
    let stem = |p: &PathBuf| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stems: Vec<String> = paths.iter().map(stem).collect();
    paths
        .iter()
        .zip(&stems)
        .map(|(p, s)| {
            if stems.iter().filter(|t| *t == s).count() > 1 {
                p.file_name().unwrap_or_default().to_string_lossy().replace('.', "_")
            } else {
                s.clone()
            }
        })
        .collect()
}

fn check_basic(basic: &DatasetManifest) -> Result<()> {
    if let Some(r) = basic.records.iter().find(|r| !r.transform.is_identity()) {
        return Err(Error::arg(format!(
            "basic set must contain only identity records, found augmented {:?}",
            r.sample_id
        )));
    }
    let labeled = basic.records.iter().filter(|r| r.label.is_some()).count();
    if labeled != 0 && labeled != basic.len() {
        return Err(Error::invariant(format!(
            "basic set mixes labeled ({labeled}) and unlabeled ({}) records",
            basic.len() - labeled
        )));
    }
    Ok(())
}

/// Deterministic augmentation plan: each original followed by `factor - 1`
/// augmented records. Record `i`, copy `j` draws from stream `(seed, i, j)`, so
/// the plan does not depend on evaluation order. No images are touched.
pub fn plan_augmented_set(
    basic: &DatasetManifest,
    p: &AugmentParams,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    p.validate()?;
    check_basic(basic)?;
    let master = StreamRng::new(seed);
    let mut records = Vec::with_capacity(basic.len() * p.factor);
    for (i, src) in basic.records.iter().enumerate() {
        records.push(src.clone());
        let stream = master.split(i as u64);
        for j in 1..p.factor {
            let t = p.sample(&mut stream.split(j as u64));
            let id = format!("{}_aug{j}", src.sample_id);
            records.push(ManifestRecord {
                path: out_dir.join(format!("{id}.png")),
                sample_id: id,
                source_id: src.sample_id.clone(),
                transform: Transform::Affine(t),
                label: src.label,
            });
        }
    }
    DatasetManifest::new(records)
}

/// Writes the image of every augmented record of `plan`, warping its source.
pub fn render_augmented_set(plan: &DatasetManifest) -> Result<()> {
    let sources: std::collections::HashMap<&str, &Path> = plan
        .records
        .iter()
        .filter(|r| r.transform.is_identity())
        .map(|r| (r.sample_id.as_str(), r.path.as_path()))
        .collect();
    let mut dirs: Vec<&Path> = plan
        .records
        .iter()
        .filter(|r| !r.transform.is_identity())
        .filter_map(|r| r.path.parent())
        .collect();
    dirs.dedup();
    for d in dirs {
        create_dir(d)?;
    }
    plan.records
        .par_iter()
        .filter_map(|r| match r.transform {
            Transform::Affine(t) => Some((r, t)),
            Transform::Identity => None,
        })
        .try_for_each(|(r, t)| {
            let src = sources
                .get(r.source_id.as_str())
                .ok_or_else(|| Error::Lookup(format!("source {:?} not in manifest", r.source_id)))?;
            let img = load_image(src)?;
            save_png(&warp_affine(&img, &t), &r.path)
        })
}

/// Plans and renders the augmented set: `|out| = factor * |basic|`.
pub fn build_augmented_set(
    basic: &DatasetManifest,
    p: &AugmentParams,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let plan = plan_augmented_set(basic, p, seed, out_dir)?;
    render_augmented_set(&plan)?;
    Ok(plan)
}

/// Writes the Sobel edge image of every record into `out_dir`; the returned
/// manifest mirrors the input with paths pointing at the edge images.
pub fn build_edge_set(manifest: &DatasetManifest, out_dir: &Path) -> Result<DatasetManifest> {
    create_dir(out_dir)?;
    let records = manifest
        .records
        .par_iter()
        .map(|r| {
            let edge = to_edge(&load_image(&r.path)?)?;
            let path = out_dir.join(format!("{}.png", r.sample_id));
            save_png(&edge, &path)?;
            Ok(ManifestRecord {
                path,
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetManifest::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basic(n: usize, labeled: bool) -> DatasetManifest {
        DatasetManifest::new(
            (0..n)
                .map(|i| {
                    let mut r = ManifestRecord::original(format!("s{i:03}"), format!("s{i:03}.png"));
                    r.label = labeled.then_some(i % 3);
                    r
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn large_set_count_law() {
        let plan = plan_augmented_set(&basic(4018, false), &AugmentParams::default(), 1, Path::new("aug")).unwrap();
        assert_eq!(plan.len(), 20_090);
    }

    #[test]
    fn factor_one_is_identity() {
        let b = basic(4, true);
        let p = AugmentParams {
            factor: 1,
            ..Default::default()
        };
        assert_eq!(plan_augmented_set(&b, &p, 3, Path::new("x")).unwrap(), b);
    }

    #[test]
    fn plan_is_deterministic_and_propagates_labels() {
        let b = basic(7, true);
        let p = AugmentParams::default();
        let a = plan_augmented_set(&b, &p, 42, Path::new("x")).unwrap();
        let c = plan_augmented_set(&b, &p, 42, Path::new("x")).unwrap();
        assert_eq!(a, c);
        assert_eq!(a.len(), 35);
        for r in &a.records {
            let src = b.records.iter().find(|s| s.sample_id == r.source_id).unwrap();
            assert_eq!(r.label, src.label);
        }
        let d = plan_augmented_set(&b, &p, 43, Path::new("x")).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn augmented_input_rejected() {
        let b = basic(2, false);
        let plan = plan_augmented_set(&b, &AugmentParams::default(), 1, Path::new("x")).unwrap();
        assert!(matches!(
            plan_augmented_set(&plan, &AugmentParams::default(), 1, Path::new("x")),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn mixed_labels_rejected() {
        let mut b = basic(3, true);
        b.records[1].label = None;
        assert!(matches!(
            plan_augmented_set(&b, &AugmentParams::default(), 1, Path::new("x")),
            Err(Error::Invariant(_))
        ));
    }
}
