//! Image to feature-vector mapping for clustering.
//!
//! A [`FeatureProvider`] pairs an image source (RGB or Sobel edges) with a
//! mapping: raw flattening, a seeded Gaussian random projection, an explicit
//! projection matrix, or an id-keyed lookup into an externally computed
//! `FMAT` file (for example, pooled activations of a pretrained network).

mod fmat;
mod matrix;

use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;

pub use self::fmat::{decode as decode_fmat, encode as encode_fmat, export_features, import_features};
pub use self::matrix::FeatureMatrix;
use crate::error::{Error, Result};
use crate::pipeline::{load_image, to_edge, DatasetManifest, ImageTensor};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageSource {
    Rgb,
    /// Sobel edge image; applied before the mapping.
    Edge,
}

/// Dense `out_dim x in_dim` linear map applied to flattened pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    out_dim: usize,
    in_dim: usize,
    weights: Vec<f64>,
}

impl Projection {
    /// Entries drawn i.i.d. N(0, 1) in row-major order and scaled by `1/sqrt(out_dim)`.
    pub fn gaussian(in_dim: usize, out_dim: usize, seed: u64) -> Self {
        let mut rng = StreamRng::new(seed);
        let scale = 1.0 / (out_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim).map(|_| rng.normal() * scale).collect();
        Self {
            out_dim,
            in_dim,
            weights,
        }
    }

    pub fn from_matrix(out_dim: usize, in_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != out_dim * in_dim {
            return Err(Error::arg(format!(
                "projection has {} weights, expected {out_dim}x{in_dim}",
                weights.len()
            )));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weights,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self {
            out_dim: dim,
            in_dim: dim,
            weights,
        }
    }

    pub fn apply(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.in_dim {
            return Err(Error::invariant(format!(
                "projection expects {} inputs, got {}",
                self.in_dim,
                x.len()
            )));
        }
        Ok(self
            .weights
            .chunks_exact(self.in_dim)
            .map(|row| row.iter().zip(x).map(|(w, &v)| w * v as f64).sum::<f64>() as f32)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderKind {
    Raw,
    RandomProjection { dim: usize, seed: u64 },
    Matrix(Projection),
    External(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureProvider {
    pub source: ImageSource,
    pub kind: ProviderKind,
}

impl FeatureProvider {
    pub fn raw_rgb() -> Self {
        Self {
            source: ImageSource::Rgb,
            kind: ProviderKind::Raw,
        }
    }

    pub fn raw_edge() -> Self {
        Self {
            source: ImageSource::Edge,
            kind: ProviderKind::Raw,
        }
    }

    pub fn random_projection(source: ImageSource, dim: usize, seed: u64) -> Self {
        Self {
            source,
            kind: ProviderKind::RandomProjection { dim, seed },
        }
    }

    pub fn external(path: impl Into<PathBuf>) -> Self {
        Self {
            source: ImageSource::Rgb,
            kind: ProviderKind::External(path.into()),
        }
    }

    fn pixels(&self, img: ImageTensor) -> Result<Vec<f32>> {
        Ok(match self.source {
            ImageSource::Rgb => img.into_data(),
            ImageSource::Edge => to_edge(&img)?.into_data(),
        })
    }
}

/// Builds the feature matrix for `manifest`, one row per record in manifest order.
pub fn extract(manifest: &DatasetManifest, provider: &FeatureProvider) -> Result<FeatureMatrix> {
    let ids = manifest.ids();
    if let ProviderKind::External(path) = &provider.kind {
        return lookup_external(&import_features(path)?, &ids);
    }
    let pixels: Vec<Vec<f32>> = manifest
        .records
        .par_iter()
        .map(|r| provider.pixels(load_image(&r.path)?))
        .collect::<Result<_>>()?;
    let in_dim = pixels.first().map_or(0, Vec::len);
    if let Some(i) = pixels.iter().position(|p| p.len() != in_dim) {
        return Err(Error::invariant(format!(
            "sample {:?} has {} pixels, expected {in_dim}",
            ids[i],
            pixels[i].len()
        )));
    }
    let rows = match &provider.kind {
        ProviderKind::Raw => pixels,
        ProviderKind::RandomProjection { dim, seed } => {
            let proj = Projection::gaussian(in_dim, *dim, *seed);
            project_all(&proj, &pixels)?
        }
        ProviderKind::Matrix(proj) => project_all(proj, &pixels)?,
        ProviderKind::External(_) => unreachable!(),
    };
    FeatureMatrix::from_rows(ids, rows)
}

fn project_all(proj: &Projection, pixels: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
    pixels.par_iter().map(|p| proj.apply(p)).collect()
}

/// Rows of `table` reordered to `ids`.
pub fn lookup_external(table: &FeatureMatrix, ids: &[String]) -> Result<FeatureMatrix> {
    let index: HashMap<&str, usize> = table.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let rows = ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| table.row(i).to_vec())
                .ok_or_else(|| Error::Lookup(format!("sample {id:?} missing from external feature file")))
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return FeatureMatrix::new(0, table.cols(), Vec::new(), Vec::new());
    }
    FeatureMatrix::from_rows(ids.to_vec(), rows)
}
