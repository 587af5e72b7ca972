//! Cluster-conditioned GAN toolkit.
//!
//! The crate turns a small, unlabeled image collection into a class-conditioned
//! training set and evaluates what a generator learns from it:
//!
//! * [`pipeline`]: image ingestion, resizing, Sobel edges, affine augmentation
//!   and JSON Lines manifests.
//! * [`features`]: per-image feature vectors (raw pixels, edges, random
//!   projections, or externally computed vectors in the `FMAT` format).
//! * [`clustering`]: K-means++ seeding, Lloyd refinement, BIC-driven X-means,
//!   class-count averaging and two-stage clustering.
//! * [`congan`]: a class-conditional ResBlock GAN with spectral normalization,
//!   self-attention, conditional batch norm, a projection discriminator and an
//!   auxiliary classifier, all with hand-written backward passes.
//! * [`geoscore`]: lazy witness filtrations, H1 persistence, relative living
//!   times and the Geometry Score.
//! * [`run`]: run-directory orchestration of the whole chain.
//!
//! Every stochastic step draws from [`rng::StreamRng`], so a single master seed
//! reproduces a run.

pub mod clustering;
pub mod congan;
pub mod error;
pub mod features;
pub mod geoscore;
pub mod pipeline;
pub mod points;
pub mod rng;
pub mod run;

pub use error::{Error, Result};
