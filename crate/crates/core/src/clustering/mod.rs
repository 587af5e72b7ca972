//! Class discovery: K-means++ / Lloyd, BIC-driven X-means, averaged class-count
//! estimation, optional second-stage splitting, and label propagation onto an
//! augmented manifest.

mod kmeans;
mod xmeans;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::kmeans::{inertia, kmeans, kmeanspp_indices, kmeanspp_seed, lloyd, nearest};
pub use self::xmeans::{bic, bic_of, xmeans};
use crate::error::{Error, Result};
use crate::pipeline::DatasetManifest;
use crate::points::Points;
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub xmeans_runs: usize,
    pub lloyd_max_iter: usize,
    /// Relative inertia improvement below which Lloyd stops.
    pub lloyd_tol: f64,
    pub restarts: usize,
    pub stages: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 20,
            xmeans_runs: 10,
            lloyd_max_iter: 300,
            lloyd_tol: 1e-6,
            restarts: 10,
            stages: 1,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.k_min < 2 {
            v.push(format!("k_min = {} must be >= 2", self.k_min));
        }
        if self.k_min > self.k_max {
            v.push(format!("k_min = {} exceeds k_max = {}", self.k_min, self.k_max));
        }
        if self.xmeans_runs == 0 || self.lloyd_max_iter == 0 || self.restarts == 0 {
            v.push("xmeans_runs, lloyd_max_iter and restarts must be positive".into());
        }
        if !(self.lloyd_tol >= 0.0) {
            v.push(format!("lloyd_tol = {} must be >= 0", self.lloyd_tol));
        }
        if !(1..=2).contains(&self.stages) {
            v.push(format!("stages = {} must be 1 or 2", self.stages));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            Some(m) => Err(Error::arg(m.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// NaN when undefined (`n <= k`).
    pub bic: f64,
    /// Inertia after each Lloyd update (first entry: initial assignment).
    pub inertia_trace: Vec<f64>,
    /// `(k, bic)` after each X-means sweep.
    pub bic_trace: Vec<(usize, f64)>,
}

/// Arithmetic mean of class counts rounded half-up.
pub fn mean_half_up(counts: &[usize]) -> usize {
    assert!(!counts.is_empty(), "mean of no runs");
    let (sum, n) = (counts.iter().sum::<usize>(), counts.len());
    (2 * sum + n) / (2 * n)
}

/// Runs `estimator` once per derived run seed and averages the counts.
pub fn estimate_num_classes_with<F>(runs: usize, seed: u64, estimator: F) -> Result<(usize, Vec<usize>)>
where
    F: Fn(u64) -> Result<usize> + Sync,
{
    if runs == 0 {
        return Err(Error::arg("need at least one X-means run"));
    }
    let master = StreamRng::new(seed);
    let ks = (0..runs)
        .into_par_iter()
        .map(|r| estimator(master.derive_seed(r as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok((mean_half_up(&ks), ks))
}

/// X-means `cfg.xmeans_runs` times; returns the half-up mean of the k values
/// together with the per-run values.
pub fn estimate_num_classes(x: &Points, cfg: &ClusterConfig, seed: u64) -> Result<(usize, Vec<usize>)> {
    cfg.validate()?;
    estimate_num_classes_with(cfg.xmeans_runs, seed, |s| Ok(xmeans(x, cfg, &mut StreamRng::new(s))?.k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOneReport {
    pub xmeans_ks: Vec<usize>,
    pub k: usize,
    pub inertia: f64,
    pub bic: f64,
}

/// Estimates k, then keeps the best of `cfg.restarts` K-means++ + Lloyd fits.
pub fn cluster_dataset(x: &Points, cfg: &ClusterConfig, seed: u64) -> Result<(ClusterModel, StageOneReport)> {
    cfg.validate()?;
    if x.len() < cfg.k_min {
        return Err(Error::arg(format!("{} points cannot form {} clusters", x.len(), cfg.k_min)));
    }
    let master = StreamRng::new(seed);
    let (k, ks) = estimate_num_classes(x, cfg, master.derive_seed(0))?;
    let k = k.clamp(cfg.k_min, cfg.k_max.min(x.len()));
    let mut model = kmeans(x, k, cfg, &mut master.split(1))?;
    model.bic = bic(x, &model).unwrap_or(f64::NAN);
    let report = StageOneReport {
        xmeans_ks: ks,
        k,
        inertia: model.inertia,
        bic: model.bic,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubClusterReport {
    pub cluster: usize,
    pub members: usize,
    pub k: usize,
    pub bic_trace: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub stage1: StageOneReport,
    pub stage2: Option<Vec<SubClusterReport>>,
    pub num_classes: usize,
}

/// Renumbers labels densely in order of first appearance.
pub fn renumber<T: Eq + std::hash::Hash + Clone>(keys: &[T]) -> Vec<usize> {
    let mut map = HashMap::new();
    keys.iter()
        .map(|k| {
            let next = map.len();
            *map.entry(k.clone()).or_insert(next)
        })
        .collect()
}

/// Stage 1 clustering, then (for `cfg.stages == 2`) X-means inside every stage-1
/// cluster with at least `2 * k_min` members. Sub-cluster X-means starts from a
/// single center so that "no split" is a possible outcome.
pub fn two_stage_cluster(x: &Points, cfg: &ClusterConfig, seed: u64) -> Result<(Vec<usize>, ClusterReport)> {
    let (model, stage1) = cluster_dataset(x, cfg, seed)?;
    if cfg.stages < 2 {
        let labels = renumber(&model.assignments);
        let num_classes = stage1.k;
        return Ok((
            labels,
            ClusterReport {
                stage1,
                stage2: None,
                num_classes,
            },
        ));
    }
    let master = StreamRng::new(seed).split(2);
    let subs = (0..model.k)
        .into_par_iter()
        .map(|c| {
            let members: Vec<usize> = (0..x.len()).filter(|&i| model.assignments[i] == c).collect();
            if members.len() < 2 * cfg.k_min {
                return Ok((members.clone(), None, SubClusterReport {
                    cluster: c,
                    members: members.len(),
                    k: 1,
                    bic_trace: Vec::new(),
                }));
            }
            let sub = xmeans::xmeans_from(&x.select(&members), 1, cfg, &mut master.split(c as u64))?;
            let report = SubClusterReport {
                cluster: c,
                members: members.len(),
                k: sub.k,
                bic_trace: sub.bic_trace.clone(),
            };
            Ok((members, (sub.k >= 2).then_some(sub.assignments), report))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut keys: Vec<(usize, usize)> = model.assignments.iter().map(|&c| (c, 0)).collect();
    let mut reports = Vec::with_capacity(subs.len());
    for (members, sub_labels, report) in subs {
        if let Some(sl) = sub_labels {
            for (&i, &s) in members.iter().zip(&sl) {
                keys[i].1 = s;
            }
        }
        reports.push(report);
    }
    let labels = renumber(&keys);
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok((
        labels,
        ClusterReport {
            stage1,
            stage2: Some(reports),
            num_classes,
        },
    ))
}

/// Gives every record of `augmented` the label of its source in `basic`.
pub fn label_manifest(basic: &DatasetManifest, labels: &[usize], augmented: &DatasetManifest) -> Result<DatasetManifest> {
    if labels.is_empty() {
        return Err(Error::arg("no labels supplied"));
    }
    if labels.len() != basic.len() {
        return Err(Error::arg(format!(
            "{} labels for {} basic records",
            labels.len(),
            basic.len()
        )));
    }
    let by_id: HashMap<&str, usize> = basic
        .records
        .iter()
        .zip(labels)
        .map(|(r, &l)| (r.sample_id.as_str(), l))
        .collect();
    let mut out = augmented.clone();
    for r in &mut out.records {
        let l = by_id
            .get(r.source_id.as_str())
            .ok_or_else(|| Error::Lookup(format!("source {:?} of {:?} is not in the basic set", r.source_id, r.sample_id)))?;
        r.label = Some(*l);
    }
    out.validate()?;
    Ok(out)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.values().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
