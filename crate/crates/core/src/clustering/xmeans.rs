//! BIC scoring and the X-means "improve structure" loop.

use super::kmeans::{kmeanspp_seed, lloyd};
use super::{ClusterConfig, ClusterModel};
use crate::error::{Error, Result};
use crate::points::{sq_dist, Points};
use crate::rng::StreamRng;

/// Spherical-Gaussian BIC of a hard clustering (higher is better).
///
/// With `n` points in `d` dims split into clusters of sizes `n_j` with squared
/// error `sse`, the pooled variance is `sse / (d (n - k))` and
///
/// ```text
/// ll  = sum_j n_j ln(n_j / n) - (n d / 2) ln(2 pi var) - sse / (2 var)
/// bic = ll - (k (d + 1) / 2) ln n
/// ```
pub fn bic_of(x: &Points, assignments: &[usize], centroids: &[Vec<f64>]) -> Result<f64> {
    let (n, d, k) = (x.len(), x.dims().max(1), centroids.len());
    if n <= k {
        return Err(Error::arg(format!("BIC needs more points ({n}) than clusters ({k})")));
    }
    let mut counts = vec![0usize; k];
    let mut sse = 0.0;
    for (r, &a) in x.rows().zip(assignments) {
        counts[a] += 1;
        sse += sq_dist(r, &centroids[a]);
    }
    let scale = x.as_slice().iter().map(|v| v * v).sum::<f64>() / (n * d) as f64;
    let floor = 1e-12 * scale.max(1e-300);
    let var = (sse / (d * (n - k)) as f64).max(floor);
    let (nf, df) = (n as f64, d as f64);
    let mix: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * (c as f64 / nf).ln())
        .sum();
    let ll = mix - 0.5 * nf * df * (2.0 * std::f64::consts::PI * var).ln() - sse / (2.0 * var);
    let params = (k * (d + 1)) as f64;
    Ok(ll - 0.5 * params * nf.ln())
}

pub fn bic(x: &Points, model: &ClusterModel) -> Result<f64> {
    bic_of(x, &model.assignments, &model.centroids)
}

fn mean_of(x: &Points) -> Vec<f64> {
    let mut m = vec![0.0; x.dims()];
    for r in x.rows() {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|a| *a /= x.len() as f64);
    m
}

/// Local split test on one cluster's members: returns the BIC gain and the two
/// child centroids when a 2-means fit beats the single-center model.
fn try_split(sub: &Points, cfg: &ClusterConfig, rng: &mut StreamRng) -> Result<Option<(f64, Vec<Vec<f64>>)>> {
    if sub.len() < 3 {
        return Ok(None);
    }
    let one = vec![mean_of(sub)];
    let bic1 = bic_of(sub, &vec![0; sub.len()], &one)?;
    let child = lloyd(sub, kmeanspp_seed(sub, 2, rng)?, cfg);
    let bic2 = bic(sub, &child)?;
    Ok((bic2 > bic1).then_some((bic2 - bic1, child.centroids)))
}

/// X-means starting from `start_k` clusters (K-means++ seeded Lloyd); each sweep
/// tests every cluster for a BIC-improving local split, accepts the largest
/// gains first while `k < cfg.k_max`, then refits globally.
pub(crate) fn xmeans_from(x: &Points, start_k: usize, cfg: &ClusterConfig, rng: &mut StreamRng) -> Result<ClusterModel> {
    if x.len() < start_k {
        return Err(Error::arg(format!(
            "X-means needs at least {start_k} points, got {}",
            x.len()
        )));
    }
    let mut model = lloyd(x, kmeanspp_seed(x, start_k, rng)?, cfg);
    let mut trace = vec![(model.k, bic(x, &model).unwrap_or(f64::NAN))];
    while model.k < cfg.k_max {
        let mut splits = Vec::new();
        for j in 0..model.k {
            let members: Vec<usize> = (0..x.len()).filter(|&i| model.assignments[i] == j).collect();
            if let Some((gain, children)) = try_split(&x.select(&members), cfg, rng)? {
                splits.push((gain, j, children));
            }
        }
        if splits.is_empty() {
            break;
        }
        splits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        splits.truncate(cfg.k_max - model.k);
        let mut children: Vec<Option<Vec<Vec<f64>>>> = vec![None; model.k];
        for (_, j, c) in splits {
            children[j] = Some(c);
        }
        let centroids: Vec<Vec<f64>> = model
            .centroids
            .iter()
            .zip(children)
            .flat_map(|(c, ch)| ch.unwrap_or_else(|| vec![c.clone()]))
            .collect();
        model = lloyd(x, centroids, cfg);
        trace.push((model.k, bic(x, &model).unwrap_or(f64::NAN)));
    }
    model.bic = bic(x, &model).unwrap_or(f64::NAN);
    model.bic_trace = trace;
    Ok(model)
}

pub fn xmeans(x: &Points, cfg: &ClusterConfig, rng: &mut StreamRng) -> Result<ClusterModel> {
    cfg.validate()?;
    xmeans_from(x, cfg.k_min, cfg, rng)
}
