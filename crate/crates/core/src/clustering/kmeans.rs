//! K-means++ seeding and Lloyd refinement on squared Euclidean distance.

use rand::RngCore;
use rayon::prelude::*;

use super::{ClusterConfig, ClusterModel};
use crate::error::{Error, Result};
use crate::points::{sq_dist, Points};
use crate::rng::StreamRng;

/// Index and squared distance of the nearest centroid; ties go to the lowest index.
#[inline]
pub fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// K-means++ seeding returning row indices: the first uniformly, each next
/// with probability proportional to the squared distance to the nearest chosen
/// row. When every remaining row coincides with a chosen one, the next pick is
/// uniform over the unchosen rows.
pub fn kmeanspp_indices(x: &Points, k: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::arg(format!("cannot seed {k} centroids from {n} points")));
    }
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.below(n);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = x.rows().map(|r| sq_dist(r, x.row(first))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    acc += d;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.below(free.len())]
        };
        chosen.push(next);
        taken[next] = true;
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    Ok(chosen)
}

pub fn kmeanspp_seed(x: &Points, k: usize, rng: &mut StreamRng) -> Result<Vec<Vec<f64>>> {
    Ok(kmeanspp_indices(x, k, rng)?
        .into_iter()
        .map(|i| x.row(i).to_vec())
        .collect())
}

/// Nearest-centroid assignment followed by empty-cluster repair. Each empty
/// cluster (in index order) takes the point farthest from its centroid among
/// clusters that can spare one, and its centroid moves onto that point.
fn assign(x: &Points, centroids: &mut [Vec<f64>]) -> Vec<usize> {
    let k = centroids.len();
    let (mut labels, mut d2): (Vec<usize>, Vec<f64>) =
        x.rows().map(|r| nearest(r, centroids)).unzip();
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..x.len() {
            if counts[labels[i]] > 1 && far.is_none_or(|f| d2[i] > d2[f]) {
                far = Some(i);
            }
        }
        let Some(p) = far else { break };
        counts[labels[p]] -= 1;
        counts[c] = 1;
        labels[p] = c;
        d2[p] = 0.0;
        centroids[c] = x.row(p).to_vec();
    }
    labels
}

fn means(x: &Points, labels: &[usize], centroids: &mut [Vec<f64>]) {
    let d = x.dims();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in x.rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(r) {
            *s += v;
        }
    }
    for ((c, s), n) in centroids.iter_mut().zip(sums).zip(counts) {
        if n > 0 {
            *c = s.into_iter().map(|v| v / n as f64).collect();
        }
    }
}

pub fn inertia(x: &Points, labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    x.rows().zip(labels).map(|(r, &l)| sq_dist(r, &centroids[l])).sum()
}

/// Lloyd iteration from `init` until assignments stop changing, the relative
/// inertia improvement drops below `cfg.lloyd_tol`, or `cfg.lloyd_max_iter`
/// updates have run. The returned assignments are nearest-centroid for the
/// returned centroids.
pub fn lloyd(x: &Points, init: Vec<Vec<f64>>, cfg: &ClusterConfig) -> ClusterModel {
    let mut centroids = init;
    let mut labels = assign(x, &mut centroids);
    let mut current = inertia(x, &labels, &centroids);
    let mut trace = vec![current];
    for _ in 0..cfg.lloyd_max_iter {
        means(x, &labels, &mut centroids);
        let next_labels = assign(x, &mut centroids);
        let next = inertia(x, &next_labels, &centroids);
        trace.push(next);
        let changed = next_labels != labels;
        labels = next_labels;
        let improvement = current - next;
        current = next;
        if !changed || improvement <= cfg.lloyd_tol * current.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    ClusterModel {
        k: centroids.len(),
        centroids,
        assignments: labels,
        inertia: current,
        bic: f64::NAN,
        inertia_trace: trace,
        bic_trace: Vec::new(),
    }
}

/// `cfg.restarts` independent K-means++ + Lloyd fits; lowest inertia wins,
/// ties to the lowest restart index.
pub fn kmeans(x: &Points, k: usize, cfg: &ClusterConfig, rng: &mut StreamRng) -> Result<ClusterModel> {
    if k == 0 || k > x.len() {
        return Err(Error::arg(format!("cannot fit {k} clusters to {} points", x.len())));
    }
    let base = StreamRng::new(rng.next_u64());
    let fits: Vec<ClusterModel> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut stream = base.split(r as u64);
            let init = kmeanspp_seed(x, k, &mut stream)?;
            Ok(lloyd(x, init, cfg))
        })
        .collect::<Result<_>>()?;
    Ok(fits
        .into_iter()
        .reduce(|best, m| if m.inertia < best.inertia { m } else { best })
        .expect("at least one restart"))
}
