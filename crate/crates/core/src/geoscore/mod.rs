//! Geometry Score: compares two point clouds by the distribution of how long
//! their witness complexes carry a given number of one-dimensional holes.

mod persistence;
mod plot;
mod witness;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::persistence::{persistence_h1, PersistenceSet};
pub use self::plot::{mrlt_csv, mrlt_svg};
pub use self::witness::{edge_births, sort_filtration, witness_filtration, Simplex};
use crate::error::{Error, Result};
use crate::points::{dist, sq_dist, Points};
use crate::rng::StreamRng;

/// Point clouds are plain row sets (feature vectors or flattened images).
pub type PointCloud = Points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkSelection {
    /// Uniform sample without replacement.
    #[default]
    Uniform,
    /// Random first landmark, then repeatedly the point farthest from the chosen set.
    Maxmin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsConfig {
    pub n_landmarks: usize,
    pub gamma: f64,
    pub i_max: usize,
    pub n_repeats: usize,
    pub seed: u64,
    pub landmarks: LandmarkSelection,
}

impl Default for GsConfig {
    fn default() -> Self {
        Self {
            n_landmarks: 64,
            gamma: 1.0 / 128.0,
            i_max: 100,
            n_repeats: 100,
            seed: 0,
            landmarks: LandmarkSelection::Uniform,
        }
    }
}

impl GsConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_landmarks < 3 {
            v.push(format!("n_landmarks must be at least 3, got {}", self.n_landmarks));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            v.push(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.i_max < 2 {
            v.push(format!("i_max must be at least 2, got {}", self.i_max));
        }
        if self.n_repeats == 0 {
            v.push("n_repeats must be positive".into());
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
}

/// Mean relative living times: `p[i]` is the average fraction of the
/// filtration range during which exactly `i` holes exist (last bin: `>= i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrltDistribution {
    pub p: Vec<f64>,
}

impl MrltDistribution {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.p.iter().enumerate() {
            if v > self.p[best] {
                best = i;
            }
        }
        best
    }
}

pub fn select_landmarks(x: &PointCloud, k: usize, how: LandmarkSelection, rng: &mut StreamRng) -> Result<Vec<usize>> {
    if k > x.len() {
        return Err(Error::arg(format!("{k} landmarks requested from {} points", x.len())));
    }
    match how {
        LandmarkSelection::Uniform => Ok(rng.sample_indices(x.len(), k)),
        LandmarkSelection::Maxmin => {
            let mut chosen = vec![rng.below(x.len())];
            let mut d: Vec<f64> = x.rows().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
            while chosen.len() < k {
                let mut best = 0;
                for i in 1..d.len() {
                    if d[i] > d[best] {
                        best = i;
                    }
                }
                chosen.push(best);
                for (i, r) in x.rows().enumerate() {
                    d[i] = d[i].min(sq_dist(r, x.row(best)));
                }
            }
            Ok(chosen)
        }
    }
}

fn max_pairwise(x: &PointCloud, landmarks: &[usize]) -> f64 {
    let mut m = 0.0f64;
    for (i, &a) in landmarks.iter().enumerate() {
        for &b in &landmarks[i + 1..] {
            m = m.max(dist(x.row(a), x.row(b)));
        }
    }
    m
}

/// Relative living times for one landmark set, over `[0, alpha_max]` with
/// `alpha_max = gamma * (max pairwise landmark distance)`.
pub fn rlt(x: &PointCloud, landmarks: &[usize], cfg: &GsConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let alpha_max = cfg.gamma * max_pairwise(x, landmarks);
    if !(alpha_max > 0.0) {
        return Err(Error::Degenerate("all landmarks coincide".into()));
    }
    let stream = witness_filtration(x, landmarks, alpha_max)?;
    let pers = persistence_h1(&stream, alpha_max)?;
    Ok(living_times(&pers, alpha_max, cfg.i_max))
}

/// Fraction of `[0, alpha_max]` spent at each hole count, counts at or above
/// `i_max - 1` clamped into the last bin.
pub fn living_times(pers: &PersistenceSet, alpha_max: f64, i_max: usize) -> Vec<f64> {
    let mut events: Vec<(f64, i64)> = Vec::with_capacity(2 * pers.intervals.len());
    for &(b, d) in &pers.intervals {
        let (b, d) = (b.clamp(0.0, alpha_max), d.clamp(0.0, alpha_max));
        if b < d {
            events.push((b, 1));
            events.push((d, -1));
        }
    }
    events.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
    let mut bins = vec![0.0; i_max];
    let (mut t, mut count) = (0.0, 0i64);
    for (at, delta) in events {
        bins[(count as usize).min(i_max - 1)] += at - t;
        t = at;
        count += delta;
    }
    bins[(count as usize).min(i_max - 1)] += alpha_max - t;
    let total: f64 = bins.iter().sum();
    bins.iter_mut().for_each(|v| *v /= total);
    bins
}

/// Average of [`rlt`] over `n_repeats` independent landmark draws; draw `r`
/// uses the stream `split(r)` of the configured seed.
pub fn mrlt(x: &PointCloud, cfg: &GsConfig) -> Result<MrltDistribution> {
    cfg.validate()?;
    if x.len() < 2 {
        return Err(Error::arg("point cloud needs at least 2 points"));
    }
    if x.len() < cfg.n_landmarks {
        return Err(Error::arg(format!(
            "{} points is fewer than {} landmarks",
            x.len(),
            cfg.n_landmarks
        )));
    }
    let base = StreamRng::new(cfg.seed);
    let runs: Vec<Vec<f64>> = (0..cfg.n_repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = base.split(r as u64);
            let lm = select_landmarks(x, cfg.n_landmarks, cfg.landmarks, &mut rng)?;
            rlt(x, &lm, cfg)
        })
        .collect::<Result<_>>()?;
    let mut p = vec![0.0; cfg.i_max];
    for r in &runs {
        for (a, b) in p.iter_mut().zip(r) {
            *a += b;
        }
    }
    p.iter_mut().for_each(|v| *v /= runs.len() as f64);
    Ok(MrltDistribution { p })
}

/// `sum_i (a[i] - b[i])^2`.
pub fn geometry_score(a: &MrltDistribution, b: &MrltDistribution) -> Result<f64> {
    if a.p.len() != b.p.len() {
        return Err(Error::arg(format!(
            "distribution lengths differ: {} vs {}",
            a.p.len(),
            b.p.len()
        )));
    }
    Ok(a.p.iter().zip(&b.p).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Serialized score comparing a reference cloud with a generated one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsReport {
    pub gs: f64,
    pub mrlt_real: Vec<f64>,
    pub mrlt_fake: Vec<f64>,
    pub config: GsConfig,
}

pub fn score_clouds(real: &PointCloud, fake: &PointCloud, cfg: &GsConfig) -> Result<GsReport> {
    let a = mrlt(real, cfg)?;
    let b = mrlt(fake, cfg)?;
    Ok(GsReport {
        gs: geometry_score(&a, &b)?,
        mrlt_real: a.p,
        mrlt_fake: b.p,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_laws() {
        let a = MrltDistribution { p: vec![1.0, 0.0, 0.0] };
        let b = MrltDistribution { p: vec![0.0, 1.0, 0.0] };
        assert_eq!(geometry_score(&a, &a).unwrap(), 0.0);
        assert_eq!(geometry_score(&a, &b).unwrap(), 2.0);
        let c = MrltDistribution { p: vec![0.0, 1.0] };
        assert!(geometry_score(&a, &c).is_err());
    }

    #[test]
    fn living_times_partition() {
        let p = PersistenceSet {
            intervals: vec![(0.1, 0.5), (0.2, 0.3), (0.4, 1.0)],
        };
        let r = living_times(&p, 1.0, 4);
        // 0 holes: [0,.1); 1: [.1,.2) [.3,.4) [.5,1); 2: [.2,.3) [.4,.5)
        let want = [0.1, 0.7, 0.2, 0.0];
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let clamped = living_times(&p, 1.0, 2);
        assert!((clamped[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn coincident_landmarks_are_degenerate() {
        let x = Points::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        assert!(matches!(rlt(&x, &[0, 1, 2], &GsConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn maxmin_spreads_out() {
        let x = Points::from_rows(&[vec![0.0], vec![0.1], vec![5.0], vec![10.0]]).unwrap();
        let mut rng = StreamRng::new(0);
        let mut lm = select_landmarks(&x, 3, LandmarkSelection::Maxmin, &mut rng).unwrap();
        lm.sort_unstable();
        assert!(lm == vec![0, 2, 3] || lm == vec![1, 2, 3]);
    }
}
