use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::points::{dist, Points};

/// A simplex over landmark positions (indices into the landmark list),
/// vertices ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    pub vertices: Vec<usize>,
    pub birth: f64,
}

impl Simplex {
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }
}

fn check_landmarks(x: &Points, landmarks: &[usize]) -> Result<()> {
    if landmarks.len() < 3 {
        return Err(Error::arg(format!("need at least 3 landmarks, got {}", landmarks.len())));
    }
    if let Some(&bad) = landmarks.iter().find(|&&l| l >= x.len()) {
        return Err(Error::arg(format!("landmark index {bad} out of range for {} points", x.len())));
    }
    let mut sorted = landmarks.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::arg("duplicate landmark indices"));
    }
    Ok(())
}

/// Edge births of the relaxed lazy witness complex: edge `(a, b)` appears at
/// the smallest `alpha` such that some witness `w` has
/// `max(d(w,a), d(w,b)) <= alpha + m(w)`, `m(w)` being the distance from `w`
/// to its nearest landmark. Only edges born at or before `alpha_max` are
/// returned, keyed by landmark positions `(a, b)` with `a < b`.
pub fn edge_births(x: &Points, landmarks: &[usize], alpha_max: f64) -> Result<HashMap<(usize, usize), f64>> {
    check_landmarks(x, landmarks)?;
    let lm: Vec<&[f64]> = landmarks.iter().map(|&l| x.row(l)).collect();
    let mut births: HashMap<(usize, usize), f64> = HashMap::new();
    let mut d = vec![0.0; lm.len()];
    let mut near = Vec::new();
    for w in x.rows() {
        for (dj, l) in d.iter_mut().zip(&lm) {
            *dj = dist(w, l);
        }
        let m = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let reach = m + alpha_max;
        near.clear();
        near.extend((0..d.len()).filter(|&j| d[j] <= reach));
        for (i, &a) in near.iter().enumerate() {
            for &b in &near[i + 1..] {
                let birth = (d[a].max(d[b]) - m).max(0.0);
                let e = births.entry((a, b)).or_insert(f64::INFINITY);
                if birth < *e {
                    *e = birth;
                }
            }
        }
    }
    births.retain(|_, b| *b <= alpha_max);
    Ok(births)
}

/// Filtration of the relaxed lazy witness complex up to dimension 2.
///
/// Vertices are born at 0, edges as in [`edge_births`], triangles at the
/// maximum of their edge births. Simplices born after `alpha_max` are
/// dropped. Sorted by `(birth, dimension, vertices)`, so faces precede cofaces.
pub fn witness_filtration(x: &Points, landmarks: &[usize], alpha_max: f64) -> Result<Vec<Simplex>> {
    if !(alpha_max >= 0.0) {
        return Err(Error::arg(format!("alpha_max must be non-negative, got {alpha_max}")));
    }
    let edges = edge_births(x, landmarks, alpha_max)?;
    let l = landmarks.len();
    let mut out: Vec<Simplex> = (0..l)
        .map(|v| Simplex {
            vertices: vec![v],
            birth: 0.0,
        })
        .collect();
    let mut adj = vec![Vec::new(); l];
    for (&(a, b), &birth) in &edges {
        out.push(Simplex {
            vertices: vec![a, b],
            birth,
        });
        adj[a].push(b);
    }
    for a in 0..l {
        adj[a].sort_unstable();
        for (i, &b) in adj[a].iter().enumerate() {
            for &c in &adj[a][i + 1..] {
                if let Some(&bc) = edges.get(&(b, c)) {
                    let birth = edges[&(a, b)].max(edges[&(a, c)]).max(bc);
                    out.push(Simplex {
                        vertices: vec![a, b, c],
                        birth,
                    });
                }
            }
        }
    }
    sort_filtration(&mut out);
    Ok(out)
}

pub fn sort_filtration(s: &mut [Simplex]) {
    s.sort_by(|p, q| {
        p.birth
            .total_cmp(&q.birth)
            .then(p.vertices.len().cmp(&q.vertices.len()))
            .then_with(|| p.vertices.cmp(&q.vertices))
    });
}
