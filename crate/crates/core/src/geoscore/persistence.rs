use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::witness::Simplex;
use crate::error::{Error, Result};

/// One-dimensional persistence intervals `[birth, death)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceSet {
    pub intervals: Vec<(f64, f64)>,
}

impl PersistenceSet {
    /// Number of intervals alive at `alpha` (half-open intervals).
    pub fn betti_at(&self, alpha: f64) -> usize {
        self.intervals.iter().filter(|&&(b, d)| b <= alpha && alpha < d).count()
    }
}

/// Reduces one column against earlier pivots; columns are sorted row lists.
fn reduce(col: &mut Vec<usize>, pivots: &HashMap<usize, Vec<usize>>) {
    while let Some(&low) = col.last() {
        let Some(other) = pivots.get(&low) else { break };
        // Symmetric difference of two sorted lists.
        let mut merged = Vec::with_capacity(col.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < col.len() && j < other.len() {
            match col[i].cmp(&other[j]) {
                std::cmp::Ordering::Less => {
                    merged.push(col[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    merged.push(other[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        merged.extend_from_slice(&col[i..]);
        merged.extend_from_slice(&other[j..]);
        *col = merged;
    }
}

/// H1 persistence by column reduction of the GF(2) boundary matrix.
///
/// Edges whose columns reduce to zero open a cycle; a triangle whose reduced
/// column has lowest entry at edge `e` closes the cycle opened by `e`.
/// Cycles never closed die at `alpha_max`. Zero-length intervals are omitted.
pub fn persistence_h1(stream: &[Simplex], alpha_max: f64) -> Result<PersistenceSet> {
    let mut index: HashMap<&[usize], usize> = HashMap::with_capacity(stream.len());
    let mut pivots: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut positive_edges = Vec::new();
    let mut closed: HashMap<usize, f64> = HashMap::new();
    for (j, s) in stream.iter().enumerate() {
        if s.vertices.is_empty() || s.vertices.len() > 3 {
            return Err(Error::invariant(format!("simplex {j} has unsupported dimension")));
        }
        if !s.vertices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invariant(format!("simplex {j} vertices not strictly ascending")));
        }
        let mut col = Vec::with_capacity(3);
        if s.vertices.len() > 1 {
            for skip in 0..s.vertices.len() {
                let face: Vec<usize> = s
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                match index.get(face.as_slice()) {
                    Some(&i) if stream[i].birth <= s.birth => col.push(i),
                    _ => {
                        return Err(Error::invariant(format!(
                            "face {face:?} of simplex {:?} does not precede it",
                            s.vertices
                        )))
                    }
                }
            }
            col.sort_unstable();
        }
        if index.insert(&s.vertices, j).is_some() {
            return Err(Error::invariant(format!("simplex {:?} appears twice", s.vertices)));
        }
        if col.is_empty() {
            continue;
        }
        reduce(&mut col, &pivots);
        match col.last() {
            None if s.vertices.len() == 2 => positive_edges.push(j),
            None => {}
            Some(&low) => {
                if s.vertices.len() == 3 {
                    closed.insert(low, s.birth);
                }
                pivots.insert(low, col);
            }
        }
    }
    let intervals = positive_edges
        .into_iter()
        .map(|e| (stream[e].birth, closed.get(&e).copied().unwrap_or(alpha_max)))
        .filter(|&(b, d)| b < d)
        .collect();
    Ok(PersistenceSet { intervals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[usize], birth: f64) -> Simplex {
        Simplex {
            vertices: v.to_vec(),
            birth,
        }
    }

    #[test]
    fn four_cycle() {
        let mut f: Vec<Simplex> = (0..4).map(|v| s(&[v], 0.0)).collect();
        f.extend([s(&[0, 1], 0.1), s(&[1, 2], 0.2), s(&[2, 3], 0.3), s(&[0, 3], 0.4)]);
        let p = persistence_h1(&f, 1.0).unwrap();
        assert_eq!(p.intervals, vec![(0.4, 1.0)]);
    }

    #[test]
    fn filled_cycle_dies_at_filling() {
        // Square with a diagonal and two triangles.
        let mut f: Vec<Simplex> = (0..4).map(|v| s(&[v], 0.0)).collect();
        f.extend([
            s(&[0, 1], 0.1),
            s(&[1, 2], 0.1),
            s(&[2, 3], 0.1),
            s(&[0, 3], 0.2),
            s(&[0, 2], 0.3),
            s(&[0, 1, 2], 0.3),
            s(&[0, 2, 3], 0.5),
        ]);
        let p = persistence_h1(&f, 1.0).unwrap();
        assert_eq!(p.intervals, vec![(0.2, 0.5)]);
    }

    #[test]
    fn missing_face_is_an_invariant_error() {
        let f = vec![s(&[0], 0.0), s(&[0, 1], 0.1), s(&[1], 0.2)];
        assert!(matches!(persistence_h1(&f, 1.0), Err(Error::Invariant(_))));
    }
}
