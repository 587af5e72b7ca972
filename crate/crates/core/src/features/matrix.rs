use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::points::Points;

/// `rows x cols` feature vectors, one row per sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invariant(format!(
                "feature data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        if ids.len() != rows {
            return Err(Error::invariant(format!("{} ids for {rows} rows", ids.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invariant(format!(
                "non-finite feature in row {}",
                i / cols.max(1)
            )));
        }
        let mut seen = HashSet::with_capacity(rows);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::invariant(format!("duplicate sample id {dup:?}")));
        }
        Ok(Self { rows, cols, data, ids })
    }

    pub fn empty() -> Self {
        Self {
            rows: 0,
            cols: 0,
            data: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::invariant(format!(
                "row {i} ({:?}) has a different dimension than row 0",
                ids.get(i)
            )));
        }
        let n = rows.len();
        Self::new(n, cols, rows.concat(), ids)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_points(&self) -> Points {
        Points::new(self.rows, self.cols, self.data.iter().map(|&v| v as f64).collect())
            .expect("feature matrix is finite and well-shaped")
    }

    /// Per-dimension z-score. Constant dimensions become 0.
    pub fn standardized(&self) -> Self {
        let n = self.rows.max(1) as f64;
        let mut data = self.data.clone();
        for c in 0..self.cols {
            let mean = (0..self.rows).map(|r| self.data[r * self.cols + c] as f64).sum::<f64>() / n;
            let var = (0..self.rows)
                .map(|r| (self.data[r * self.cols + c] as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            for r in 0..self.rows {
                let v = &mut data[r * self.cols + c];
                *v = if sd > 0.0 { ((*v as f64 - mean) / sd) as f32 } else { 0.0 };
            }
        }
        Self { data, ..self.clone() }
    }
}
