//! Spectral normalization by persistent power iteration.
//!
//! The gradient convention treats `sigma` as a constant within a step:
//! `dL/dW = (dL/dW_sn) / sigma`. Training refreshes `u` with one power
//! iteration per discriminator step.

use super::param::{join, Param};
use crate::rng::StreamRng;

pub const SIGMA_FLOOR: f64 = 1e-12;

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(SIGMA_FLOOR);
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Runs `iters` power iterations on the `rows x cols` matrix `w` from `u`
/// (updated in place) and returns `(w / sigma, sigma)` with `sigma = u^T W v`.
pub fn spectral_norm_apply(w: &[f64], rows: usize, cols: usize, u: &mut [f64], iters: usize) -> (Vec<f64>, f64) {
    let sigma = power_iterate(w, rows, cols, u, iters);
    (w.iter().map(|x| x / sigma).collect(), sigma)
}

/// Power iteration on `W W^T`, returning the Rayleigh estimate of the top
/// singular value (floored at [`SIGMA_FLOOR`]).
pub fn power_iterate(w: &[f64], rows: usize, cols: usize, u: &mut [f64], iters: usize) -> f64 {
    assert_eq!(w.len(), rows * cols);
    assert_eq!(u.len(), rows);
    let mut v = vec![0.0; cols];
    let mut wv = vec![0.0; rows];
    for _ in 0..iters.max(1) {
        v.iter_mut().for_each(|x| *x = 0.0);
        for (r, &ur) in u.iter().enumerate() {
            for (vc, wrc) in v.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *vc += wrc * ur;
            }
        }
        normalize(&mut v);
        for (r, out) in wv.iter_mut().enumerate() {
            *out = w[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        u.copy_from_slice(&wv);
        normalize(u);
    }
    let sigma: f64 = u.iter().zip(&wv).map(|(a, b)| a * b).sum();
    sigma.max(SIGMA_FLOOR)
}

/// Persistent state of one normalized weight: the left singular estimate `u`
/// and the last `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNorm {
    pub u: Param,
    pub sigma: Param,
}

impl SpectralNorm {
    pub fn new(rows: usize, rng: &mut StreamRng) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        normalize(&mut u);
        Self {
            u: Param::buffer(&[rows], u),
            sigma: Param::buffer(&[1], vec![1.0]),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.value[0]
    }

    /// One (or more) power iterations against the current raw weight.
    pub fn refresh(&mut self, w: &[f64], iters: usize) -> f64 {
        let rows = self.u.len();
        let s = power_iterate(w, rows, w.len() / rows, &mut self.u.value, iters);
        self.sigma.value[0] = s;
        s
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "sn_u"), &mut self.u);
        f(&join(prefix, "sn_sigma"), &mut self.sigma);
    }
}
