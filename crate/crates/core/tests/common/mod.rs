//! Independent oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use ccgan::points::Points;
use ccgan::rng::StreamRng;

/// Minimum k-means inertia over every assignment of `n` points to `k`
/// non-empty clusters, by enumerating all `k^n` label vectors.
pub fn brute_force_inertia(x: &Points, k: usize) -> f64 {
    let n = x.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        if let Some(v) = partition_inertia(x, &labels, k) {
            if v < best {
                best = v;
            }
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Sum of squared distances to cluster means; `None` if a cluster is empty.
pub fn partition_inertia(x: &Points, labels: &[usize], k: usize) -> Option<f64> {
    let d = x.dims();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..d {
            sums[l][j] += x.row(i)[j];
        }
    }
    if counts.contains(&0) {
        return None;
    }
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        for j in 0..d {
            let m = sums[l][j] / counts[l] as f64;
            total += (x.row(i)[j] - m).powi(2);
        }
    }
    Some(total)
}

/// Isotropic Gaussian blobs, `per` points each, with ground-truth labels.
pub fn gaussian_blobs(centers: &[Vec<f64>], per: usize, sigma: f64, rng: &mut StreamRng) -> (Points, Vec<usize>) {
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            rows.push(center.iter().map(|m| m + sigma * rng.normal()).collect::<Vec<f64>>());
            truth.push(c);
        }
    }
    (Points::from_rows(&rows).unwrap(), truth)
}

/// Five 2-D centers with pairwise distance >= 1, jittered per seed.
pub fn five_centers(rng: &mut StreamRng) -> Vec<Vec<f64>> {
    loop {
        let cs: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)]).collect();
        let ok = (0..5).all(|i| {
            (i + 1..5).all(|j| ((cs[i][0] - cs[j][0]).powi(2) + (cs[i][1] - cs[j][1]).powi(2)).sqrt() >= 1.0)
        });
        if ok {
            return cs;
        }
    }
}

/// GF(2) rank of a set of columns given as sorted row-index lists.
pub fn gf2_rank(columns: &[Vec<usize>], n_rows: usize) -> usize {
    let words = n_rows.div_ceil(64).max(1);
    let mut rows_of: Vec<Vec<u64>> = columns
        .iter()
        .map(|c| {
            let mut bits = vec![0u64; words];
            for &r in c {
                bits[r / 64] ^= 1 << (r % 64);
            }
            bits
        })
        .collect();
    let mut rank = 0;
    for bit in 0..n_rows {
        let (w, m) = (bit / 64, 1u64 << (bit % 64));
        let Some(p) = (rank..rows_of.len()).find(|&i| rows_of[i][w] & m != 0) else {
            continue;
        };
        rows_of.swap(rank, p);
        let pivot = rows_of[rank].clone();
        for (i, v) in rows_of.iter_mut().enumerate() {
            if i != rank && v[w] & m != 0 {
                for (a, b) in v.iter_mut().zip(&pivot) {
                    *a ^= b;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Points on the unit circle at uniform random angles.
pub fn circle(n: usize, rng: &mut StreamRng) -> Points {
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let t = rng.uniform(0.0, std::f64::consts::TAU);
            [t.cos(), t.sin()]
        })
        .collect();
    Points::from_rows(&rows).unwrap()
}

/// Isotropic 2-D Gaussian blob.
pub fn blob(n: usize, sigma: f64, rng: &mut StreamRng) -> Points {
    let rows: Vec<[f64; 2]> = (0..n).map(|_| [sigma * rng.normal(), sigma * rng.normal()]).collect();
    Points::from_rows(&rows).unwrap()
}

/// Edge births of the relaxed lazy witness complex by direct enumeration of
/// every (witness, landmark pair) without pruning.
pub fn brute_edge_births(x: &Points, landmarks: &[usize]) -> Vec<((usize, usize), f64)> {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let mut out = Vec::new();
    for a in 0..landmarks.len() {
        for b in a + 1..landmarks.len() {
            let mut best = f64::INFINITY;
            for w in 0..x.len() {
                let m = landmarks.iter().map(|&l| d(x.row(w), x.row(l))).fold(f64::INFINITY, f64::min);
                let v = d(x.row(w), x.row(landmarks[a])).max(d(x.row(w), x.row(landmarks[b]))) - m;
                best = best.min(v);
            }
            out.push(((a, b), best.max(0.0)));
        }
    }
    out
}

/// First Betti number of the subcomplex `{s : birth(s) <= alpha}` from ranks
/// of the GF(2) boundary operators: `|E| - rank d1 - rank d2`.
pub fn betti1_by_rank(stream: &[(Vec<usize>, f64)], alpha: f64) -> usize {
    let live: Vec<&Vec<usize>> = stream.iter().filter(|s| s.1 <= alpha).map(|s| &s.0).collect();
    let verts: Vec<&Vec<usize>> = live.iter().copied().filter(|s| s.len() == 1).collect();
    let edges: Vec<&Vec<usize>> = live.iter().copied().filter(|s| s.len() == 2).collect();
    let tris: Vec<&Vec<usize>> = live.iter().copied().filter(|s| s.len() == 3).collect();
    let vpos = |v: usize| verts.iter().position(|s| s[0] == v).expect("vertex present");
    let epos = |a: usize, b: usize| edges.iter().position(|s| s[0] == a && s[1] == b).expect("edge present");
    let d1: Vec<Vec<usize>> = edges
        .iter()
        .map(|e| {
            let mut c = vec![vpos(e[0]), vpos(e[1])];
            c.sort_unstable();
            c
        })
        .collect();
    let d2: Vec<Vec<usize>> = tris
        .iter()
        .map(|t| {
            let mut c = vec![epos(t[0], t[1]), epos(t[0], t[2]), epos(t[1], t[2])];
            c.sort_unstable();
            c
        })
        .collect();
    edges.len() - gf2_rank(&d1, verts.len()) - gf2_rank(&d2, edges.len())
}

pub fn uniform_cloud(n: usize, d: usize, rng: &mut StreamRng) -> Points {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.next_f64()).collect()).collect();
    Points::from_rows(&rows).unwrap()
}

/// Two unit circles centred 4 apart, `n / 2` points each.
pub fn two_rings(n: usize, rng: &mut StreamRng) -> Points {
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let t = rng.uniform(0.0, std::f64::consts::TAU);
            let off = if i % 2 == 0 { -2.0 } else { 2.0 };
            [off + t.cos(), t.sin()]
        })
        .collect();
    Points::from_rows(&rows).unwrap()
}

/// Largest singular value of a row-major `rows x cols` matrix by power
/// iteration on `W^T W`, run until the eigen-residual `|W^T W v - lambda v|`
/// falls below `1e-12 lambda`.
pub fn top_singular_value(w: &[f64], rows: usize, cols: usize) -> f64 {
    let mut v: Vec<f64> = (0..cols).map(|j| 1.0 + (j as f64 * 0.37).sin()).collect();
    let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0;
    for _ in 0..1_000_000 {
        let wv: Vec<f64> = (0..rows).map(|i| (0..cols).map(|j| w[i * cols + j] * v[j]).sum()).collect();
        let a: Vec<f64> = (0..cols).map(|j| (0..rows).map(|i| w[i * cols + j] * wv[i]).sum()).collect();
        lambda = v.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
        let resid = a.iter().zip(&v).map(|(p, q)| (p - lambda * q).powi(2)).sum::<f64>().sqrt();
        if resid <= 1e-12 * lambda {
            break;
        }
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = a.iter().map(|x| x / norm).collect();
    }
    lambda.sqrt()
}

/// Class `c` of the toy conditional task: a unit-height Gaussian bump of
/// width 1 px on an 8x8 grid, centred at angle `c * 45` degrees on a ring of
/// radius 2.5 about the grid centre. Values in `[0, 1]`, row-major.
pub fn bump_template(c: usize) -> Vec<f64> {
    let th = c as f64 * std::f64::consts::FRAC_PI_4;
    let (cx, cy) = (3.5 + 2.5 * th.cos(), 3.5 - 2.5 * th.sin());
    let mut v = vec![0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            v[y * 8 + x] = (-d2 / 2.0).exp();
        }
    }
    v
}

/// Writes `n` 16x16 PNGs in four visually distinct families (a coloured
/// square in one of four quadrants on white, with mild pixel noise).
pub fn write_image_fixture(dir: &std::path::Path, n: usize, seed: u64) {
    use ccgan::pipeline::{save_png, ImageTensor};
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = StreamRng::new(seed);
    let colours = [[0.9, 0.1, 0.1], [0.1, 0.7, 0.1], [0.1, 0.2, 0.9], [0.2, 0.2, 0.2]];
    for i in 0..n {
        let fam = i % 4;
        let (oy, ox) = (8 * (fam / 2), 8 * (fam % 2));
        let img = ImageTensor::from_fn(3, 16, 16, |c, y, x| {
            let inside = (oy..oy + 8).contains(&y) && (ox..ox + 8).contains(&x);
            let base = if inside { colours[fam][c] } else { 1.0 };
            (base + 0.03 * rng.normal()) as f32
        });
        save_png(&img, &dir.join(format!("img{i:03}.png"))).unwrap();
    }
}

/// A run config small enough for a test: 16x16 prepare size, factor-2
/// augmentation, raw features, an 8x8 two-block GAN for `epochs` epochs and a
/// 16-landmark Geometry Score.
pub fn tiny_run_toml(input: &std::path::Path, run: &std::path::Path, seed: u64, epochs: usize) -> String {
    format!(
        r#"seed = {seed}
input_dir = "{}"
run_dir = "{}"

[prepare]
height = 16
width = 16

[augment]
factor = 2

[cluster]
k_min = 2
k_max = 6
xmeans_runs = 3
restarts = 3

[gan]
img_h = 8
img_w = 8
img_channels = 3
base_channels = 8
z_dim = 6
n_gen_blocks = 2
attention_position = 1
batch_size = 16
epochs = {epochs}

[score]
n_landmarks = 16
n_repeats = 4
gamma = 0.0625
"#,
        input.display(),
        run.display()
    )
}
