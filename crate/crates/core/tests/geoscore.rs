mod common;

use ccgan::geoscore::*;
use ccgan::points::Points;
use ccgan::rng::StreamRng;
use common::{betti1_by_rank, blob, brute_edge_births, circle, uniform_cloud};

fn as_pairs(stream: &[Simplex]) -> Vec<(Vec<usize>, f64)> {
    stream.iter().map(|s| (s.vertices.clone(), s.birth)).collect()
}

#[test]
fn edge_births_match_enumeration() {
    let mut rng = StreamRng::new(11);
    for _ in 0..20 {
        let x = uniform_cloud(40, 3, &mut rng);
        let lm = rng.sample_indices(40, 8);
        let got = edge_births(&x, &lm, f64::INFINITY).unwrap();
        for ((a, b), want) in brute_edge_births(&x, &lm) {
            assert!((got[&(a, b)] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn filtration_is_nested_and_ordered() {
    let mut rng = StreamRng::new(12);
    let x = uniform_cloud(60, 2, &mut rng);
    let lm = rng.sample_indices(60, 10);
    let f = witness_filtration(&x, &lm, 0.4).unwrap();
    for w in f.windows(2) {
        assert!(w[0].birth <= w[1].birth);
    }
    // Faces precede cofaces and share-or-precede their birth.
    for (j, s) in f.iter().enumerate() {
        if s.dim() == 2 {
            for skip in 0..3 {
                let face: Vec<usize> = (0..3).filter(|&k| k != skip).map(|k| s.vertices[k]).collect();
                let i = f.iter().position(|t| t.vertices == face).unwrap();
                assert!(i < j && f[i].birth <= s.birth);
            }
        }
    }
    let small = witness_filtration(&x, &lm, 0.1).unwrap();
    for s in &small {
        assert!(f.iter().any(|t| t.vertices == s.vertices && t.birth == s.birth));
    }
    assert!(small.iter().all(|s| s.birth <= 0.1));
}

#[test]
fn persistence_agrees_with_rank_oracle() {
    let mut rng = StreamRng::new(13);
    let mut with_cycles = 0;
    for trial in 0..200 {
        let d = 2 + trial % 2;
        let x = uniform_cloud(30, d, &mut rng);
        let l = 4 + rng.below(9);
        let lm = rng.sample_indices(30, l);
        let alpha_max = 0.5;
        let f = witness_filtration(&x, &lm, alpha_max).unwrap();
        let p = persistence_h1(&f, alpha_max).unwrap();
        let pairs = as_pairs(&f);
        let mut alphas: Vec<f64> = f.iter().map(|s| s.birth).collect();
        alphas.dedup();
        let mut probes = alphas.clone();
        probes.extend(alphas.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        for a in probes {
            assert_eq!(p.betti_at(a), betti1_by_rank(&pairs, a), "trial {trial} alpha {a}");
        }
        with_cycles += usize::from(!p.intervals.is_empty());
    }
    assert!(with_cycles > 20, "oracle comparison should exercise cycles");
}

#[test]
fn trivial_topology_gives_unit_mass_at_zero() {
    // Collinear landmarks and witnesses cannot form a cycle.
    let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 0.0]).collect();
    let x = Points::from_rows(&rows).unwrap();
    let cfg = GsConfig {
        gamma: 1.0,
        i_max: 5,
        ..GsConfig::default()
    };
    let r = rlt(&x, &[0, 3, 7, 12, 19], &cfg).unwrap();
    assert_eq!(r, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn rlt_is_a_distribution() {
    let mut rng = StreamRng::new(14);
    let x = circle(300, &mut rng);
    let cfg = GsConfig::default();
    for _ in 0..10 {
        let lm = rng.sample_indices(300, 64);
        let r = rlt(&x, &lm, &cfg).unwrap();
        assert_eq!(r.len(), 100);
        assert!(r.iter().all(|&v| v >= 0.0));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_repeat_equals_rlt_and_is_reproducible() {
    let mut rng = StreamRng::new(15);
    let x = circle(200, &mut rng);
    let cfg = GsConfig {
        n_repeats: 1,
        seed: 5,
        ..GsConfig::default()
    };
    let m = mrlt(&x, &cfg).unwrap();
    let lm = StreamRng::new(5).split(0).sample_indices(200, 64);
    assert_eq!(m.p, rlt(&x, &lm, &cfg).unwrap());
    let many = GsConfig { n_repeats: 20, ..cfg };
    assert_eq!(mrlt(&x, &many).unwrap(), mrlt(&x, &many).unwrap());
}

#[test]
fn circle_has_more_one_hole_time_than_blob() {
    let mut rng = StreamRng::new(16);
    let cfg = GsConfig {
        n_landmarks: 32,
        gamma: 0.125,
        n_repeats: 20,
        ..GsConfig::default()
    };
    let c = mrlt(&circle(1000, &mut rng), &cfg).unwrap();
    let b = mrlt(&blob(1000, 0.5, &mut rng), &cfg).unwrap();
    assert!(c.p[1] > b.p[1]);
    assert_eq!(c.argmax(), 1);
}

#[test]
fn mrlt_spread_shrinks_with_more_repeats() {
    let mut rng = StreamRng::new(17);
    let x = circle(400, &mut rng);
    let spread = |repeats: usize| {
        let runs: Vec<Vec<f64>> = (0..10)
            .map(|r| {
                let cfg = GsConfig {
                    n_landmarks: 32,
                    gamma: 1.0 / 32.0,
                    n_repeats: repeats,
                    seed: 1000 + r,
                    ..GsConfig::default()
                };
                mrlt(&x, &cfg).unwrap().p
            })
            .collect();
        let mean: Vec<f64> = (0..runs[0].len()).map(|i| runs.iter().map(|r| r[i]).sum::<f64>() / 10.0).collect();
        runs.iter()
            .map(|r| r.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
    };
    assert!(spread(400) < spread(100));
}

#[test]
fn argument_errors() {
    let mut rng = StreamRng::new(18);
    let x = circle(30, &mut rng);
    assert!(mrlt(&x, &GsConfig::default()).is_err());
    let bad = GsConfig {
        i_max: 1,
        ..GsConfig::default()
    };
    assert!(bad.validate().is_err());
    assert!(witness_filtration(&x, &[0, 1], 1.0).is_err());
}

#[test]
fn plot_outputs() {
    let r = GsReport {
        gs: 0.5,
        mrlt_real: vec![0.5, 0.5, 0.0],
        mrlt_fake: vec![1.0, 0.0, 0.0],
        config: GsConfig::default(),
    };
    assert_eq!(mrlt_csv(&r), "i,mrlt_real,mrlt_fake\n0,0.5,1\n1,0.5,0\n2,0,0\n");
    let svg = mrlt_svg(&r);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<rect").count(), 1 + 2 * 3 + 2);
}
