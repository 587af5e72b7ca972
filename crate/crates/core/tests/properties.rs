//! Property-based invariants across the crate.

mod common;

use ccgan::clustering::{adjusted_rand_index, kmeans, mean_half_up, ClusterConfig};
use ccgan::congan::*;
use ccgan::features::{decode_fmat, encode_fmat, FeatureMatrix};
use ccgan::geoscore::*;
use ccgan::pipeline::{plan_augmented_set, AugmentParams, DatasetManifest, ManifestRecord, Transform};
use ccgan::points::Points;
use ccgan::rng::StreamRng;
use proptest::prelude::*;

fn cloud(n: usize, d: usize, seed: u64) -> Points {
    common::uniform_cloud(n, d, &mut StreamRng::new(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_ignores_parent_progress(seed: u64, stream: u64, draws in 0usize..50) {
        let fresh = StreamRng::new(seed);
        let mut used = fresh;
        for _ in 0..draws {
            used.next_f64();
        }
        prop_assert_eq!(fresh.split(stream), used.split(stream));
    }

    #[test]
    fn below_stays_in_range(seed: u64, n in 1usize..1000) {
        let mut rng = StreamRng::new(seed);
        for _ in 0..100 {
            prop_assert!(rng.below(n) < n);
        }
    }

    #[test]
    fn half_up_mean_is_nearest_integer(counts in prop::collection::vec(1usize..50, 1..20)) {
        let k = mean_half_up(&counts);
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        prop_assert_eq!(k as f64, (mean + 0.5).floor());
        prop_assert!(k >= *counts.iter().min().unwrap() && k <= *counts.iter().max().unwrap());
    }

    #[test]
    fn kmeans_partition_is_complete_and_no_worse_than_optimum(seed: u64, n in 6usize..10, k in 2usize..4) {
        let x = cloud(n, 2, seed);
        let m = kmeans(&x, k, &ClusterConfig::default(), &mut StreamRng::new(seed)).unwrap();
        let fit = common::partition_inertia(&x, &m.assignments, k);
        prop_assert!(fit.is_some(), "empty cluster in {:?}", m.assignments);
        prop_assert!(fit.unwrap() >= common::brute_force_inertia(&x, k) - 1e-12);
    }

    #[test]
    fn ari_is_symmetric_and_label_invariant(labels in prop::collection::vec(0usize..4, 4..40), perm in Just([2usize, 0, 3, 1]), other in prop::collection::vec(0usize..3, 40)) {
        let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let b = &other[..labels.len()];
        let same = adjusted_rand_index(&labels, &relabeled);
        prop_assert!(same == 1.0 || same.is_nan());
        let (ab, ba) = (adjusted_rand_index(&labels, b), adjusted_rand_index(b, &labels));
        prop_assert!(ab == ba || (ab.is_nan() && ba.is_nan()));
    }

    #[test]
    fn augmentation_multiplies_and_propagates_labels(n in 1usize..40, factor in 1usize..8, seed: u64) {
        let basic = DatasetManifest::new(
            (0..n)
                .map(|i| ManifestRecord {
                    sample_id: format!("s{i}"),
                    path: format!("b/s{i}.png").into(),
                    source_id: format!("s{i}"),
                    transform: Transform::Identity,
                    label: Some(i % 3),
                })
                .collect(),
        )
        .unwrap();
        let p = AugmentParams { factor, ..Default::default() };
        let plan = plan_augmented_set(&basic, &p, seed, "a".as_ref()).unwrap();
        prop_assert_eq!(plan.len(), factor * n);
        for r in &plan.records {
            let i: usize = r.source_id[1..].parse().unwrap();
            prop_assert_eq!(r.label, Some(i % 3));
        }
        prop_assert_eq!(plan, plan_augmented_set(&basic, &p, seed, "a".as_ref()).unwrap());
    }

    #[test]
    fn fmat_round_trips(rows in 0usize..20, cols in 0usize..6, seed: u64) {
        let mut rng = StreamRng::new(seed);
        // any finite bit pattern, including subnormals and negative zero
        let data: Vec<f32> = (0..rows * cols)
            .map(|_| f32::from_bits(rng.below(1 << 32) as u32))
            .map(|v| if v.is_finite() { v } else { -0.0 })
            .collect();
        let ids: Vec<String> = (0..rows).map(|i| format!("id\"{i}\u{e9}")).collect();
        let fm = FeatureMatrix::new(rows, cols, data, ids).unwrap();
        let bytes = encode_fmat(&fm).unwrap();
        let back = decode_fmat(&bytes).unwrap();
        prop_assert_eq!(encode_fmat(&back).unwrap(), bytes);
        prop_assert!(back.data().iter().map(|v| v.to_bits()).eq(fm.data().iter().map(|v| v.to_bits())));
    }

    #[test]
    fn rayleigh_estimate_never_overshoots(seed: u64, rows in 2usize..12, cols in 2usize..12, iters in 1usize..20) {
        let mut rng = StreamRng::new(seed);
        let w: Vec<f64> = (0..rows * cols).map(|_| rng.normal()).collect();
        let mut u: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        let sigma = power_iterate(&w, rows, cols, &mut u, iters);
        prop_assert!(sigma <= common::top_singular_value(&w, rows, cols) * (1.0 + 1e-9));
        prop_assert!((u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point(value in prop::collection::vec(-5.0f64..5.0, 1..20), t in 1u64..100) {
        let cfg = AdamConfig { lr: 1e-3, beta1: 0.0, beta2: 0.9, eps: 1e-8 };
        let mut x = value.clone();
        let (mut m, mut v) = (vec![0.0; x.len()], vec![0.0; x.len()]);
        adam_step(&mut x, &vec![0.0; value.len()], &mut m, &mut v, t, &cfg);
        prop_assert_eq!(x, value);
    }

    #[test]
    fn adam_step_is_bounded_by_lr(g in prop::collection::vec(-100.0f64..100.0, 1..20)) {
        let cfg = AdamConfig { lr: 1e-3, beta1: 0.0, beta2: 0.9, eps: 1e-8 };
        let mut x = vec![0.0; g.len()];
        let (mut m, mut v) = (vec![0.0; g.len()], vec![0.0; g.len()]);
        adam_step(&mut x, &g, &mut m, &mut v, 1, &cfg);
        prop_assert!(x.iter().all(|d| d.abs() <= cfg.lr * (1.0 + 1e-9)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn attention_rows_are_distributions(seed: u64, c in 2usize..6, h in 1usize..4, w in 1usize..4) {
        let mut rng = StreamRng::new(seed);
        let mut att = SelfAttention::new(c, false, &mut rng);
        let x = Tensor4::from_vec(2, c, h, w, (0..2 * c * h * w).map(|_| rng.normal()).collect());
        let y = att.forward(&x).unwrap();
        prop_assert_eq!((y.n, y.c, y.h, y.w), (2, c, h, w));
        // gamma starts at zero, so the layer is the identity
        prop_assert_eq!(&y.data, &x.data);
        let np = h * w;
        for row in att.attention().unwrap().chunks(np) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn block_shapes(seed: u64, c_in in 1usize..5, c_out in 1usize..5, h in 1usize..5) {
        let mut rng = StreamRng::new(seed);
        let mut g = GBlock::new(c_in, c_out, 3, 4, &mut rng);
        let x = Tensor4::from_vec(2, c_in, h, h, (0..2 * c_in * h * h).map(|_| rng.normal()).collect());
        let z: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let up = g.forward(&x, &[0, 2], &z, Mode::Train).unwrap();
        prop_assert_eq!((up.n, up.c, up.h, up.w), (2, c_out, 2 * h, 2 * h));
        let mut d = DBlock::new(c_out, c_in, true, &mut rng);
        let down = d.forward(&up).unwrap();
        prop_assert_eq!((down.n, down.c, down.h, down.w), (2, c_in, h, h));
    }

    #[test]
    fn rlt_is_a_distribution_and_gs_a_metric_square(seed: u64, n in 40usize..120, l in 4usize..16) {
        let cfg = GsConfig { n_landmarks: l, n_repeats: 3, gamma: 0.25, i_max: 10, seed, ..Default::default() };
        let a = mrlt(&cloud(n, 2, seed), &cfg).unwrap();
        let b = mrlt(&cloud(n, 3, seed ^ 1), &cfg).unwrap();
        prop_assert_eq!(a.p.len(), 10);
        prop_assert!((a.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(a.p.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(geometry_score(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(geometry_score(&a, &b).unwrap(), geometry_score(&b, &a).unwrap());
        prop_assert!(geometry_score(&a, &b).unwrap() <= 2.0);
    }
}
