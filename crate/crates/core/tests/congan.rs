mod common;

use ccgan::congan::gradcheck::tiny_config;
use ccgan::congan::layers::{CondBatchNorm, Conv2d};
use ccgan::congan::*;
use ccgan::error::Error;
use ccgan::rng::StreamRng;
use common::top_singular_value;

fn random_matrix(rows: usize, cols: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.normal()).collect()
}

fn random_tensor(n: usize, c: usize, h: usize, w: usize, rng: &mut StreamRng) -> Tensor4 {
    Tensor4::from_vec(n, c, h, w, random_matrix(n, c * h * w, rng))
}

fn synthetic_set(cfg: &GanConfig, n: usize, seed: u64) -> TrainingSet {
    let mut rng = StreamRng::new(seed);
    let len = cfg.img_channels * cfg.img_h * cfg.img_w;
    let labels: Vec<usize> = (0..n).map(|i| i % cfg.n_classes).collect();
    let data = labels
        .iter()
        .flat_map(|&y| {
            let base = (y + 1) as f64 / (cfg.n_classes + 1) as f64;
            (0..len).map(|_| (base + 0.05 * rng.normal()).clamp(0.0, 1.0)).collect::<Vec<_>>()
        })
        .collect();
    let unit = Tensor4::from_vec(n, cfg.img_channels, cfg.img_h, cfg.img_w, data);
    TrainingSet::from_unit_images(&unit, labels).unwrap()
}

#[test]
fn gradient_suite() {
    let t = std::time::Instant::now();
    let reports = grad_check_all(&tiny_config());
    for r in &reports {
        println!("{:<22} {:>10.3e} < {:.0e}  ({} entries)", r.layer, r.max_rel_err, r.tolerance, r.entries);
    }
    println!("{:?}", t.elapsed());
    assert!(reports.len() >= 9);
    assert!(reports.iter().all(|r| r.passed()));
}

#[test]
fn spectral_norm_approaches_converged_oracle() {
    let mut rng = StreamRng::new(21);
    for _ in 0..10 {
        let w = random_matrix(64, 64, &mut rng);
        let u0: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let truth = top_singular_value(&w, 64, 64);
        let err = |iters| {
            let mut u = u0.clone();
            let (w_sn, sigma) = spectral_norm_apply(&w, 64, 64, &mut u, iters);
            // The Rayleigh estimate never overshoots.
            assert!(sigma <= truth * (1.0 + 1e-9));
            (top_singular_value(&w_sn, 64, 64) - 1.0).abs()
        };
        let (e10, e50, e2000) = (err(10), err(50), err(2000));
        assert!(e50 <= e10 && e2000 <= e50);
        assert!(e2000 < 1e-3);
    }
}

#[test]
fn block_shape_laws() {
    let mut rng = StreamRng::new(22);
    let mut g = GBlock::new(4, 6, 3, 2, &mut rng);
    let x = random_tensor(2, 4, 8, 8, &mut rng);
    let out = g.forward(&x, &[0, 2], &[0.1, -0.2, 0.3, 0.4], Mode::Train).unwrap();
    assert_eq!(out.shape(), [2, 6, 16, 16]);
    let mut d = DBlock::new(6, 4, true, &mut rng);
    assert_eq!(d.forward(&out).unwrap().shape(), [2, 4, 8, 8]);
    assert!(matches!(d.forward(&random_tensor(1, 6, 7, 8, &mut rng)), Err(Error::Argument(_))));
}

#[test]
fn zero_residual_block_is_its_skip_path() {
    let mut rng = StreamRng::new(23);
    let mut g = GBlock::new(3, 5, 2, 0, &mut rng);
    for p in [&mut g.conv1.weight.w, &mut g.conv2.weight.w] {
        p.value.iter_mut().for_each(|v| *v = 0.0);
    }
    g.bn2.gamma_embed.value.iter_mut().for_each(|v| *v = 0.0);
    let x = random_tensor(2, 3, 4, 4, &mut rng);
    let out = g.forward(&x, &[0, 1], &[], Mode::Train).unwrap();
    let mut skip = g.skip.clone();
    let s = skip.forward(&x).unwrap();
    for n in 0..2 {
        for c in 0..5 {
            for i in 0..8 {
                for j in 0..8 {
                    let o = out.data[((n * 5 + c) * 8 + i) * 8 + j];
                    let e = s.data[((n * 5 + c) * 4 + i / 2) * 4 + j / 2];
                    assert_eq!(o, e);
                }
            }
        }
    }
}

#[test]
fn conditional_bn_laws() {
    let mut rng = StreamRng::new(24);
    let mut bn = CondBatchNorm::new(3, 2, 0, &mut rng);
    bn.beta_embed.value[3..].iter_mut().for_each(|v| *v = 5.0);
    let x = random_tensor(4, 3, 3, 3, &mut rng);
    let all0 = bn.forward(&x, &[0, 0, 0, 0], &[], Mode::Train).unwrap();
    let mixed = bn.forward(&x, &[0, 1, 0, 1], &[], Mode::Train).unwrap();
    for n in [1, 3] {
        for (a, b) in all0.sample(n).iter().zip(mixed.sample(n)) {
            assert!((b - a - 5.0).abs() < 1e-12);
        }
    }
    let moments = |t: &Tensor4, c: usize| {
        let vals: Vec<f64> = (0..4).flat_map(|n| t.sample(n)[c * 9..(c + 1) * 9].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / 36.0;
        (m, vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 36.0)
    };
    for c in 0..3 {
        let (m, v) = moments(&all0, c);
        // The output variance is var / (var + eps), not exactly 1.
        let var_x = moments(&x, c).1;
        assert!(m.abs() < 1e-6);
        assert!((v - var_x / (var_x + bn.eps)).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-4);
    }
    assert!(matches!(bn.forward(&x, &[0, 2, 0, 0], &[], Mode::Train), Err(Error::Argument(_))));
}

#[test]
fn generator_range_shape_and_purity() {
    let cfg = tiny_config();
    let mut gan = Gan::new(&cfg).unwrap();
    let z = sample_latent(5, cfg.z_dim, &mut StreamRng::new(1));
    let y = [0, 1, 2, 0, 1];
    let a = gan.g.forward(&z, &y, Mode::Train).unwrap();
    assert_eq!(a.shape(), [5, cfg.img_channels, cfg.img_h, cfg.img_w]);
    assert!(a.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    assert_eq!(a, gan.g.forward(&z, &y, Mode::Train).unwrap());
    assert!(gan.g.forward(&z, &[0, 1, 2], Mode::Train).is_err());
}

#[test]
fn projection_is_bilinear_in_the_embedding() {
    let cfg = tiny_config();
    let mut rng = StreamRng::new(25);
    let mut d = Discriminator::new(&cfg, &mut rng);
    let x = random_tensor(1, cfg.img_channels, cfg.img_h, cfg.img_w, &mut rng);
    let c = cfg.base_channels;
    let s0 = d.forward(&x, &[0]).unwrap().adv[0];
    let phi = d.phi().unwrap().to_vec();
    let s2 = d.forward(&x, &[2]).unwrap().adv[0];
    let e = &d.embed.value;
    let proj: f64 = (0..c).map(|i| (e[i] - e[2 * c + i]) * phi[i]).sum();
    assert!((s0 - s2 - proj).abs() < 1e-12 * (1.0 + proj.abs()));

    d.embed.value.iter_mut().for_each(|v| *v = 0.0);
    let scores: Vec<f64> = (0..cfg.n_classes).map(|y| d.forward(&x, &[y]).unwrap().adv[0]).collect();
    assert!(scores.iter().all(|&s| s == scores[0]));
}

#[test]
fn labels_matter_after_training() {
    let cfg = GanConfig {
        epochs: 1,
        ..tiny_config()
    };
    let mut gan = Gan::new(&cfg).unwrap();
    gan.train_steps(&synthetic_set(&cfg, 8, 3), 2).unwrap();
    let z = sample_latent(1, cfg.z_dim, &mut StreamRng::new(4));
    let a = gan.generate_from_latent(&z, &[0]).unwrap();
    let b = gan.generate_from_latent(&z, &[1]).unwrap();
    let l2: f64 = a.data.iter().zip(&b.data).map(|(p, q)| (p - q).powi(2)).sum();
    assert!(l2 > 0.0);
}

#[test]
fn iteration_accounting() {
    let cfg = GanConfig {
        epochs: 2,
        ..tiny_config()
    };
    let data = synthetic_set(&cfg, 7, 5);
    let mut gan = Gan::new(&cfg).unwrap();
    let metrics = gan.fit(&data, &TrainOptions::default()).unwrap();
    let plan = cfg.iteration_plan(7);
    assert_eq!(gan.iter_g, plan.g_steps);
    assert_eq!(gan.iter_d, plan.d_steps);
    assert_eq!(gan.iter_d, 2 * gan.iter_g);
    assert_eq!(metrics.len(), 2);
    assert!(metrics.iter().all(|m| m.loss_d.is_finite() && m.loss_g.is_finite()));
}

#[test]
fn too_few_samples_rejected() {
    let cfg = tiny_config();
    let mut gan = Gan::new(&cfg).unwrap();
    assert!(matches!(
        gan.train_steps(&synthetic_set(&cfg, 1, 0), 1),
        Err(Error::Argument(_))
    ));
}

#[test]
fn zero_epochs_returns_initialization() {
    let cfg = GanConfig {
        epochs: 0,
        ..tiny_config()
    };
    let mut gan = Gan::new(&cfg).unwrap();
    gan.fit(&synthetic_set(&cfg, 4, 6), &TrainOptions::default()).unwrap();
    assert_eq!(gan.checkpoint(), Gan::new(&cfg).unwrap().checkpoint());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = tiny_config();
    let mut gan = Gan::new(&cfg).unwrap();
    gan.train_steps(&synthetic_set(&cfg, 6, 7), 2).unwrap();
    let ck = gan.checkpoint();
    let bytes = ck.encode().unwrap();
    let back = Checkpoint::decode(&bytes).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.encode().unwrap(), bytes);
    let mut again = Gan::from_checkpoint(&back).unwrap();
    assert_eq!(again.checkpoint(), ck);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.ckpt");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
}

#[test]
fn checkpoint_edge_cases() {
    let base = Checkpoint {
        config: tiny_config(),
        epoch: 3,
        iter_d: 2,
        iter_g: 1,
        adam_t_g: 1,
        adam_t_d: 2,
        rng_state: (u64::MAX, 7),
        tensors: Vec::new(),
    };
    let empty = Checkpoint::decode(&base.encode().unwrap()).unwrap();
    assert_eq!(empty, base);

    // A directory of 5,000 long names pushes the header well past 64 KiB.
    let mut big = base.clone();
    big.tensors = (0..5000)
        .map(|i| NamedTensor {
            name: format!("t{i:05}.{}", "x".repeat(40)),
            shape: vec![i % 3, 2],
            data: (0..(i % 3) * 2).map(|j| f32::from_bits(0x3f80_0000 + (i * 7 + j) as u32)).collect(),
        })
        .collect();
    let bytes = big.encode().unwrap();
    assert!(u32::from_le_bytes(bytes[..4].try_into().unwrap()) > 1 << 16);
    assert_eq!(Checkpoint::decode(&bytes).unwrap(), big);

    assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    assert!(matches!(Checkpoint::decode(&[1, 0]), Err(Error::Format(_))));
    assert!(matches!(Gan::from_checkpoint(&base), Err(Error::Format(_))));
}

#[test]
fn generate_and_interpolate() {
    let cfg = tiny_config();
    let mut gan = Gan::new(&cfg).unwrap();
    gan.train_steps(&synthetic_set(&cfg, 6, 8), 1).unwrap();
    let ck = gan.checkpoint();

    let a = generate(&ck, &[1], 4, 9).unwrap();
    assert_eq!(a.n, 4);
    assert_eq!(a, generate(&ck, &[1], 4, 9).unwrap());
    assert_ne!(a, generate(&ck, &[1], 4, 10).unwrap());

    let z = sample_latent(2, cfg.z_dim, &mut StreamRng::new(11));
    let (z0, z1) = (z.sample(0).to_vec(), z.sample(1).to_vec());
    let path = interpolate(&ck, 2, &z0, &z1, 10).unwrap();
    assert_eq!(path.n, 10);
    let mut g = Gan::from_checkpoint(&ck).unwrap();
    let ends = g.generate_from_latent(&z, &[2, 2]).unwrap();
    assert_eq!(path.sample(0), ends.sample(0));
    for (p, q) in path.sample(9).iter().zip(ends.sample(1)) {
        assert!((p - q).abs() < 1e-12);
    }
    assert!(matches!(interpolate(&ck, 2, &z0, &z1, 1), Err(Error::Argument(_))));
}

#[test]
fn five_epoch_training_is_deterministic() {
    let cfg = GanConfig {
        epochs: 5,
        ..tiny_config()
    };
    let data = synthetic_set(&cfg, 6, 12);
    let run = || {
        let mut gan = Gan::new(&cfg).unwrap();
        let m = gan.fit(&data, &TrainOptions::default()).unwrap();
        (m, gan.checkpoint().encode().unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn conv_rejects_wrong_channels() {
    let mut rng = StreamRng::new(26);
    let mut conv = Conv2d::new(3, 2, 3, true, false, &mut rng);
    assert!(matches!(conv.forward(&random_tensor(1, 4, 4, 4, &mut rng)), Err(Error::Argument(_))));
}
