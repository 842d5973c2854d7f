use super::*;
use crate::numerics::{finite_diff_gradient, relative_error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(seed: u64) -> CnnConfig {
    CnnConfig {
        in_channels: 4,
        c1: 8,
        input_size: 10,
        init_std: 0.3,
        seed,
        ..CnnConfig::default()
    }
}

fn random_input(cfg: &CnnConfig, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[cfg.input_size, cfg.input_size, cfg.in_channels], |_| rng.random_range(-1.0..1.0))
}

fn random_target(n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[n, n], |_| rng.random_range(-0.5..0.5))
}

/// Straight-line composition of the public single-layer operations.
fn composed(model: &CnnSrkModel, x: &Tensor) -> Tensor {
    let a = masked_conv_forward(&model.conv1, x).unwrap().map(|v| v.max(0.0));
    let o = masked_conv_forward(&model.conv2, &a).unwrap();
    let g = group_sum(&o, model.group_size).unwrap();
    let mut heat = Tensor::zeros(&[x.shape()[0], x.shape()[1]]);
    for (k, p) in model.dt.iter().enumerate() {
        let d = dt_pool(&g.channel(k).unwrap(), p).unwrap();
        heat = heat.zip_with(&d, |a, b| a + b).unwrap();
    }
    heat
}

#[test]
fn forward_equals_composition() {
    for seed in 0..5 {
        let cfg = small_config(seed);
        let mut model = CnnSrkModel::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for p in model.dt.iter_mut() {
            *p = DtPoolParams {
                varpi_x: rng.random_range(0.0..0.3),
                varpi_y: rng.random_range(0.0..0.3),
                theta_x: rng.random_range(-0.2..0.2),
                theta_y: rng.random_range(-0.2..0.2),
                bound: 3,
            };
        }
        let x = random_input(&cfg, seed);
        let fast = cnn_forward(&model, &x).unwrap();
        let slow = composed(&model, &x);
        assert!(relative_error(&fast, &slow, 1e-12) <= 1e-12);
    }
}

#[test]
fn zero_penalty_gives_constant_heat() {
    let cfg = CnnConfig {
        varpi_init: 0.0,
        dt_bound: 20,
        ..small_config(1)
    };
    let model = CnnSrkModel::new(&cfg).unwrap();
    let heat = cnn_forward(&model, &random_input(&cfg, 2)).unwrap();
    let first = heat.data()[0];
    assert!(heat.data().iter().all(|&v| v == first));
}

#[test]
fn masked_weights_do_not_matter() {
    let cfg = small_config(3);
    let model = CnnSrkModel::new(&cfg).unwrap();
    let x = random_input(&cfg, 4);
    let base = cnn_forward(&model, &x).unwrap();
    let mut perturbed = model.clone();
    let l = &mut perturbed.conv1;
    let mut changed = 0;
    for oc in 0..l.out_channels {
        for p in 0..l.kh {
            for q in 0..l.kw {
                if !l.masks[oc].is_active(p, q) {
                    for ic in 0..l.in_per_group() {
                        let i = l.filter_index(oc, p, q, ic);
                        l.filters[i] += 1e3;
                        changed += 1;
                    }
                }
            }
        }
    }
    assert!(changed > 0);
    assert_eq!(cnn_forward(&perturbed, &x).unwrap(), base);
}

#[test]
fn stages_touch_only_their_parameters() {
    let cfg = small_config(5);
    let x = random_input(&cfg, 6);
    let rot = random_input(&cfg, 7);
    let y = random_target(cfg.input_size, 8);
    let mut model = CnnSrkModel::new(&cfg).unwrap();
    let before = model.clone();
    cnn_stage1_step(&mut model, &x, Some(&rot), &y, 0.01).unwrap();
    assert_eq!(model.dt, before.dt);
    assert_ne!(model.conv1.filters, before.conv1.filters);

    let mid = model.clone();
    cnn_stage2_step(&mut model, &x, &y, 0.01).unwrap();
    assert_eq!(model.conv1, mid.conv1);
    assert_eq!(model.conv2, mid.conv2);
    assert_ne!(model.dt, mid.dt);
}

#[test]
fn zero_rate_leaves_model_unchanged() {
    let cfg = small_config(9);
    let x = random_input(&cfg, 10);
    let y = random_target(cfg.input_size, 11);
    let mut model = CnnSrkModel::new(&cfg).unwrap();
    let before = model.clone();
    cnn_stage1_step(&mut model, &x, Some(&x), &y, 0.0).unwrap();
    cnn_stage2_step(&mut model, &x, &y, 0.0).unwrap();
    assert_eq!(model, before);
}

#[test]
fn identical_branches_match_single_stream() {
    let cfg = small_config(12);
    let model = CnnSrkModel::new(&cfg).unwrap();
    let x = random_input(&cfg, 13);
    let y = random_target(cfg.input_size, 14);
    let two = stage1_gradients(&model, &x, Some(&x), &y).unwrap();
    let one = stage1_gradients(&model, &x, None, &y).unwrap();
    assert_eq!(two, one);
}

#[test]
fn stage1_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let cfg = CnnConfig {
            input_size: 7,
            ..small_config(seed)
        };
        let mut model = CnnSrkModel::new(&cfg).unwrap();
        // zero biases put border pixels whose active taps all fall in the
        // padding exactly on the ReLU kink
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        for b in model.conv1.bias.iter_mut().chain(model.conv2.bias.iter_mut()) {
            *b = rng.random_range(0.05..0.2) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let x = random_input(&cfg, seed + 1);
        let rot = random_input(&cfg, seed + 2);
        let y = random_target(cfg.input_size, seed + 3);
        let (_, g) = stage1_gradients(&model, &x, Some(&rot), &y).unwrap();

        let n1 = model.conv1.filters.len();
        let n2 = model.conv2.filters.len();
        let mut flat: Vec<f64> = model.conv1.filters.clone();
        flat.extend(&model.conv1.bias);
        flat.extend(&model.conv2.filters);
        flat.extend(&model.conv2.bias);
        let unpack = |t: &Tensor| {
            let d = t.data();
            let mut m = model.clone();
            m.conv1.filters.copy_from_slice(&d[..n1]);
            m.conv1.bias.copy_from_slice(&d[n1..n1 + 8]);
            m.conv2.filters.copy_from_slice(&d[n1 + 8..n1 + 8 + n2]);
            m.conv2.bias.copy_from_slice(&d[n1 + 8 + n2..]);
            m
        };
        let fd = finite_diff_gradient(
            |t| stage1_gradients(&unpack(t), &x, Some(&rot), &y).unwrap().0,
            &Tensor::vector(flat),
            1e-6,
        )
        .unwrap();
        let mut an = g.conv1_filters.clone();
        an.extend(&g.conv1_bias);
        an.extend(&g.conv2_filters);
        an.extend(&g.conv2_bias);
        let an = Tensor::vector(an);
        // masked taps carry no gradient either way
        let err = relative_error(&an, &fd, 1e-8);
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn stage2_zero_at_own_output() {
    let cfg = small_config(15);
    let model = CnnSrkModel::new(&cfg).unwrap();
    let x = random_input(&cfg, 16);
    let y = cnn_forward(&model, &x).unwrap();
    let (loss, grads) = stage2_gradients(&model, &x, &y).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.iter().all(|g| *g == DtParamGrads::default()));
}

#[test]
fn stage2_gradients_match_finite_differences() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        seed += 1;
        let cfg = CnnConfig {
            input_size: 8,
            ..small_config(seed)
        };
        let mut model = CnnSrkModel::new(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in model.dt.iter_mut() {
            p.varpi_x = rng.random_range(0.05..0.4);
            p.varpi_y = rng.random_range(0.05..0.4);
            p.theta_x = rng.random_range(-0.2..0.2);
            p.theta_y = rng.random_range(-0.2..0.2);
        }
        let x = random_input(&cfg, seed + 1);
        let y = random_target(cfg.input_size, seed + 2);
        let flat: Vec<f64> = model
            .dt
            .iter()
            .flat_map(|p| [p.varpi_x, p.varpi_y, p.theta_x, p.theta_y])
            .collect();
        let with = |t: &Tensor| {
            let mut m = model.clone();
            for (p, c) in m.dt.iter_mut().zip(t.data().chunks(4)) {
                (p.varpi_x, p.varpi_y, p.theta_x, p.theta_y) = (c[0], c[1], c[2], c[3]);
            }
            m
        };
        // skip instances where a small shift flips an argmax
        let base = Tensor::vector(flat.clone());
        let h0 = cnn_forward(&model, &x).unwrap();
        let bumped = cnn_forward(&with(&base.map(|v| v + 1e-5)), &x).unwrap();
        let (_, grads) = stage2_gradients(&model, &x, &y).unwrap();
        let an = Tensor::vector(grads.iter().flat_map(|g| [g.varpi_x, g.varpi_y, g.theta_x, g.theta_y]).collect());
        let fd = finite_diff_gradient(|t| stage2_gradients(&with(t), &x, &y).unwrap().0, &base, 1e-7).unwrap();
        if (bumped.data().iter().zip(h0.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)) > 1e-3 {
            continue;
        }
        assert!(relative_error(&an, &fd, 1e-8) <= 1e-4, "seed {seed}");
        checked += 1;
    }
}

#[test]
fn stage2_keeps_curvature_nonnegative() {
    let cfg = small_config(17);
    let mut model = CnnSrkModel::new(&cfg).unwrap();
    let x = random_input(&cfg, 18);
    let y = Tensor::filled(&[cfg.input_size, cfg.input_size], 100.0);
    for _ in 0..5 {
        cnn_stage2_step(&mut model, &x, &y, 1.0).unwrap();
    }
    assert!(model.dt.iter().all(|p| p.varpi_x >= 0.0 && p.varpi_y >= 0.0));
}

#[test]
fn config_and_shape_errors() {
    assert!(CnnSrkModel::new(&CnnConfig { c1: 10, ..CnnConfig::default() }).is_err());
    let cfg = small_config(19);
    let model = CnnSrkModel::new(&cfg).unwrap();
    assert!(cnn_forward(&model, &Tensor::zeros(&[9, 10, 4])).is_err());
    assert!(stage2_gradients(&model, &random_input(&cfg, 1), &Tensor::zeros(&[3, 3])).is_err());
}

#[test]
fn non_finite_loss_is_reported() {
    let cfg = small_config(20);
    let model = CnnSrkModel::new(&cfg).unwrap();
    let x = random_input(&cfg, 21);
    let y = Tensor::filled(&[cfg.input_size, cfg.input_size], f64::NAN);
    assert!(matches!(stage2_gradients(&model, &x, &y), Err(crate::Error::Numeric(_))));
}
