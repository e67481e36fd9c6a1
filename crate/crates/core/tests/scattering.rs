use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scatter_core::filterbank::littlewood_paley;
use scatter_core::scattering::plan_for;
use scatter_core::{
    backward, forward, forward_batch, forward_oracle, BoundaryMode, ColorSpace, Error, FilterBank,
    ImageGrid, PathIndex, Precision, ScatteringConfig, Transform,
};

fn bank(cfg: &ScatteringConfig, n: usize) -> FilterBank {
    FilterBank::build(plan_for(n, cfg).unwrap().padded, cfg.j, cfg.l, cfg.params).unwrap()
}

fn noise(seed: u64, n: usize, cs: ColorSpace) -> ImageGrid {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    ImageGrid::from_fn(n, n, cs, |_, _, _| r.random::<f64>())
}

fn periodic_double(j: u32, l: usize) -> ScatteringConfig {
    ScatteringConfig::new(j, l)
        .with_boundary(BoundaryMode::Periodic)
        .with_precision(Precision::Double)
}

#[test]
fn zero_image_gives_zero_coefficients() {
    for boundary in [BoundaryMode::Periodic, BoundaryMode::Reflect] {
        let cfg = ScatteringConfig::new(2, 4).with_boundary(boundary);
        let s = forward(
            &ImageGrid::zeros(16, 16, ColorSpace::Rgb),
            &bank(&cfg, 16),
            &cfg,
        )
        .unwrap();
        assert!(s.data().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn constant_image_keeps_only_the_average() {
    let cfg = periodic_double(3, 8);
    let c = 0.37;
    let s = forward(
        &ImageGrid::from_fn(32, 32, ColorSpace::Gray, |_, _, _| c),
        &bank(&cfg, 32),
        &cfg,
    )
    .unwrap();
    for (p, path) in s.paths().iter().enumerate() {
        for v in s.block(0, p) {
            match path {
                PathIndex::Order0 => assert!((v - c).abs() < 1e-12),
                _ => assert!(v.abs() < 1e-5 * c, "{path:?}: {v}"),
            }
        }
    }
}

#[test]
fn impulse_order_zero_samples_the_low_pass() {
    let cfg = periodic_double(2, 4);
    let fb = bank(&cfg, 16);
    let mut img = ImageGrid::zeros(16, 16, ColorSpace::Gray);
    img.data_mut()[0] = 1.0;
    let s = forward_oracle(&img, &fb, &cfg).unwrap();
    // φ in space by a direct inverse DFT of its spectrum
    let phi = fb.phi(0);
    let n = 16;
    for y in 0..4 {
        for x in 0..4 {
            let (py, px) = (4 * y, 4 * x);
            let mut acc = 0.0;
            for ky in 0..n {
                for kx in 0..n {
                    let arg = 2.0 * std::f64::consts::PI * ((ky * py + kx * px) as f64) / n as f64;
                    let z = phi.data()[ky * n + kx];
                    acc += z.re * arg.cos() - z.im * arg.sin();
                }
            }
            let expect = acc / (n * n) as f64;
            assert!((s.get(0, 0, y, x) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_is_deterministic_and_batches_match() {
    let cfg = ScatteringConfig::new(2, 4);
    let fb = bank(&cfg, 16);
    let imgs: Vec<ImageGrid> = (0..8).map(|k| noise(k, 16, ColorSpace::Rgb)).collect();
    let one = forward_batch(&imgs, &fb, &cfg, 1).unwrap();
    let four = forward_batch(&imgs, &fb, &cfg, 4).unwrap();
    assert_eq!(one, four);
    for (img, s) in imgs.iter().zip(&one) {
        assert_eq!(&forward(img, &fb, &cfg).unwrap(), s);
    }
    assert!(forward_batch(&[], &fb, &cfg, 2).unwrap().is_empty());
    let twins = forward_batch(&[imgs[0].clone(), imgs[0].clone()], &fb, &cfg, 2).unwrap();
    assert_eq!(twins[0], twins[1]);
}

#[test]
fn mixed_batch_and_bad_sizes_are_rejected() {
    let cfg = ScatteringConfig::new(2, 4);
    let fb = bank(&cfg, 16);
    let mixed = [noise(1, 16, ColorSpace::Rgb), noise(2, 8, ColorSpace::Rgb)];
    assert!(matches!(
        forward_batch(&mixed, &fb, &cfg, 1),
        Err(Error::ShapeMismatch { .. })
    ));

    let periodic = ScatteringConfig::new(2, 4).with_boundary(BoundaryMode::Periodic);
    assert!(matches!(
        plan_for(24, &periodic),
        Err(Error::InvalidInput(_))
    ));
    // a bank built for another grid does not fit
    assert!(Transform::new(&bank(&periodic, 32), &periodic, 16).is_err());
}

#[test]
fn reflect_handles_sizes_that_are_not_powers_of_two() {
    let cfg = ScatteringConfig::new(2, 8);
    let s = forward(&noise(3, 24, ColorSpace::Rgb), &bank(&cfg, 24), &cfg).unwrap();
    assert_eq!((s.channel_count(), s.spatial()), (243, 6));
    assert!(s.data().iter().all(|v| v.is_finite()));
}

#[test]
fn tape_fits_three_forward_arenas_and_gradients_stay_finite() {
    for (n, j) in [(32, 2), (64, 3)] {
        let cfg = ScatteringConfig::new(j, 8);
        let t = Transform::new(&bank(&cfg, n), &cfg, n).unwrap();
        let (_, tape) = t.forward_with_tape(&noise(5, n, ColorSpace::Rgb)).unwrap();
        assert!(
            tape.peak_slots() <= 3 * tape.forward_peak(),
            "{} > 3 x {}",
            tape.peak_slots(),
            tape.forward_peak()
        );
    }
    let cfg = ScatteringConfig::new(2, 4);
    let t = Transform::new(&bank(&cfg, 16), &cfg, 16).unwrap();
    let (s, tape) = t
        .forward_with_tape(&ImageGrid::zeros(16, 16, ColorSpace::Gray))
        .unwrap();
    let ct = s.with_data(vec![1.0; s.len()]).unwrap();
    assert!(backward(&tape, &ct)
        .unwrap()
        .data()
        .iter()
        .all(|v| v.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_budget(seed in 0u64..10_000, smooth in any::<bool>()) {
        let cfg = ScatteringConfig::new(2, 8).with_precision(Precision::Double);
        let fb = bank(&cfg, 32);
        let eps = (littlewood_paley(&fb).max_e - 1.0).max(0.0);
        let x = if smooth {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (r.random::<f64>(), r.random::<f64>());
            ImageGrid::from_fn(32, 32, ColorSpace::Rgb, |c, y, x| a + b * ((y + 2 * x + c) as f64 / 9.0).sin())
        } else {
            noise(seed, 32, ColorSpace::Rgb)
        };
        let s = forward(&x, &fb, &cfg).unwrap();
        prop_assert!(s.grid_norm() <= (1.0 + eps) * x.norm());
    }

    #[test]
    fn translation_by_one_cell(seed in 0u64..10_000, cy in 0usize..8, cx in 0usize..8) {
        let cfg = periodic_double(2, 4);
        let t = Transform::new(&bank(&cfg, 32), &cfg, 32).unwrap();
        let x = noise(seed, 32, ColorSpace::Gray);
        let a = t.forward(&x.roll(4 * cy, 4 * cx)).unwrap();
        let b = t.forward(&x).unwrap().roll(cy, cx);
        prop_assert!(a.sub(&b).unwrap().norm() <= 1e-5 * b.norm());
    }

    #[test]
    fn linear_in_the_cotangent(seed in 0u64..10_000, a in -3.0f64..3.0) {
        let cfg = ScatteringConfig::new(2, 4).with_precision(Precision::Double);
        let t = Transform::new(&bank(&cfg, 16), &cfg, 16).unwrap();
        let (s, tape) = t.forward_with_tape(&noise(seed, 16, ColorSpace::Rgb)).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let ct = s.with_data((0..s.len()).map(|_| r.random::<f64>() - 0.5).collect()).unwrap();
        let g = backward(&tape, &ct).unwrap();
        let ga = backward(&tape, &ct.scaled(a)).unwrap();
        let scale = g.norm().max(1e-300);
        for (u, v) in g.data().iter().zip(ga.data()) {
            prop_assert!((a * u - v).abs() <= 1e-12 * scale);
        }
    }
}
