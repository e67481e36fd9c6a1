use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scatter_core::classify::{
    accuracy, accuracy_pixels, angular_spectrum, predict, sparsify_angular, spectral_flatness,
    train_linear, train_linear_pixels, LinearModel,
};
use scatter_core::scattering::PathIndex;
use scatter_core::synth::texture_dataset;
use scatter_core::{
    forward_batch, FilterBank, ImageGrid, ScatteringCoeffs, ScatteringConfig, TrainConfig,
};

type Samples = Vec<(ScatteringCoeffs, usize)>;

fn scatter(set: &[(ImageGrid, usize)], fb: &FilterBank, cfg: &ScatteringConfig) -> Samples {
    let imgs: Vec<ImageGrid> = set.iter().map(|s| s.0.clone()).collect();
    forward_batch(&imgs, fb, cfg, 1)
        .unwrap()
        .into_iter()
        .zip(set.iter().map(|s| s.1))
        .collect()
}

struct Fixture {
    train_img: Vec<(ImageGrid, usize)>,
    test_img: Vec<(ImageGrid, usize)>,
    train: Samples,
    test: Samples,
    model: LinearModel,
}

fn fixture() -> Fixture {
    let cfg = ScatteringConfig::new(2, 8);
    let (_, fb) = scatter_core::Transform::for_input(&cfg, 32).unwrap();
    let train_img = texture_dataset(30, 32, 21);
    let test_img = texture_dataset(20, 32, 22);
    let train = scatter(&train_img, &fb, &cfg);
    let test = scatter(&test_img, &fb, &cfg);
    let model = train_linear(&train, 10, &TrainConfig::default(), 1).unwrap();
    Fixture {
        train_img,
        test_img,
        train,
        test,
        model,
    }
}

#[test]
fn texture_probe_properties() {
    let f = fixture();

    // scattering beats raw pixels under the same budget
    let scat = accuracy(&f.model, &f.test).unwrap();
    let pixel_model = train_linear_pixels(&f.train_img, 10, &TrainConfig::default(), 1).unwrap();
    let pixel = accuracy_pixels(&pixel_model, &f.test_img).unwrap();
    assert!(scat >= pixel + 0.05, "scattering {scat} vs pixels {pixel}");

    // same seed, same model
    let again = train_linear(&f.train, 10, &TrainConfig::default(), 1).unwrap();
    assert_eq!(again, f.model);

    // predict agrees with an independent dot product
    let meta = f.model.meta();
    let gl = meta.layout.group_len();
    for (c, _) in f.test.iter().take(10) {
        let p = predict(&f.model, c).unwrap();
        for k in 0..10 {
            let w = f.model.class_weights(k);
            let mut s = f.model.bias()[k];
            for (i, x) in c.data().iter().enumerate() {
                let g = i / gl;
                s += w[i] * (x - meta.mean[g]) / meta.std[g];
            }
            assert!((s - p.scores[k]).abs() <= 1e-5 * s.abs().max(1.0));
        }
    }

    // consistent rescaling of every feature leaves predictions unchanged
    let scaled = |set: &Samples| {
        set.iter()
            .map(|(c, y)| (c.scaled(4.0), *y))
            .collect::<Samples>()
    };
    let m4 = train_linear(&scaled(&f.train), 10, &TrainConfig::default(), 1).unwrap();
    for ((a, _), (b, _)) in f.test.iter().zip(&scaled(&f.test)) {
        assert_eq!(
            predict(&f.model, a).unwrap().class,
            predict(&m4, b).unwrap().class
        );
    }

    // keep = 1 leaves every prediction in place
    let (full, _) = sparsify_angular(&f.model, 1.0).unwrap();
    for (c, _) in &f.test {
        let (a, b) = (predict(&f.model, c).unwrap(), predict(&full, c).unwrap());
        assert_eq!(a.class, b.class);
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    // permuting the trained order-1 weights across θ₁ flattens Ω₁
    let shape = f.test[0].0.shape();
    let paths = scatter_core::scattering::path_table(shape.j, shape.l);
    let s2 = shape.spatial * shape.spatial;
    let np = paths.len();
    let mut permuted = f.model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = shape.len();
    for k in 0..10 {
        for c in 0..shape.input_channels {
            for j1 in 0..shape.j {
                let mut order: Vec<usize> = (0..shape.l).collect();
                order.shuffle(&mut rng);
                let at = |l1: usize| {
                    let p = paths
                        .iter()
                        .position(|q| *q == PathIndex::Order1 { j1, l1 })
                        .unwrap();
                    k * d + (c * np + p) * s2
                };
                let src = f.model.weights().to_vec();
                let w = permuted.weights_mut();
                for (l1, &from) in order.iter().enumerate() {
                    w[at(l1)..at(l1) + s2].copy_from_slice(&src[at(from)..at(from) + s2]);
                }
            }
        }
    }
    let trained = spectral_flatness(&angular_spectrum(&f.model).unwrap().omega1);
    let shuffled = spectral_flatness(&angular_spectrum(&permuted).unwrap().omega1);
    assert!(
        trained < shuffled,
        "trained {trained} vs permuted {shuffled}"
    );
}
