use std::path::Path;

use scatter_core::format::{decode_sct1, encode_sct1};
use scatter_core::io::read_image;
use scatter_core::synth::reference_image;
use scatter_core::{ColorSpace, ImageGrid, ScatteringConfig, Transform};

#[test]
fn shipped_reference_matches_the_generator() {
    let shipped =
        read_image(&Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/reference.png")).unwrap();
    let generated = reference_image(256);
    assert_eq!(shipped.shape_string(), generated.shape_string());
    for (a, b) in shipped.data().iter().zip(generated.data()) {
        assert!((a - b).abs() <= 1.0 / 255.0);
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn sct1_write_read_write_is_identical(data in proptest::collection::vec(0.0f64..1.0, 3 * 16 * 16), l in 1usize..5) {
            let cfg = ScatteringConfig::new(2, l);
            let (t, _) = Transform::for_input(&cfg, 16).unwrap();
            let img = ImageGrid::new(16, 16, 3, ColorSpace::Rgb, data).unwrap();
            let bytes = encode_sct1(&t.forward(&img).unwrap(), Some(&cfg.params)).unwrap();
            let (back, params) = decode_sct1(&bytes).unwrap();
            prop_assert_eq!(params, Some(cfg.params));
            prop_assert_eq!(encode_sct1(&back, params.as_ref()).unwrap(), bytes);
        }
    }
}
