//! Deterministic synthetic data: the 256² reference scene and a 10-class
//! oriented-texture dataset.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::{ColorSpace, ImageGrid};

pub const TEXTURE_CLASSES: usize = 10;
const ORIENTATIONS: usize = 5;
const FREQUENCIES: [f64; 2] = [1.6, 0.7];

/// Orientation (radians) and carrier frequency (radians/pixel) of a class.
pub fn texture_class(class: usize) -> (f64, f64) {
    let o = class % ORIENTATIONS;
    let f = FREQUENCIES[class / ORIENTATIONS % FREQUENCIES.len()];
    (PI * o as f64 / ORIENTATIONS as f64, f)
}

/// One RGB texture of `class`: a few random-phase gratings near the class
/// orientation and frequency under a random colour tint, plus white noise.
pub fn texture(class: usize, n: usize, rng: &mut impl Rng) -> ImageGrid {
    let (theta, freq) = texture_class(class);
    let noise = Normal::new(0.0, 0.12).expect("valid sigma");
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let th = theta + rng.random_range(-0.12..0.12);
            let f = freq * rng.random_range(0.9..1.1);
            (
                f * th.cos(),
                f * th.sin(),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let total: f64 = waves.iter().map(|w| w.3).sum();
    let tint: [f64; 3] = [
        rng.random_range(0.4..1.0),
        rng.random_range(0.4..1.0),
        rng.random_range(0.4..1.0),
    ];
    let base = rng.random_range(0.35..0.65);
    let contrast = rng.random_range(0.15..0.3);
    let mut pattern = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let v: f64 = waves
                .iter()
                .map(|&(kx, ky, ph, a)| a * (kx * x as f64 + ky * y as f64 + ph).cos())
                .sum();
            pattern[y * n + x] = v / total;
        }
    }
    let mut img = ImageGrid::zeros(n, n, ColorSpace::Rgb);
    for c in 0..3 {
        for (d, p) in img.channel_mut(c).iter_mut().zip(&pattern) {
            *d = (base + contrast * tint[c] * p + noise.sample(rng)).clamp(0.0, 1.0);
        }
    }
    img
}

/// `per_class` samples of every class, interleaved by class, from `seed`.
pub fn texture_dataset(per_class: usize, n: usize, seed: u64) -> Vec<(ImageGrid, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * TEXTURE_CLASSES);
    for _ in 0..per_class {
        for class in 0..TEXTURE_CLASSES {
            out.push((texture(class, n, &mut rng), class));
        }
    }
    out
}

fn smoothstep(e0: f64, e1: f64, v: f64) -> f64 {
    let t = ((v - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn blend(dst: &mut [f64; 3], src: [f64; 3], a: f64) {
    for k in 0..3 {
        dst[k] = dst[k] * (1.0 - a) + src[k] * a;
    }
}

/// An `n x n` outdoor-like scene: sky gradient, sun, rolling hills with grass
/// texture, a striped building with windows, a wooden fence and a pond.
pub fn reference_image(n: usize) -> ImageGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca7);
    // smooth random field from a handful of low-frequency sinusoids
    let field: Vec<(f64, f64, f64, f64)> = (0..24)
        .map(|_| {
            let f = rng.random_range(2.0..40.0);
            let th = rng.random_range(0.0..PI);
            (
                f * th.cos(),
                f * th.sin(),
                rng.random_range(0.0..2.0 * PI),
                1.0 / f.sqrt(),
            )
        })
        .collect();
    let grain = |u: f64, v: f64| -> f64 {
        field
            .iter()
            .map(|&(a, b, p, w)| w * (a * u + b * v + p).sin())
            .sum::<f64>()
            * 0.25
    };
    let mut img = ImageGrid::zeros(n, n, ColorSpace::Rgb);
    let s = n as f64;
    for py in 0..n {
        for px in 0..n {
            let (u, v) = (px as f64 / s, py as f64 / s);
            let mut c = [0.35 + 0.3 * v, 0.55 + 0.25 * v, 0.95 - 0.1 * v];

            let sun = ((u - 0.78).powi(2) + (v - 0.18).powi(2)).sqrt();
            blend(
                &mut c,
                [1.0, 0.92, 0.55],
                1.0 - smoothstep(0.06, 0.075, sun),
            );
            blend(
                &mut c,
                [1.0, 0.85, 0.6],
                0.35 * (1.0 - smoothstep(0.07, 0.2, sun)),
            );

            let cloud = smoothstep(
                0.25,
                0.6,
                grain(u * 0.7, v * 2.5) + 0.4 - (v - 0.22).abs() * 3.0,
            );
            blend(&mut c, [0.97, 0.97, 1.0], 0.8 * cloud);

            let hill = 0.55 + 0.06 * (u * 7.0).sin() + 0.03 * (u * 17.0 + 1.0).sin();
            let grass = 0.5 + 0.5 * (u * s * 0.9 + 3.0 * grain(u, v)).sin();
            if v > hill {
                let g = [
                    0.2 + 0.1 * grass,
                    0.45 + 0.15 * grass + 0.1 * grain(u * 3.0, v),
                    0.15,
                ];
                blend(&mut c, g, smoothstep(hill, hill + 0.004, v));
            }

            // building with horizontal siding and a grid of windows
            if (0.1..0.38).contains(&u) && (0.3..0.7).contains(&v) {
                let siding = 0.5 + 0.5 * (v * s * 0.8).sin();
                let mut b = [0.7 + 0.08 * siding, 0.42 + 0.05 * siding, 0.32];
                let wx = ((u - 0.1) * 28.0).fract();
                let wy = ((v - 0.3) * 20.0).fract();
                if (0.25..0.75).contains(&wx) && (0.2..0.7).contains(&wy) && v < 0.62 {
                    b = [0.15, 0.2, 0.3 + 0.2 * wy];
                }
                if (0.2..0.28).contains(&u) && v > 0.58 {
                    b = [0.35, 0.2, 0.1];
                }
                c = b;
            }
            // roof
            let roof_top = 0.3 - 0.12 * (1.0 - ((u - 0.24) / 0.16).abs()).max(0.0);
            if (0.08..0.4).contains(&u) && v < 0.3 && v > roof_top {
                c = [0.45, 0.12, 0.1];
            }

            // fence: vertical boards with wood grain
            if (0.66..0.76).contains(&v) && u > 0.45 {
                let board = ((u - 0.45) * 40.0).fract();
                if board < 0.7 {
                    let wood = 0.5 + 0.5 * (v * s * 1.7 + 6.0 * grain(u * 4.0, v)).sin();
                    c = [0.55 + 0.15 * wood, 0.38 + 0.1 * wood, 0.2 + 0.05 * wood];
                }
            }

            // pond with ripples
            let pond = ((u - 0.55) / 0.22).powi(2) + ((v - 0.87) / 0.07).powi(2);
            if pond < 1.0 {
                let r = 0.5 + 0.5 * (pond.sqrt() * 60.0).sin();
                blend(
                    &mut c,
                    [0.15 + 0.1 * r, 0.35 + 0.15 * r, 0.6 + 0.2 * r],
                    1.0 - smoothstep(0.85, 1.0, pond),
                );
            }

            let speck = 0.02 * grain(u * 9.0, v * 9.0);
            for (k, ch) in c.iter().enumerate() {
                img.channel_mut(k)[py * n + px] = (ch + speck).clamp(0.0, 1.0);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_is_deterministic_and_balanced() {
        let a = texture_dataset(3, 16, 9);
        let b = texture_dataset(3, 16, 9);
        assert_eq!(a.len(), 30);
        assert!(a.iter().zip(&b).all(|(x, y)| x == y));
        for class in 0..TEXTURE_CLASSES {
            assert_eq!(a.iter().filter(|s| s.1 == class).count(), 3);
        }
        assert!(a
            .iter()
            .all(|(img, _)| img.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn classes_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for c in 0..TEXTURE_CLASSES {
            let (t, f) = texture_class(c);
            assert!(seen.insert(((t * 1e6) as i64, (f * 1e6) as i64)));
        }
    }

    #[test]
    fn reference_scene_is_in_range() {
        let img = reference_image(64);
        assert_eq!(img.shape_string(), reference_image(64).shape_string());
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(img, reference_image(64));
    }
}
