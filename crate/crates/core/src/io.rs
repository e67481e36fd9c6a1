//! Image files (PNG, binary PGM/PPM, RAWF) and labelled dataset folders.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::grid::{yuv_to_rgb, ColorSpace, ImageGrid};

const RAWF_MAGIC: &[u8; 4] = b"RAWF";

fn format_error(format: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        format,
        reason: reason.into(),
    }
}

fn is_rawf(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("rawf") || e.eq_ignore_ascii_case("raw"))
}

/// Reads a PNG/PGM/PPM file (8-bit, scaled to `[0, 1]`) or a RAWF file.
/// Single-channel files load as gray, everything else as RGB.
pub fn read_image(path: &Path) -> Result<ImageGrid> {
    if is_rawf(path) {
        return read_rawf(path);
    }
    let dynamic = image::open(path)?;
    let gray = matches!(
        dynamic,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLumaA16(_)
    );
    if gray {
        let g = dynamic.to_luma8();
        let (w, h) = g.dimensions();
        let data = g.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
        ImageGrid::new(h as usize, w as usize, 1, ColorSpace::Gray, data)
    } else {
        let rgb = dynamic.to_rgb8();
        let (w, h) = rgb.dimensions();
        let n = (w * h) as usize;
        let mut data = vec![0.0; 3 * n];
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = px[c] as f64 / 255.0;
            }
        }
        ImageGrid::new(h as usize, w as usize, 3, ColorSpace::Rgb, data)
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit image (clamped to `[0, 1]`), format chosen by extension;
/// `.rawf` writes the float format unclamped. YUV images are converted to
/// RGB first.
pub fn write_image(img: &ImageGrid, path: &Path) -> Result<()> {
    if is_rawf(path) {
        return write_rawf(img, path);
    }
    let img = if img.color_space() == ColorSpace::Yuv {
        yuv_to_rgb(img)?
    } else {
        img.clone()
    };
    let (h, w) = (img.height() as u32, img.width() as u32);
    let n = img.height() * img.width();
    if img.color_space() == ColorSpace::Gray {
        let raw = img.data().iter().map(|&v| quantize(v)).collect();
        GrayImage::from_raw(w, h, raw)
            .expect("buffer size matches")
            .save(path)?;
    } else {
        let mut raw = Vec::with_capacity(3 * n);
        for i in 0..n {
            for c in 0..3 {
                raw.push(quantize(img.channel(c)[i]));
            }
        }
        RgbImage::from_raw(w, h, raw)
            .expect("buffer size matches")
            .save(path)?;
    }
    Ok(())
}

/// `RAWF`, then `u32` height, width, channels (little endian), then planar
/// little-endian `f32` samples.
pub fn encode_rawf(img: &ImageGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * img.data().len());
    out.extend_from_slice(RAWF_MAGIC);
    for v in [img.height(), img.width(), img.channels()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_rawf(bytes: &[u8]) -> Result<ImageGrid> {
    if bytes.len() < 16 || &bytes[..4] != RAWF_MAGIC {
        return Err(format_error("RAWF", "missing RAWF header"));
    }
    let word = |i: usize| {
        u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize
    };
    let (h, w, c) = (word(1), word(2), word(3));
    let expected = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| format_error("RAWF", "dimensions overflow"))?;
    if bytes.len() - 16 != expected {
        return Err(format_error(
            "RAWF",
            format!(
                "payload is {} bytes, header implies {expected}",
                bytes.len() - 16
            ),
        ));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    let space = match c {
        1 => ColorSpace::Gray,
        3 => ColorSpace::Rgb,
        _ => {
            return Err(format_error(
                "RAWF",
                format!("unsupported channel count {c}"),
            ))
        }
    };
    ImageGrid::new(h, w, c, space, data)
}

pub fn write_rawf(img: &ImageGrid, path: &Path) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_rawf(img))?;
    Ok(())
}

pub fn read_rawf(path: &Path) -> Result<ImageGrid> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_rawf(&bytes)
}

/// Class names (sorted subdirectory names) and `(image, label)` pairs of a
/// folder laid out as one subdirectory per class.
pub fn read_dataset(dir: &Path) -> Result<(Vec<String>, Vec<(ImageGrid, usize)>)> {
    let mut classes: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(format_error(
            "dataset",
            format!("{} has no class subdirectories", dir.display()),
        ));
    }
    let mut names = Vec::with_capacity(classes.len());
    let mut samples = Vec::new();
    for (label, class_dir) in classes.iter().enumerate() {
        names.push(
            class_dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        let mut files: Vec<PathBuf> = fs::read_dir(class_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for f in files {
            samples.push((read_image(&f)?, label));
        }
    }
    Ok((names, samples))
}

/// Writes `samples` as `dir/<class>/<index>.png`.
pub fn write_dataset(dir: &Path, names: &[String], samples: &[(ImageGrid, usize)]) -> Result<()> {
    for name in names {
        fs::create_dir_all(dir.join(name))?;
    }
    for (i, (img, label)) in samples.iter().enumerate() {
        let name = names
            .get(*label)
            .ok_or_else(|| format_error("dataset", format!("label {label} has no class name")))?;
        write_image(img, &dir.join(name).join(format!("{i:05}.png")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(cs: ColorSpace) -> ImageGrid {
        ImageGrid::from_fn(5, 7, cs, |c, y, x| {
            ((c * 31 + y * 7 + x) % 256) as f64 / 255.0
        })
    }

    #[test]
    fn eight_bit_formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for (cs, ext) in [
            (ColorSpace::Rgb, "png"),
            (ColorSpace::Gray, "png"),
            (ColorSpace::Gray, "pgm"),
            (ColorSpace::Rgb, "ppm"),
        ] {
            let img = sample(cs);
            let p = dir.path().join(format!("a.{ext}"));
            write_image(&img, &p).unwrap();
            let back = read_image(&p).unwrap();
            assert_eq!(back.color_space(), cs);
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() < 1e-12, "{ext}");
            }
        }
    }

    #[test]
    fn rawf_round_trip_and_errors() {
        let img = ImageGrid::from_fn(3, 4, ColorSpace::Rgb, |c, y, x| {
            c as f64 - 0.25 * y as f64 + 0.5 * x as f64
        });
        let bytes = encode_rawf(&img);
        assert_eq!(&bytes[..4], b"RAWF");
        assert_eq!(bytes.len(), 16 + 4 * 36);
        assert_eq!(decode_rawf(&bytes).unwrap(), img);
        assert!(decode_rawf(&bytes[..20]).is_err());
        assert!(decode_rawf(b"NOPE0000000000000000").is_err());
    }

    #[test]
    fn dataset_folder_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        let samples = vec![(sample(ColorSpace::Rgb), 1), (sample(ColorSpace::Rgb), 0)];
        write_dataset(dir.path(), &names, &samples).unwrap();
        let (n2, s2) = read_dataset(dir.path()).unwrap();
        assert_eq!(n2, names);
        let mut labels: Vec<usize> = s2.iter().map(|s| s.1).collect();
        labels.sort();
        assert_eq!(labels, vec![0, 1]);
    }
}
