//! Image containers, color conversion and boundary padding.
//!
//! Pixel data is stored channel-major, row-major within each channel, always
//! as `f64`. The declared [`Precision`] selects the arithmetic used by the
//! transform; storage stays in double so conversions are lossless.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::scattering::ScatteringCoeffs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Rgb,
    Yuv,
    Gray,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Mirror extension that does not repeat the edge pixel.
    #[default]
    Reflect,
    /// Circular extension.
    Periodic,
}

impl std::str::FromStr for BoundaryMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reflect" | "symmetric" => Ok(BoundaryMode::Reflect),
            "periodic" | "circular" => Ok(BoundaryMode::Periodic),
            other => Err(invalid(format!("unknown boundary mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundaryMode::Reflect => "reflect",
            BoundaryMode::Periodic => "periodic",
        })
    }
}

/// A real-valued `height x width x channels` raster.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    color_space: ColorSpace,
    precision: Precision,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        color_space: ColorSpace,
        data: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(mismatch(
                format!("{} samples", height * width * channels),
                format!("{} samples", data.len()),
            ));
        }
        match (color_space, channels) {
            (ColorSpace::Gray, 1) | (ColorSpace::Rgb, 3) | (ColorSpace::Yuv, 3) => {}
            (ColorSpace::Gray, c) => {
                return Err(invalid(format!("gray image must have 1 channel, got {c}")))
            }
            (cs, c) => {
                return Err(invalid(format!(
                    "{cs:?} image must have 3 channels, got {c}"
                )))
            }
        }
        Ok(ImageGrid {
            height,
            width,
            channels,
            color_space,
            precision: Precision::default(),
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, color_space: ColorSpace) -> Self {
        let channels = if color_space == ColorSpace::Gray {
            1
        } else {
            3
        };
        ImageGrid {
            height,
            width,
            channels,
            color_space,
            precision: Precision::default(),
            data: vec![0.0; height * width * channels],
        }
    }

    /// Builds an image from `f(channel, y, x)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        color_space: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = ImageGrid::zeros(height, width, color_space);
        for c in 0..img.channels {
            for y in 0..height {
                for x in 0..width {
                    img.data[(c * height + y) * width + x] = f(c, y, x);
                }
            }
        }
        img
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Same layout and metadata, new samples.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(mismatch(self.data.len(), data.len()));
        }
        Ok(ImageGrid {
            data,
            ..self.clone()
        })
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Copy with every sample clamped to `[0, 1]`.
    pub fn clamped(&self) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }

    /// Circular shift by `(dy, dx)` pixels.
    pub fn roll(&self, dy: usize, dx: usize) -> Self {
        let (h, w) = (self.height, self.width);
        let mut out = self.clone();
        for c in 0..self.channels {
            let src = self.channel(c);
            let dst = out.channel_mut(c);
            for y in 0..h {
                for x in 0..w {
                    dst[((y + dy) % h) * w + (x + dx) % w] = src[y * w + x];
                }
            }
        }
        out
    }

    /// Rotation by +90 degrees about pixel (0, 0) on the periodic grid.
    ///
    /// The pixel at `(y, x)` moves to `(x, -y mod n)`, which maps the lattice
    /// onto itself so the rotation commutes with circular convolution.
    pub fn rot90(&self) -> Result<Self> {
        if self.height != self.width {
            return Err(invalid("rot90 requires a square image"));
        }
        let n = self.height;
        let mut out = self.clone();
        for c in 0..self.channels {
            let src = self.channel(c);
            let dst = out.channel_mut(c);
            for y in 0..n {
                for x in 0..n {
                    dst[x * n + (n - y) % n] = src[y * n + x];
                }
            }
        }
        Ok(out)
    }
}

// BT.601 luma weights; chroma rows are scaled colour differences so they sum
// to exactly zero.
const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;
const U_SCALE: f64 = 0.436 / (1.0 - KB);
const V_SCALE: f64 = 0.615 / (1.0 - KR);

/// RGB to YUV matrix (rows Y, U, V).
pub const RGB_TO_YUV: [[f64; 3]; 3] = [
    [KR, KG, KB],
    [-U_SCALE * KR, -U_SCALE * KG, U_SCALE * (1.0 - KB)],
    [V_SCALE * (1.0 - KR), -V_SCALE * KG, -V_SCALE * KB],
];

/// Exact inverse of [`RGB_TO_YUV`].
pub const YUV_TO_RGB: [[f64; 3]; 3] = [
    [1.0, 0.0, 1.0 / V_SCALE],
    [1.0, -KB / (KG * U_SCALE), -KR / (KG * V_SCALE)],
    [1.0, 1.0 / U_SCALE, 0.0],
];

fn apply_color_matrix(
    img: &ImageGrid,
    m: &[[f64; 3]; 3],
    transpose: bool,
    to: ColorSpace,
) -> ImageGrid {
    let n = img.height * img.width;
    let mut out = img.clone();
    out.color_space = to;
    let (a, rest) = out.data.split_at_mut(n);
    let (b, c) = rest.split_at_mut(n);
    let src = &img.data;
    for i in 0..n {
        let p = [src[i], src[n + i], src[2 * n + i]];
        let mut q = [0.0; 3];
        for (r, qr) in q.iter_mut().enumerate() {
            *qr = (0..3)
                .map(|k| if transpose { m[k][r] } else { m[r][k] } * p[k])
                .sum();
        }
        a[i] = q[0];
        b[i] = q[1];
        c[i] = q[2];
    }
    out
}

pub fn rgb_to_yuv(img: &ImageGrid) -> Result<ImageGrid> {
    if img.color_space != ColorSpace::Rgb || img.channels != 3 {
        return Err(invalid(format!(
            "rgb_to_yuv expects a 3-channel RGB image, got {:?} with {} channels",
            img.color_space, img.channels
        )));
    }
    Ok(apply_color_matrix(img, &RGB_TO_YUV, false, ColorSpace::Yuv))
}

/// Inverse of [`rgb_to_yuv`]; output may leave `[0, 1]`.
pub fn yuv_to_rgb(img: &ImageGrid) -> Result<ImageGrid> {
    if img.color_space != ColorSpace::Yuv || img.channels != 3 {
        return Err(invalid(format!(
            "yuv_to_rgb expects a 3-channel YUV image, got {:?}",
            img.color_space
        )));
    }
    Ok(apply_color_matrix(img, &YUV_TO_RGB, false, ColorSpace::Rgb))
}

/// Transpose of [`yuv_to_rgb`]: maps an RGB-space gradient to YUV space.
pub fn yuv_to_rgb_adjoint(grad_rgb: &ImageGrid) -> Result<ImageGrid> {
    if grad_rgb.channels != 3 {
        return Err(invalid("colour adjoint needs 3 channels"));
    }
    Ok(apply_color_matrix(
        grad_rgb,
        &YUV_TO_RGB,
        true,
        ColorSpace::Yuv,
    ))
}

/// Padded size and margins that make a length-`n` axis safe for scale `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadPlan {
    pub input: usize,
    pub padded: usize,
    pub margin_lo: usize,
    pub margin_hi: usize,
}

impl PadPlan {
    /// Plan that keeps an already power-of-two signal as is.
    pub fn identity(n: usize) -> Self {
        PadPlan {
            input: n,
            padded: n,
            margin_lo: 0,
            margin_hi: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.margin_lo == 0 && self.margin_hi == 0
    }

    /// First output cell and number of output cells kept after cropping.
    pub fn coeff_window(&self, j: u32) -> (usize, usize) {
        let step = 1usize << j;
        (self.margin_lo / step, self.input.div_ceil(step))
    }
}

pub fn pad_plan(n: usize, j: u32) -> Result<PadPlan> {
    let step = 1usize
        .checked_shl(j)
        .filter(|s| *s <= n)
        .ok_or_else(|| invalid(format!("input size {n} is smaller than 2^J = 2^{j}")))?;
    let padded = (n + 2 * step).next_power_of_two();
    let slack = padded - n;
    let margin_lo = slack / 2;
    Ok(PadPlan {
        input: n,
        padded,
        margin_lo,
        margin_hi: slack - margin_lo,
    })
}

#[inline]
fn source_index(i: isize, n: usize, mode: BoundaryMode) -> usize {
    let n_i = n as isize;
    match mode {
        BoundaryMode::Periodic => i.rem_euclid(n_i) as usize,
        BoundaryMode::Reflect => {
            if n == 1 {
                return 0;
            }
            let period = 2 * (n_i - 1);
            let k = i.rem_euclid(period);
            (if k >= n_i { period - k } else { k }) as usize
        }
    }
}

/// Pads every side of every channel by `margin` pixels.
pub fn pad(img: &ImageGrid, margin: usize, mode: BoundaryMode) -> Result<ImageGrid> {
    pad_with(img, margin, margin, mode)
}

/// Pads a square image according to `plan`.
pub fn pad_to_plan(img: &ImageGrid, plan: &PadPlan, mode: BoundaryMode) -> Result<ImageGrid> {
    if img.height != plan.input || img.width != plan.input {
        return Err(mismatch(
            format!("{0}x{0} image", plan.input),
            format!("{}x{} image", img.height, img.width),
        ));
    }
    pad_with(img, plan.margin_lo, plan.margin_hi, mode)
}

fn pad_with(img: &ImageGrid, lo: usize, hi: usize, mode: BoundaryMode) -> Result<ImageGrid> {
    if mode == BoundaryMode::Reflect && (lo.max(hi) > img.height || lo.max(hi) > img.width) {
        return Err(invalid(format!(
            "reflect margin {} exceeds image size {}x{}",
            lo.max(hi),
            img.height,
            img.width
        )));
    }
    let (h, w) = (img.height, img.width);
    let (ph, pw) = (h + lo + hi, w + lo + hi);
    let rows: Vec<usize> = (0..ph)
        .map(|i| source_index(i as isize - lo as isize, h, mode))
        .collect();
    let cols: Vec<usize> = (0..pw)
        .map(|i| source_index(i as isize - lo as isize, w, mode))
        .collect();
    let mut data = Vec::with_capacity(ph * pw * img.channels);
    for c in 0..img.channels {
        let src = img.channel(c);
        for &r in &rows {
            data.extend(cols.iter().map(|&col| src[r * w + col]));
        }
    }
    Ok(ImageGrid {
        height: ph,
        width: pw,
        data,
        ..img.clone()
    })
}

/// Adjoint of [`pad_to_plan`]: folds a gradient on the padded grid back onto
/// the original pixels (mirrored or wrapped contributions are summed).
pub fn pad_adjoint(grad: &ImageGrid, plan: &PadPlan, mode: BoundaryMode) -> Result<ImageGrid> {
    if grad.height != plan.padded || grad.width != plan.padded {
        return Err(mismatch(
            format!("{0}x{0} gradient", plan.padded),
            format!("{}x{}", grad.height, grad.width),
        ));
    }
    let n = plan.input;
    let map: Vec<usize> = (0..plan.padded)
        .map(|i| source_index(i as isize - plan.margin_lo as isize, n, mode))
        .collect();
    let mut data = vec![0.0; n * n * grad.channels];
    for c in 0..grad.channels {
        let src = grad.channel(c);
        let dst = &mut data[c * n * n..(c + 1) * n * n];
        for (y, &sy) in map.iter().enumerate() {
            for (x, &sx) in map.iter().enumerate() {
                dst[sy * n + sx] += src[y * plan.padded + x];
            }
        }
    }
    Ok(ImageGrid {
        height: n,
        width: n,
        data,
        ..grad.clone()
    })
}

/// Crops the coefficient grid computed on a padded image back to the cells
/// covering the original pixels.
pub fn unpad_coeffs(coeffs: &ScatteringCoeffs, plan: &PadPlan, j: u32) -> Result<ScatteringCoeffs> {
    let full = plan.padded >> j;
    if coeffs.spatial() != full {
        return Err(mismatch(
            format!("{full}x{full} coefficient grid"),
            format!("{0}x{0}", coeffs.spatial()),
        ));
    }
    let (start, count) = plan.coeff_window(j);
    if start + count > full {
        return Err(invalid("crop window exceeds coefficient grid"));
    }
    Ok(coeffs.crop(start, count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(vals: &[f64]) -> ImageGrid {
        ImageGrid::new(1, vals.len(), 1, ColorSpace::Gray, vals.to_vec()).unwrap()
    }

    fn pad_row(vals: &[f64], m: usize, mode: BoundaryMode) -> Vec<f64> {
        // pad only horizontally by padding a 1-row image and taking the middle row
        let img =
            ImageGrid::new(m + 1, vals.len(), 1, ColorSpace::Gray, vals.repeat(m + 1)).unwrap();
        let p = pad(&img, m, mode).unwrap();
        p.channel(0)[m * p.width()..(m + 1) * p.width()].to_vec()
    }

    #[test]
    fn reflect_row_does_not_repeat_edge() {
        assert_eq!(
            pad_row(&[1., 2., 3.], 1, BoundaryMode::Reflect),
            vec![2., 1., 2., 3., 2.]
        );
    }

    #[test]
    fn periodic_row_wraps() {
        assert_eq!(
            pad_row(&[1., 2., 3., 4.], 2, BoundaryMode::Periodic),
            vec![3., 4., 1., 2., 3., 4., 1., 2.]
        );
    }

    #[test]
    fn zero_margin_is_identity() {
        let img = row(&[0.5, 0.25, 1.0]);
        assert_eq!(pad(&img, 0, BoundaryMode::Reflect).unwrap(), img);
        assert_eq!(pad(&img, 0, BoundaryMode::Periodic).unwrap(), img);
    }

    #[test]
    fn reflect_margin_too_large_is_rejected() {
        let img = ImageGrid::zeros(4, 4, ColorSpace::Gray);
        assert!(pad(&img, 5, BoundaryMode::Reflect).is_err());
        assert!(pad(&img, 5, BoundaryMode::Periodic).is_ok());
    }

    #[test]
    fn pad_plan_examples() {
        let p = pad_plan(224, 4).unwrap();
        assert_eq!((p.padded, p.margin_lo, p.margin_hi), (256, 16, 16));
        let p = pad_plan(32, 2).unwrap();
        assert_eq!((p.padded, p.margin_lo, p.margin_hi), (64, 16, 16));
        let p = pad_plan(64, 3).unwrap();
        assert!(p.padded > 64);
        let p = pad_plan(100, 2).unwrap();
        assert_eq!((p.padded, p.margin_lo, p.margin_hi), (128, 14, 14));
        let p = pad_plan(101, 2).unwrap();
        assert_eq!((p.margin_lo, p.margin_hi), (13, 14));
        assert!(pad_plan(3, 2).is_err());
    }

    #[test]
    fn coefficient_windows() {
        assert_eq!(pad_plan(224, 4).unwrap().coeff_window(4), (1, 14));
        assert_eq!(pad_plan(32, 2).unwrap().coeff_window(2), (4, 8));
    }

    #[test]
    fn white_maps_to_unit_luma() {
        let white = ImageGrid::from_fn(2, 2, ColorSpace::Rgb, |_, _, _| 1.0);
        let yuv = rgb_to_yuv(&white).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(yuv.channel(0)[i], 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(yuv.channel(1)[i], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(yuv.channel(2)[i], 0.0, epsilon = 1e-15);
        }
        let back = yuv_to_rgb(&yuv).unwrap();
        for v in back.data() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn black_maps_to_zero() {
        let black = ImageGrid::zeros(3, 3, ColorSpace::Rgb);
        assert!(rgb_to_yuv(&black).unwrap().data().iter().all(|v| *v == 0.0));
        let zero = ImageGrid::zeros(3, 3, ColorSpace::Yuv);
        assert!(yuv_to_rgb(&zero).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn color_conversion_checks_space() {
        let gray = ImageGrid::zeros(2, 2, ColorSpace::Gray);
        assert!(rgb_to_yuv(&gray).is_err());
        let rgb = ImageGrid::zeros(2, 2, ColorSpace::Rgb);
        assert!(yuv_to_rgb(&rgb).is_err());
    }

    #[test]
    fn inverse_matrix_is_exact() {
        for i in 0..3 {
            for j in 0..3 {
                let prod: f64 = (0..3).map(|k| RGB_TO_YUV[i][k] * YUV_TO_RGB[k][j]).sum();
                assert_abs_diff_eq!(prod, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn pad_adjoint_matches_inner_products() {
        let plan = pad_plan(8, 2).unwrap();
        for mode in [BoundaryMode::Reflect, BoundaryMode::Periodic] {
            let x = ImageGrid::from_fn(8, 8, ColorSpace::Gray, |_, y, x| {
                ((y * 7 + x * 3) % 5) as f64 - 1.5
            });
            let g = ImageGrid::from_fn(plan.padded, plan.padded, ColorSpace::Gray, |_, y, x| {
                ((y * 11 + x * 5) % 7) as f64 * 0.25 - 0.6
            });
            let px = pad_to_plan(&x, &plan, mode).unwrap();
            let lhs: f64 = px.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let adj = pad_adjoint(&g, &plan, mode).unwrap();
            let rhs: f64 = x.data().iter().zip(adj.data()).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn rot90_four_times_is_identity() {
        let img = ImageGrid::from_fn(4, 4, ColorSpace::Gray, |_, y, x| (y * 4 + x) as f64);
        let r = img
            .rot90()
            .unwrap()
            .rot90()
            .unwrap()
            .rot90()
            .unwrap()
            .rot90()
            .unwrap();
        assert_eq!(r, img);
        assert_eq!(img.rot90().unwrap().get(0, 1, 0), img.get(0, 0, 1));
    }

    #[test]
    fn gray_requires_one_channel() {
        assert!(ImageGrid::new(1, 1, 3, ColorSpace::Gray, vec![0.0; 3]).is_err());
        assert!(ImageGrid::new(1, 2, 1, ColorSpace::Gray, vec![0.0; 3]).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn yuv_round_trip(data in proptest::collection::vec(-1.0f64..2.0, 3 * 12)) {
                let img = ImageGrid::new(3, 4, 3, ColorSpace::Rgb, data).unwrap();
                let back = yuv_to_rgb(&rgb_to_yuv(&img).unwrap()).unwrap();
                for (a, b) in img.data().iter().zip(back.data()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn periodic_pad_then_crop_restores(
                data in proptest::collection::vec(-1.0f64..1.0, 25),
                m in 0usize..7,
            ) {
                let img = ImageGrid::new(5, 5, 1, ColorSpace::Gray, data).unwrap();
                let p = pad(&img, m, BoundaryMode::Periodic).unwrap();
                prop_assert_eq!(p.channels(), 1);
                for y in 0..5 {
                    for x in 0..5 {
                        prop_assert_eq!(p.get(0, y + m, x + m), img.get(0, y, x));
                    }
                }
            }
        }
    }
}
