//! Periodized Morlet wavelets and the Gaussian low-pass, sampled directly in
//! the Fourier domain.
//!
//! A filter is evaluated on the grid frequencies `2πk/M` (which periodizes it
//! spatially with period `M`) and summed over the `2π` translates `n ∈
//! {-2..2}²` (which samples it spatially). Both filters are centred, so the
//! spectra are real.

use std::f64::consts::PI;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fourier::{check_pow2, fold_in_place, SpectrumGrid};
use crate::real::Real;

const ALIAS_RANGE: i32 = 2;

/// Mother-wavelet shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorletParams {
    /// Centre frequency of the mother wavelet, radians per sample.
    pub xi0: f64,
    /// Envelope width of the mother wavelet, in samples.
    pub sigma0: f64,
    /// Ratio between the envelope widths along and across the wave vector.
    pub slant: f64,
}

impl MorletParams {
    /// Default design for `l` orientations: `xi0 = 3π/4`, `sigma0 = 0.8`,
    /// `slant = 4/l`.
    pub fn for_angles(l: usize) -> Self {
        MorletParams {
            xi0: 3.0 * PI / 4.0,
            sigma0: 0.8,
            slant: 4.0 / l.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi0 > 0.0 && self.xi0 < PI) {
            return Err(invalid(format!("xi0 must lie in (0, π), got {}", self.xi0)));
        }
        if !(self.sigma0 > 0.0) || !(self.slant > 0.0) {
            return Err(invalid("sigma0 and slant must be positive"));
        }
        Ok(())
    }
}

/// Signed grid frequency for index `k` on an `m`-point axis, in `[-π, π)`.
#[inline]
pub fn grid_frequency(k: usize, m: usize) -> f64 {
    let s = if k < m / 2 {
        k as f64
    } else {
        k as f64 - m as f64
    };
    2.0 * PI * s / m as f64
}

/// Samples `f(ωy, ωx)` summed over the `2π` translates.
fn periodized(m: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for ky in 0..m {
        let wy = grid_frequency(ky, m);
        for kx in 0..m {
            let wx = grid_frequency(kx, m);
            let mut acc = 0.0;
            for ny in -ALIAS_RANGE..=ALIAS_RANGE {
                for nx in -ALIAS_RANGE..=ALIAS_RANGE {
                    acc += f(wy + 2.0 * PI * ny as f64, wx + 2.0 * PI * nx as f64);
                }
            }
            out[ky * m + kx] = acc;
        }
    }
    out
}

fn to_spectrum(m: usize, re: &[f64]) -> SpectrumGrid<f64> {
    SpectrumGrid::from_real(m, re).expect("size checked by caller")
}

/// Morlet wavelet at scale `j` and orientation `theta` on an `m x m` grid.
///
/// `theta` is the direction of the wave vector, measured from the x axis
/// towards the y axis.
pub fn build_morlet(m: usize, j: u32, theta: f64, p: &MorletParams) -> Result<SpectrumGrid<f64>> {
    check_pow2(m)?;
    p.validate()?;
    if 1usize.checked_shl(j).is_none_or(|s| s >= m) {
        return Err(invalid(format!("scale 2^{j} too large for a {m}x{m} grid")));
    }
    let scale = (1u64 << j) as f64;
    let sigma = p.sigma0 * scale;
    let xi = p.xi0 / scale;
    let (s, c) = theta.sin_cos();
    let inv_slant2 = 1.0 / (p.slant * p.slant);
    // Fourier transform of the unit-peak anisotropic Gabor atom.
    let quad = move |wy: f64, wx: f64| {
        let along = wx * c + wy * s;
        let across = -wx * s + wy * c;
        sigma * sigma * (along * along + across * across * inv_slant2)
    };
    let gabor = periodized(m, |wy, wx| (-0.5 * quad(wy - xi * s, wx - xi * c)).exp());
    let envelope = periodized(m, |wy, wx| (-0.5 * quad(wy, wx)).exp());
    let k = gabor[0] / envelope[0];
    let mut psi: Vec<f64> = gabor
        .iter()
        .zip(&envelope)
        .map(|(g, e)| g - k * e)
        .collect();
    psi[0] = 0.0;
    let peak = psi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 1.0 {
        psi.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(to_spectrum(m, &psi))
}

/// Isotropic Gaussian low-pass of spatial width `sigma0 · 2^J`, unit DC gain.
pub fn build_gaussian(m: usize, j: u32, p: &MorletParams) -> Result<SpectrumGrid<f64>> {
    check_pow2(m)?;
    p.validate()?;
    if 1usize.checked_shl(j).is_none_or(|s| s > m) {
        return Err(invalid(format!("scale 2^{j} too large for a {m}x{m} grid")));
    }
    let sigma = p.sigma0 * (1u64 << j) as f64;
    let mut phi = periodized(m, |wy, wx| {
        (-0.5 * sigma * sigma * (wx * wx + wy * wy)).exp()
    });
    let dc = phi[0];
    phi.iter_mut().for_each(|v| *v /= dc);
    Ok(to_spectrum(m, &phi))
}

/// Orientation of angle index `l` out of `count`: `π l / count`.
pub fn angle(l: usize, count: usize) -> f64 {
    PI * l as f64 / count as f64
}

/// All filters needed by the cascade at every resolution it visits.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    size: usize,
    j: u32,
    l: usize,
    params: MorletParams,
    // psi[(j * L + l)][r], r = 0..=j
    psi: Vec<Vec<SpectrumGrid<f64>>>,
    // phi[r], r = 0..=J
    phi: Vec<SpectrumGrid<f64>>,
}

/// Block-sum of a spectrum onto the grid `m >> r`, without the `4^-r`
/// averaging used for signals: a filter applied on a subsampled grid keeps
/// its gain.
pub fn fold_filter(s: &SpectrumGrid<f64>, r: u32) -> SpectrumGrid<f64> {
    let mut data = s.data().to_vec();
    fold_in_place(&mut data, s.size(), r, 1.0);
    let mo = s.size() >> r;
    data.truncate(mo * mo);
    SpectrumGrid::new(mo, data).expect("power of two")
}

impl FilterBank {
    pub fn build(size: usize, j: u32, l: usize, params: MorletParams) -> Result<Self> {
        check_pow2(size)?;
        params.validate()?;
        if j == 0 || l == 0 {
            return Err(invalid("J and L must be at least 1"));
        }
        if 1usize.checked_shl(j).is_none_or(|s| s > size) {
            return Err(invalid(format!("2^J = 2^{j} exceeds grid size {size}")));
        }
        let mut psi = Vec::with_capacity(j as usize * l);
        for jj in 0..j {
            for ll in 0..l {
                let full = build_morlet(size, jj, angle(ll, l), &params)?;
                let mut copies = Vec::with_capacity(jj as usize + 1);
                for r in 1..=jj {
                    copies.push(fold_filter(&full, r));
                }
                copies.insert(0, full);
                psi.push(copies);
            }
        }
        let full_phi = build_gaussian(size, j, &params)?;
        let mut phi = vec![full_phi.clone()];
        for r in 1..=j {
            phi.push(fold_filter(&full_phi, r));
        }
        Ok(FilterBank {
            size,
            j,
            l,
            params,
            psi,
            phi,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn scales(&self) -> u32 {
        self.j
    }

    pub fn angles(&self) -> usize {
        self.l
    }

    pub fn params(&self) -> &MorletParams {
        &self.params
    }

    /// Wavelet `(j, l)` on the grid `size >> r`, `r <= j`.
    pub fn psi(&self, j: u32, l: usize, r: u32) -> &SpectrumGrid<f64> {
        &self.psi[j as usize * self.l + l][r as usize]
    }

    /// Low-pass on the grid `size >> r`, `r <= J`.
    pub fn phi(&self, r: u32) -> &SpectrumGrid<f64> {
        &self.phi[r as usize]
    }

    /// Number of distinct full-resolution wavelets (`J·L`).
    pub fn wavelet_count(&self) -> usize {
        self.psi.len()
    }

    /// Iterates `(j, l, r, spectrum)` over every stored wavelet copy.
    pub fn iter_psi(&self) -> impl Iterator<Item = (u32, usize, u32, &SpectrumGrid<f64>)> {
        self.psi.iter().enumerate().flat_map(move |(idx, copies)| {
            let j = (idx / self.l) as u32;
            let l = idx % self.l;
            copies
                .iter()
                .enumerate()
                .map(move |(r, s)| (j, l, r as u32, s))
        })
    }

    /// Real parts of all spectra converted to `T`, laid out for the engine.
    pub fn real_filters<T: Real>(&self) -> RealFilters<T> {
        let conv = |s: &SpectrumGrid<f64>| s.data().iter().map(|z| T::of(z.re)).collect::<Vec<T>>();
        RealFilters {
            psi: self
                .psi
                .iter()
                .map(|c| c.iter().map(conv).collect())
                .collect(),
            phi: self.phi.iter().map(conv).collect(),
            l: self.l,
        }
    }

    /// Adds `delta` to one coefficient of one stored wavelet. Used to check
    /// that the invariant suite notices a damaged bank.
    #[doc(hidden)]
    pub fn perturb_filter(&mut self, j: u32, l: usize, r: u32, index: usize, delta: f64) {
        let s = &mut self.psi[j as usize * self.l + l][r as usize];
        let z = &mut s.data_mut()[index];
        *z += Complex::new(delta, 0.0);
    }
}

/// Filters as flat real arrays in the engine's working precision.
#[derive(Clone, Debug)]
pub struct RealFilters<T> {
    psi: Vec<Vec<Vec<T>>>,
    phi: Vec<Vec<T>>,
    l: usize,
}

impl<T> RealFilters<T> {
    #[inline]
    pub fn psi(&self, j: u32, l: usize, r: u32) -> &[T] {
        &self.psi[j as usize * self.l + l][r as usize]
    }

    #[inline]
    pub fn phi(&self, r: u32) -> &[T] {
        &self.phi[r as usize]
    }
}

/// Littlewood–Paley sum of a filter bank.
#[derive(Clone, Debug)]
pub struct LittlewoodPaley {
    pub size: usize,
    /// `|φ̂(ω)|² + ½ Σ (|ψ̂(ω)|² + |ψ̂(-ω)|²)` on the full-resolution grid.
    pub energy: Vec<f64>,
    pub max_e: f64,
    /// Minimum over `|ω| ∈ [2π/2^J, 0.75π]`.
    pub min_e_band: f64,
}

pub fn littlewood_paley(fb: &FilterBank) -> LittlewoodPaley {
    let m = fb.size;
    let mut energy: Vec<f64> = fb.phi(0).data().iter().map(|z| z.norm_sqr()).collect();
    for copies in &fb.psi {
        let d = copies[0].data();
        for ky in 0..m {
            for kx in 0..m {
                let neg = ((m - ky) % m) * m + (m - kx) % m;
                energy[ky * m + kx] += 0.5 * (d[ky * m + kx].norm_sqr() + d[neg].norm_sqr());
            }
        }
    }
    let lo = 2.0 * PI / (1u64 << fb.j) as f64;
    let hi = 0.75 * PI;
    let mut max_e = f64::MIN;
    let mut min_e_band = f64::MAX;
    for ky in 0..m {
        for kx in 0..m {
            let e = energy[ky * m + kx];
            max_e = max_e.max(e);
            let r = grid_frequency(ky, m).hypot(grid_frequency(kx, m));
            if r >= lo && r <= hi {
                min_e_band = min_e_band.min(e);
            }
        }
    }
    LittlewoodPaley {
        size: m,
        energy,
        max_e,
        min_e_band,
    }
}

/// Frequency (radians/sample) where `|ψ̂|` peaks, and the L2 norm of the
/// spectrum.
pub fn spectrum_summary(s: &SpectrumGrid<f64>) -> (f64, f64) {
    let m = s.size();
    let (mut best, mut idx) = (-1.0, 0);
    for (i, z) in s.data().iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            idx = i;
        }
    }
    let w = grid_frequency(idx / m, m).hypot(grid_frequency(idx % m, m));
    (w, s.norm_sqr().sqrt())
}
