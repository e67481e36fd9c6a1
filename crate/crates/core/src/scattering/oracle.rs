//! Brute-force reference: every convolution is a direct circular sum at full
//! resolution and only the final low-pass output is subsampled. The spatial
//! filters come from a direct inverse DFT, so no FFT code is involved.

use std::f64::consts::PI;

use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::filterbank::FilterBank;
use crate::fourier::SpectrumGrid;
use crate::grid::{BoundaryMode, ImageGrid};
use crate::scattering::coeffs::{CoeffShape, ScatteringCoeffs};
use crate::scattering::paths::{path_table, PathIndex};
use crate::scattering::ScatteringConfig;

type C = Complex<f64>;

fn spatial_filter(s: &SpectrumGrid<f64>) -> Vec<C> {
    let n = s.size();
    let twiddle: Vec<C> = (0..n)
        .map(|k| C::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
        .collect();
    // rows first: tmp[ky][x] = Σ_kx S[ky][kx] e^{2πi kx x / n}
    let mut tmp = vec![C::new(0.0, 0.0); n * n];
    for ky in 0..n {
        for x in 0..n {
            tmp[ky * n + x] = (0..n).map(|kx| s.at(ky, kx) * twiddle[(kx * x) % n]).sum();
        }
    }
    let scale = 1.0 / (n * n) as f64;
    let mut out = vec![C::new(0.0, 0.0); n * n];
    for y in 0..n {
        for x in 0..n {
            out[y * n + x] = (0..n)
                .map(|ky| tmp[ky * n + x] * twiddle[(ky * y) % n])
                .sum::<C>()
                * scale;
        }
    }
    out
}

/// `(f ⋆ h)[p] = Σ_q f[q] h[p - q]` on the `n`-periodic grid, evaluated at
/// the points `p = step · (py, px)`.
fn circular_conv(f: &[C], h: &[C], n: usize, step: usize) -> Vec<C> {
    let on = n / step;
    let mut out = vec![C::new(0.0, 0.0); on * on];
    for py in 0..on {
        for px in 0..on {
            let (y, x) = (py * step, px * step);
            let mut acc = C::new(0.0, 0.0);
            for qy in 0..n {
                let hy = ((y + n - qy) % n) * n;
                let frow = &f[qy * n..(qy + 1) * n];
                for (qx, fv) in frow.iter().enumerate() {
                    acc += fv * h[hy + (x + n - qx) % n];
                }
            }
            out[py * on + px] = acc;
        }
    }
    out
}

fn modulus(v: &mut [C]) {
    v.iter_mut().for_each(|z| *z = C::new(z.norm(), 0.0));
}

/// Reference scattering by direct spatial convolution. Periodic boundary
/// only; intended for grids up to 64².
pub fn forward_oracle(
    img: &ImageGrid,
    fb: &FilterBank,
    cfg: &ScatteringConfig,
) -> Result<ScatteringCoeffs> {
    cfg.validate()?;
    if cfg.boundary != BoundaryMode::Periodic {
        return Err(invalid("the oracle only supports the periodic boundary"));
    }
    let n = img.height();
    if img.width() != n || !n.is_power_of_two() {
        return Err(invalid("the oracle needs a square power-of-two image"));
    }
    if fb.size() != n || fb.scales() != cfg.j || fb.angles() != cfg.l {
        return Err(invalid("filter bank does not match the image or config"));
    }
    let (j, l) = (cfg.j, cfg.l);
    let step = 1usize << j;
    let phi = spatial_filter(fb.phi(0));
    let psi: Vec<Vec<C>> = (0..j)
        .flat_map(|jj| (0..l).map(move |ll| (jj, ll)))
        .map(|(jj, ll)| spatial_filter(fb.psi(jj, ll, 0)))
        .collect();
    let paths = path_table(j, l);
    let shape = CoeffShape {
        j,
        l,
        input_size: n,
        boundary: cfg.boundary,
        spatial: n / step,
        input_channels: img.channels(),
    };
    let mut out = ScatteringCoeffs::zeros(shape);
    for c in 0..img.channels() {
        let x: Vec<C> = img.channel(c).iter().map(|&v| C::new(v, 0.0)).collect();
        let mut first: Vec<Vec<C>> = Vec::with_capacity(psi.len());
        for w in &psi {
            let mut u = circular_conv(&x, w, n, 1);
            modulus(&mut u);
            first.push(u);
        }
        for (p, path) in paths.iter().enumerate() {
            let signal = match *path {
                PathIndex::Order0 => x.clone(),
                PathIndex::Order1 { j1, l1 } => first[j1 as usize * l + l1].clone(),
                PathIndex::Order2 { j1, l1, j2, l2 } => {
                    let u = &first[j1 as usize * l + l1];
                    let mut v = circular_conv(u, &psi[j2 as usize * l + l2], n, 1);
                    modulus(&mut v);
                    v
                }
            };
            let s = circular_conv(&signal, &phi, n, step);
            for (d, z) in out.block_mut(c, p).iter_mut().zip(&s) {
                *d = z.re;
            }
        }
    }
    Ok(out)
}
