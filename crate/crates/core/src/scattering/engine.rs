//! FFT-domain cascade with an infix traversal of the path tree.
//!
//! Each worker owns one [`Workspace`]: the input spectrum `Ũ₀⁰` (`M²`), the
//! first-order branch `Ũ¹` (`M²`, used at `(M/2^j₁)²`), the second-order
//! branch `Ũ²` (at most `(M/2)²` when intermediates are subsampled), a small
//! output buffer and the transform scratch. Nothing else is allocated while
//! a channel is processed, so the arena size is the peak live slot count.

use std::borrow::Cow;
use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{invalid, mismatch, Result};
use crate::filterbank::{FilterBank, RealFilters};
use crate::fourier::{modulus_in_place, mul_fold, FftBank, FftScratch};
use crate::grid::{pad_plan, pad_to_plan, BoundaryMode, ImageGrid, PadPlan, Precision};
use crate::real::Real;
use crate::scattering::coeffs::{CoeffShape, ScatteringCoeffs};
use crate::scattering::paths::path_count;
use crate::scattering::{CascadeMode, ScatteringConfig};

/// Per-worker buffers for one channel of the cascade.
pub struct Workspace<T> {
    pub(crate) u0: Vec<Complex<T>>,
    pub(crate) u1: Vec<Complex<T>>,
    pub(crate) u2: Vec<Complex<T>>,
    pub(crate) out: Vec<Complex<T>>,
    pub(crate) fft: FftScratch<T>,
}

impl<T: Real> Workspace<T> {
    /// Complex slots held by the arena.
    pub fn slots(&self) -> usize {
        self.u0.len() + self.u1.len() + self.u2.len() + self.out.len() + self.fft.slots()
    }
}

fn zeros<T: Real>(n: usize) -> Vec<Complex<T>> {
    vec![Complex::new(T::zero(), T::zero()); n]
}

#[inline]
pub(crate) fn inv_pow4<T: Real>(k: u32) -> T {
    T::one() / T::of((1u64 << (2 * k)) as f64)
}

pub(crate) struct ChannelRun<T> {
    pub blocks: Vec<Vec<f64>>,
    pub spectra: Vec<Vec<Complex<T>>>,
    pub peak: usize,
}

/// Forward transform bound to one filter bank, configuration and input size.
pub struct Scattering<T: Real> {
    pub(crate) cfg: ScatteringConfig,
    pub(crate) plan: PadPlan,
    pub(crate) size: usize,
    pub(crate) filters: RealFilters<T>,
    pub(crate) ffts: FftBank<T>,
}

/// Padded grid size used for an `n x n` input under `cfg`.
pub fn plan_for(n: usize, cfg: &ScatteringConfig) -> Result<PadPlan> {
    match cfg.boundary {
        BoundaryMode::Reflect => pad_plan(n, cfg.j),
        BoundaryMode::Periodic => {
            if !n.is_power_of_two() {
                return Err(invalid(format!(
                    "periodic boundary needs a power-of-two size, got {n}; use reflect padding"
                )));
            }
            if n < 1 << cfg.j {
                return Err(invalid(format!("input size {n} is smaller than 2^J")));
            }
            Ok(PadPlan::identity(n))
        }
    }
}

impl<T: Real> Scattering<T> {
    pub fn new(fb: &FilterBank, cfg: &ScatteringConfig, input_size: usize) -> Result<Self> {
        cfg.validate()?;
        let plan = plan_for(input_size, cfg)?;
        if fb.size() != plan.padded || fb.scales() != cfg.j || fb.angles() != cfg.l {
            return Err(invalid(format!(
                "filter bank (M={}, J={}, L={}) does not match config (M={}, J={}, L={})",
                fb.size(),
                fb.scales(),
                fb.angles(),
                plan.padded,
                cfg.j,
                cfg.l
            )));
        }
        if fb.params() != &cfg.params {
            return Err(invalid(
                "filter bank was built with different Morlet parameters",
            ));
        }
        Ok(Scattering {
            cfg: *cfg,
            plan,
            size: plan.padded,
            filters: fb.real_filters(),
            ffts: FftBank::new(plan.padded, cfg.j)?,
        })
    }

    pub fn config(&self) -> &ScatteringConfig {
        &self.cfg
    }

    pub fn plan(&self) -> &PadPlan {
        &self.plan
    }

    /// Resolution (log2 subsampling) at which scale-`j` intermediates live.
    #[inline]
    pub(crate) fn res(&self, j: u32) -> u32 {
        match self.cfg.mode {
            CascadeMode::Subsampled => j,
            CascadeMode::FullResolution => 0,
        }
    }

    pub(crate) fn full_spatial(&self) -> usize {
        self.size >> self.cfg.j
    }

    pub fn output_shape(&self, channels: usize) -> CoeffShape {
        let (_, count) = self.plan.coeff_window(self.cfg.j);
        CoeffShape {
            j: self.cfg.j,
            l: self.cfg.l,
            input_size: self.plan.input,
            boundary: self.cfg.boundary,
            spatial: count,
            input_channels: channels,
        }
    }

    pub fn workspace(&self) -> Workspace<T> {
        let m = self.size;
        let second = match self.cfg.mode {
            _ if self.cfg.j < 2 => 0,
            CascadeMode::Subsampled => (m >> 1) * (m >> 1),
            CascadeMode::FullResolution => m * m,
        };
        let sj = self.full_spatial();
        Workspace {
            u0: zeros(m * m),
            u1: zeros(m * m),
            u2: zeros(second),
            out: zeros(sj * sj),
            fft: self.ffts.scratch(),
        }
    }

    pub(crate) fn prepare<'a>(&self, img: &'a ImageGrid) -> Result<Cow<'a, ImageGrid>> {
        if img.height() != img.width() {
            return Err(invalid(format!(
                "scattering needs a square image, got {}x{}",
                img.height(),
                img.width()
            )));
        }
        if img.height() != self.plan.input {
            return Err(mismatch(
                format!("{0}x{0} image", self.plan.input),
                format!("{0}x{0} image", img.height()),
            ));
        }
        if self.plan.is_identity() {
            Ok(Cow::Borrowed(img))
        } else {
            Ok(Cow::Owned(pad_to_plan(img, &self.plan, self.cfg.boundary)?))
        }
    }

    /// Writes `Re(iFFT(out))` at the output resolution into `dst`.
    fn emit(&self, ws: &mut Workspace<T>, dst: &mut [f64]) {
        let j = self.cfg.j;
        self.ffts.at(j).inverse(&mut ws.out, &mut ws.fft);
        for (d, z) in dst.iter_mut().zip(&ws.out) {
            *d = z.re.f64();
        }
    }

    /// Loads a real channel into `ws.u0` and transforms it.
    pub(crate) fn load_spectrum(&self, x: &[f64], ws: &mut Workspace<T>) {
        for (z, &v) in ws.u0.iter_mut().zip(x) {
            *z = Complex::new(T::of(v), T::zero());
        }
        self.ffts.at(0).forward(&mut ws.u0, &mut ws.fft);
    }

    /// `ws.u1 ← FFT(|iFFT(fold(ψ̂_{j1,l1} ⊙ Ũ₀⁰))|)` on the grid `M >> res(j1)`.
    pub(crate) fn first_order_branch(&self, ws: &mut Workspace<T>, j1: u32, l1: usize) {
        let r1 = self.res(j1);
        mul_fold(
            &ws.u0,
            self.filters.psi(j1, l1, 0),
            self.size,
            r1,
            inv_pow4(r1),
            &mut ws.u1,
        );
        let fft = self.ffts.at(r1);
        fft.inverse(&mut ws.u1, &mut ws.fft);
        let m1 = self.size >> r1;
        modulus_in_place(&mut ws.u1[..m1 * m1]);
        fft.forward(&mut ws.u1, &mut ws.fft);
    }

    /// `ws.u2 ← FFT(|iFFT(fold(ψ̂_{j2,l2} ⊙ Ũ¹))|)` on the grid `M >> res(j2)`.
    pub(crate) fn second_order_branch(&self, ws: &mut Workspace<T>, j1: u32, j2: u32, l2: usize) {
        let (r1, r2) = (self.res(j1), self.res(j2));
        let m1 = self.size >> r1;
        mul_fold(
            &ws.u1,
            self.filters.psi(j2, l2, r1),
            m1,
            r2 - r1,
            inv_pow4(r2 - r1),
            &mut ws.u2,
        );
        let fft = self.ffts.at(r2);
        fft.inverse(&mut ws.u2, &mut ws.fft);
        let m2 = self.size >> r2;
        modulus_in_place(&mut ws.u2[..m2 * m2]);
        fft.forward(&mut ws.u2, &mut ws.fft);
    }

    /// Scatters one real channel of the padded image into `dst`, laid out
    /// `[path][y][x]` on the full `(M >> J)²` output grid.
    pub(crate) fn channel_forward(&self, x: &[f64], ws: &mut Workspace<T>, dst: &mut [f64]) {
        let (m, j, l) = (self.size, self.cfg.j, self.cfg.l);
        let s2 = self.full_spatial() * self.full_spatial();
        let mut blocks = dst.chunks_exact_mut(s2);

        self.load_spectrum(x, ws);
        mul_fold(&ws.u0, self.filters.phi(0), m, j, inv_pow4(j), &mut ws.out);
        self.emit(ws, blocks.next().expect("order-0 block"));

        // order-1 blocks come first in the table, order-2 after all of them
        let mut first: Vec<&mut [f64]> = blocks.by_ref().take(j as usize * l).collect();
        let mut second = blocks;
        for j1 in 0..j {
            let r1 = self.res(j1);
            let m1 = m >> r1;
            for l1 in 0..l {
                self.first_order_branch(ws, j1, l1);
                fold_phi(&ws.u1, self.filters.phi(r1), m1, j - r1, &mut ws.out);
                self.emit(ws, first[(j1 as usize) * l + l1]);
                for j2 in j1 + 1..j {
                    let r2 = self.res(j2);
                    for l2 in 0..l {
                        self.second_order_branch(ws, j1, j2, l2);
                        fold_phi(&ws.u2, self.filters.phi(r2), m >> r2, j - r2, &mut ws.out);
                        self.emit(ws, second.next().expect("order-2 block"));
                    }
                }
            }
        }
    }

    /// Runs the cascade on every channel in parallel; returns the full
    /// (uncropped) per-channel blocks, the input spectra when `keep` is set,
    /// and the peak arena size.
    pub(crate) fn run_channels(&self, img: &ImageGrid, keep: bool) -> Result<ChannelRun<T>> {
        let padded = self.prepare(img)?;
        let per = path_count(self.cfg.j, self.cfg.l) * self.full_spatial() * self.full_spatial();
        let results: Vec<(Vec<f64>, Vec<Complex<T>>, usize)> = (0..padded.channels())
            .into_par_iter()
            .map(|c| {
                let mut ws = self.workspace();
                let mut out = vec![0.0; per];
                self.channel_forward(padded.channel(c), &mut ws, &mut out);
                let slots = ws.slots();
                let spectrum = if keep {
                    std::mem::take(&mut ws.u0)
                } else {
                    Vec::new()
                };
                (out, spectrum, slots)
            })
            .collect();
        let mut run = ChannelRun {
            blocks: Vec::with_capacity(results.len()),
            spectra: Vec::with_capacity(results.len()),
            peak: 0,
        };
        for (out, spectrum, slots) in results {
            run.blocks.push(out);
            if keep {
                run.spectra.push(spectrum);
            }
            run.peak = run.peak.max(slots);
        }
        Ok(run)
    }

    pub(crate) fn assemble(&self, channels: Vec<Vec<f64>>) -> ScatteringCoeffs {
        let shape = self.output_shape(channels.len());
        let full = self.full_spatial();
        let (start, count) = self.plan.coeff_window(self.cfg.j);
        let mut data = Vec::with_capacity(shape.len());
        for block in channels {
            if count == full {
                data.extend(block);
                continue;
            }
            for b in block.chunks_exact(full * full) {
                for y in start..start + count {
                    data.extend_from_slice(&b[y * full + start..y * full + start + count]);
                }
            }
        }
        ScatteringCoeffs::new(shape, data).expect("layout")
    }

    /// Inverse of the crop in [`Self::assemble`]: zero-fills the cells that
    /// were discarded.
    pub(crate) fn expand(&self, ct: &ScatteringCoeffs, c: usize) -> Vec<f64> {
        let full = self.full_spatial();
        let (start, count) = self.plan.coeff_window(self.cfg.j);
        let paths = ct.paths().len();
        let mut out = vec![0.0; paths * full * full];
        for p in 0..paths {
            let src = ct.block(c, p);
            let dst = &mut out[p * full * full..(p + 1) * full * full];
            for y in 0..count {
                dst[(y + start) * full + start..(y + start) * full + start + count]
                    .copy_from_slice(&src[y * count..(y + 1) * count]);
            }
        }
        out
    }

    pub fn forward(&self, img: &ImageGrid) -> Result<ScatteringCoeffs> {
        Ok(self.forward_instrumented(img)?.0)
    }

    /// Forward pass that also reports the largest per-worker arena, in
    /// complex slots.
    pub fn forward_instrumented(&self, img: &ImageGrid) -> Result<(ScatteringCoeffs, usize)> {
        let run = self.run_channels(img, false)?;
        Ok((self.assemble(run.blocks), run.peak))
    }
}

/// `out ← 4^{-k} fold(φ̂ ⊙ src, k)`.
#[inline]
fn fold_phi<T: Real>(src: &[Complex<T>], phi: &[T], m: usize, k: u32, out: &mut [Complex<T>]) {
    mul_fold(src, phi, m, k, inv_pow4(k), out);
}

/// Precision-erased transform; cheap to clone.
#[derive(Clone)]
pub enum Transform {
    Single(Arc<Scattering<f32>>),
    Double(Arc<Scattering<f64>>),
}

macro_rules! dispatch {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            Transform::Single($s) => $body,
            Transform::Double($s) => $body,
        }
    };
}

impl Transform {
    pub fn new(fb: &FilterBank, cfg: &ScatteringConfig, input_size: usize) -> Result<Self> {
        Ok(match cfg.precision {
            Precision::Single => Transform::Single(Arc::new(Scattering::new(fb, cfg, input_size)?)),
            Precision::Double => Transform::Double(Arc::new(Scattering::new(fb, cfg, input_size)?)),
        })
    }

    /// Builds the filter bank as well.
    pub fn for_input(cfg: &ScatteringConfig, input_size: usize) -> Result<(Self, FilterBank)> {
        let plan = plan_for(input_size, cfg)?;
        let fb = FilterBank::build(plan.padded, cfg.j, cfg.l, cfg.params)?;
        Ok((Self::new(&fb, cfg, input_size)?, fb))
    }

    pub fn config(&self) -> &ScatteringConfig {
        dispatch!(self, s => s.config())
    }

    pub fn plan(&self) -> &PadPlan {
        dispatch!(self, s => s.plan())
    }

    pub fn output_shape(&self, channels: usize) -> CoeffShape {
        dispatch!(self, s => s.output_shape(channels))
    }

    pub fn forward(&self, img: &ImageGrid) -> Result<ScatteringCoeffs> {
        dispatch!(self, s => s.forward(img))
    }

    pub fn forward_instrumented(&self, img: &ImageGrid) -> Result<(ScatteringCoeffs, usize)> {
        dispatch!(self, s => s.forward_instrumented(img))
    }
}

/// Scatters `img` with the filters in `fb`.
pub fn forward(
    img: &ImageGrid,
    fb: &FilterBank,
    cfg: &ScatteringConfig,
) -> Result<ScatteringCoeffs> {
    Transform::new(fb, cfg, img.height())?.forward(img)
}

/// Scatters every image on a pool of `workers` threads. Output order and
/// values do not depend on `workers`.
pub fn forward_batch(
    imgs: &[ImageGrid],
    fb: &FilterBank,
    cfg: &ScatteringConfig,
    workers: usize,
) -> Result<Vec<ScatteringCoeffs>> {
    let Some(first) = imgs.first() else {
        return Ok(Vec::new());
    };
    if let Some(bad) = imgs.iter().find(|i| !i.same_shape(first)) {
        return Err(mismatch(first.shape_string(), bad.shape_string()));
    }
    let transform = Transform::new(fb, cfg, first.height())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| imgs.par_iter().map(|img| transform.forward(img)).collect())
}
