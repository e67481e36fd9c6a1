//! Reverse-mode derivative of the scattering transform.
//!
//! The tape keeps only the input spectrum of each channel. Backward replays
//! every first- and second-order branch from it, so the memory held between
//! the two passes is one `M²` grid per input channel.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{invalid, mismatch, Result};
use crate::filterbank::FilterBank;
use crate::fourier::{mul_fold, tile_mul_acc, ComplexGrid, FftScratch};
use crate::grid::{pad_adjoint, ColorSpace, ImageGrid, Precision};
use crate::real::Real;
use crate::scattering::{
    inv_pow4, CoeffShape, Cotangent, Scattering, ScatteringCoeffs, ScatteringConfig, Transform,
};

pub use crate::fourier::periodize_vjp;

/// `g · z / max(|z|, ε)` elementwise: the pullback of `|·|` at `z`.
pub fn modulus_vjp<T: Real>(z: &ComplexGrid<T>, g: &[T]) -> Result<ComplexGrid<T>> {
    if g.len() != z.data().len() {
        return Err(mismatch(z.data().len(), g.len()));
    }
    let data = z
        .data()
        .iter()
        .zip(g)
        .map(|(&z, &g)| pull_modulus(z, g))
        .collect();
    ComplexGrid::new(z.size(), data)
}

#[inline]
fn pull_modulus<T: Real>(z: Complex<T>, g: T) -> Complex<T> {
    let r = (z.re * z.re + z.im * z.im).sqrt().max(T::MOD_EPS);
    z * (g / r)
}

/// Buffers of one backward worker.
pub struct BackWorkspace<T> {
    xbar: Vec<Complex<T>>,
    z1: Vec<Complex<T>>,
    u1: Vec<Complex<T>>,
    u1bar: Vec<Complex<T>>,
    z2: Vec<Complex<T>>,
    a2: Vec<Complex<T>>,
    g: Vec<Complex<T>>,
    fft: FftScratch<T>,
}

impl<T: Real> BackWorkspace<T> {
    pub fn slots(&self) -> usize {
        [
            &self.xbar,
            &self.z1,
            &self.u1,
            &self.u1bar,
            &self.z2,
            &self.a2,
            &self.g,
        ]
        .iter()
        .map(|v| v.len())
        .sum::<usize>()
            + self.fft.slots()
    }
}

fn zeros<T: Real>(n: usize) -> Vec<Complex<T>> {
    vec![Complex::new(T::zero(), T::zero()); n]
}

impl<T: Real> Scattering<T> {
    pub fn back_workspace(&self) -> BackWorkspace<T> {
        let m = self.size;
        let fresh = self.workspace();
        let second = fresh.u2.len();
        let sj = self.full_spatial();
        BackWorkspace {
            xbar: zeros(m * m),
            z1: zeros(m * m),
            u1: zeros(m * m),
            u1bar: zeros(m * m),
            z2: zeros(second),
            a2: zeros(second),
            g: zeros(sj * sj),
            fft: fresh.fft,
        }
    }

    /// `bw.g ← FFT(g) / (M >> J)²`, the pullback of `Re ∘ iFFT` at the output
    /// resolution.
    fn cotangent_spectrum(&self, g: &[f64], bw: &mut BackWorkspace<T>) {
        let j = self.cfg.j;
        for (z, &v) in bw.g.iter_mut().zip(g) {
            *z = Complex::new(T::of(v), T::zero());
        }
        self.ffts.at(j).forward(&mut bw.g, &mut bw.fft);
        let s = T::one() / T::of(bw.g.len() as f64);
        bw.g.iter_mut().for_each(|z| *z = *z * s);
    }

    /// Pullback through `FFT ∘ |·| ∘ iFFT` on the `(M >> r)²` grid: replaces
    /// the cotangent `buf` of the post-modulus spectrum by that of the
    /// pre-modulus spectrum whose inverse transform is `z`.
    fn pull_branch(
        &self,
        r: u32,
        z: &[Complex<T>],
        buf: &mut [Complex<T>],
        scratch: &mut FftScratch<T>,
    ) {
        let fft = self.ffts.at(r);
        let n = fft.size() * fft.size();
        // the unscaled inverse followed by the scaled forward pullback
        // cancel to the normalized inverse
        fft.inverse(buf, scratch);
        for (b, &z) in buf[..n].iter_mut().zip(&z[..n]) {
            *b = pull_modulus(z, b.re);
        }
        fft.forward(buf, scratch);
    }

    /// Gradient on the padded grid of `⟨S(x), ct⟩` for one channel, given its
    /// input spectrum and the expanded cotangent laid out `[path][y][x]`.
    pub(crate) fn channel_backward(
        &self,
        spec: &[Complex<T>],
        ct: &[f64],
        bw: &mut BackWorkspace<T>,
        out: &mut [f64],
    ) {
        let (m, j, l) = (self.size, self.cfg.j, self.cfg.l);
        let s2 = self.full_spatial() * self.full_spatial();
        let mut blocks = ct.chunks_exact(s2);
        let zero = Complex::new(T::zero(), T::zero());

        bw.xbar.fill(zero);
        self.cotangent_spectrum(blocks.next().expect("order-0 block"), bw);
        tile_mul_acc(&bw.g, self.filters.phi(0), m, j, inv_pow4(j), &mut bw.xbar);

        let first: Vec<&[f64]> = blocks.by_ref().take(j as usize * l).collect();
        let mut second = blocks;
        for j1 in 0..j {
            let r1 = self.res(j1);
            let m1 = m >> r1;
            let fft1 = self.ffts.at(r1);
            for l1 in 0..l {
                let psi1 = self.filters.psi(j1, l1, 0);
                mul_fold(spec, psi1, m, r1, inv_pow4(r1), &mut bw.z1);
                fft1.inverse(&mut bw.z1, &mut bw.fft);
                bw.u1[..m1 * m1].copy_from_slice(&bw.z1[..m1 * m1]);
                crate::fourier::modulus_in_place(&mut bw.u1[..m1 * m1]);
                fft1.forward(&mut bw.u1, &mut bw.fft);

                bw.u1bar[..m1 * m1].fill(zero);
                self.cotangent_spectrum(first[j1 as usize * l + l1], bw);
                tile_mul_acc(
                    &bw.g,
                    self.filters.phi(r1),
                    m1,
                    j - r1,
                    inv_pow4(j - r1),
                    &mut bw.u1bar,
                );

                for j2 in j1 + 1..j {
                    let r2 = self.res(j2);
                    let m2 = m >> r2;
                    let fft2 = self.ffts.at(r2);
                    for l2 in 0..l {
                        let psi2 = self.filters.psi(j2, l2, r1);
                        mul_fold(&bw.u1, psi2, m1, r2 - r1, inv_pow4(r2 - r1), &mut bw.z2);
                        fft2.inverse(&mut bw.z2, &mut bw.fft);

                        self.cotangent_spectrum(second.next().expect("order-2 block"), bw);
                        bw.a2[..m2 * m2].fill(zero);
                        tile_mul_acc(
                            &bw.g,
                            self.filters.phi(r2),
                            m2,
                            j - r2,
                            inv_pow4(j - r2),
                            &mut bw.a2,
                        );
                        self.pull_branch(r2, &bw.z2, &mut bw.a2, &mut bw.fft);
                        tile_mul_acc(&bw.a2, psi2, m1, r2 - r1, inv_pow4(r2 - r1), &mut bw.u1bar);
                    }
                }

                self.pull_branch(r1, &bw.z1, &mut bw.u1bar, &mut bw.fft);
                tile_mul_acc(&bw.u1bar, psi1, m, r1, inv_pow4(r1), &mut bw.xbar);
            }
        }

        self.ffts.at(0).inverse(&mut bw.xbar, &mut bw.fft);
        let s = T::of((m * m) as f64);
        for (o, z) in out.iter_mut().zip(&bw.xbar) {
            *o = (z.re * s).f64();
        }
    }

    fn backward_channels(
        &self,
        spectra: &[Vec<Complex<T>>],
        ct: &ScatteringCoeffs,
    ) -> Vec<Vec<f64>> {
        let m = self.size;
        spectra
            .par_iter()
            .enumerate()
            .map(|(c, spec)| {
                let mut bw = self.back_workspace();
                let expanded = self.expand(ct, c);
                let mut out = vec![0.0; m * m];
                self.channel_backward(spec, &expanded, &mut bw, &mut out);
                out
            })
            .collect()
    }
}

enum Stored {
    Single(Arc<Scattering<f32>>, Vec<Vec<Complex<f32>>>),
    Double(Arc<Scattering<f64>>, Vec<Vec<Complex<f64>>>),
}

/// What [`backward`] needs from one forward pass.
pub struct Tape {
    stored: Stored,
    shape: CoeffShape,
    color_space: ColorSpace,
    precision: Precision,
    forward_peak: usize,
}

impl Tape {
    pub fn shape(&self) -> CoeffShape {
        self.shape
    }

    /// Complex slots retained between forward and backward.
    pub fn stored_slots(&self) -> usize {
        match &self.stored {
            Stored::Single(_, s) => s.iter().map(Vec::len).sum(),
            Stored::Double(_, s) => s.iter().map(Vec::len).sum(),
        }
    }

    /// Peak arena of the tapeless forward pass that produced this tape.
    pub fn forward_peak(&self) -> usize {
        self.forward_peak
    }

    /// Forward arena plus retained storage.
    pub fn peak_slots(&self) -> usize {
        self.forward_peak + self.stored_slots()
    }

    /// Arena of one backward worker.
    pub fn backward_slots(&self) -> usize {
        match &self.stored {
            Stored::Single(e, _) => e.back_workspace().slots(),
            Stored::Double(e, _) => e.back_workspace().slots(),
        }
    }

    /// Bitwise comparison of the retained spectra.
    pub fn same_as(&self, other: &Tape) -> bool {
        fn bits<T: Real>(a: &[Vec<Complex<T>>], b: &[Vec<Complex<T>>]) -> bool {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.len() == y.len()
                        && x.iter().zip(y).all(|(p, q)| {
                            p.re.f64().to_bits() == q.re.f64().to_bits()
                                && p.im.f64().to_bits() == q.im.f64().to_bits()
                        })
                })
        }
        self.shape == other.shape
            && match (&self.stored, &other.stored) {
                (Stored::Single(_, a), Stored::Single(_, b)) => bits(a, b),
                (Stored::Double(_, a), Stored::Double(_, b)) => bits(a, b),
                _ => false,
            }
    }
}

impl Transform {
    /// Forward pass that also returns the tape for [`backward`].
    pub fn forward_with_tape(&self, img: &ImageGrid) -> Result<(ScatteringCoeffs, Tape)> {
        fn run<T: Real>(
            e: &Arc<Scattering<T>>,
            img: &ImageGrid,
        ) -> Result<(ScatteringCoeffs, Vec<Vec<Complex<T>>>, usize)> {
            let run = e.run_channels(img, true)?;
            Ok((e.assemble(run.blocks), run.spectra, run.peak))
        }
        let (coeffs, stored, peak) = match self {
            Transform::Single(e) => {
                let (c, s, p) = run(e, img)?;
                (c, Stored::Single(e.clone(), s), p)
            }
            Transform::Double(e) => {
                let (c, s, p) = run(e, img)?;
                (c, Stored::Double(e.clone(), s), p)
            }
        };
        let tape = Tape {
            stored,
            shape: coeffs.shape(),
            color_space: img.color_space(),
            precision: img.precision(),
            forward_peak: peak,
        };
        Ok((coeffs, tape))
    }

    /// `(|S(y) − target|², ∇_y)`.
    pub fn loss_grad(&self, target: &ScatteringCoeffs, y: &ImageGrid) -> Result<(f64, ImageGrid)> {
        let (s, tape) = self.forward_with_tape(y)?;
        target.check_shape(&s)?;
        let diff = s.sub(target)?;
        let loss = diff.data().iter().map(|v| v * v).sum();
        let grad = backward(&tape, &diff.scaled(2.0))?;
        Ok((loss, grad))
    }
}

/// Scatters `img` and records what [`backward`] needs.
pub fn forward_with_tape(
    img: &ImageGrid,
    fb: &FilterBank,
    cfg: &ScatteringConfig,
) -> Result<(ScatteringCoeffs, Tape)> {
    Transform::new(fb, cfg, img.height())?.forward_with_tape(img)
}

/// `∂⟨S(x), ct⟩/∂x` at the image recorded by `tape`, on the original
/// (unpadded) pixel grid.
pub fn backward(tape: &Tape, ct: &Cotangent) -> Result<ImageGrid> {
    if ct.shape() != tape.shape {
        return Err(mismatch(
            format!("{:?}", tape.shape),
            format!("{:?}", ct.shape()),
        ));
    }
    if ct.data().iter().any(|v| !v.is_finite()) {
        return Err(invalid("cotangent contains non-finite values"));
    }
    let (channels, plan, boundary) = match &tape.stored {
        Stored::Single(e, s) => (e.backward_channels(s, ct), *e.plan(), e.config().boundary),
        Stored::Double(e, s) => (e.backward_channels(s, ct), *e.plan(), e.config().boundary),
    };
    let data: Vec<f64> = channels.into_iter().flatten().collect();
    let padded = ImageGrid::new(
        plan.padded,
        plan.padded,
        tape.shape.input_channels,
        tape.color_space,
        data,
    )?
    .with_precision(tape.precision);
    if plan.is_identity() {
        Ok(padded)
    } else {
        pad_adjoint(&padded, &plan, boundary)
    }
}

/// `loss = |S(y) − target|₂²` and its gradient with respect to `y`.
pub fn recon_loss_grad(
    target: &ScatteringCoeffs,
    y: &ImageGrid,
    fb: &FilterBank,
    cfg: &ScatteringConfig,
) -> Result<(f64, ImageGrid)> {
    Transform::new(fb, cfg, y.height())?.loss_grad(target, y)
}
