//! Square power-of-two 2-D DFT and the frequency-domain primitives used by
//! the cascade: pointwise products, periodization and the complex modulus.
//!
//! Forward transforms are unnormalized; inverse transforms carry `1/M²`.
//! With that convention `periodize(dft2(x), k)` is the spectrum of
//! `x[2^k p]`.

use std::marker::PhantomData;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, mismatch, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Spatial;
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frequency;

/// Square `size x size` complex grid, row-major. `D` tags the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2<T, D> {
    size: usize,
    data: Vec<Complex<T>>,
    _domain: PhantomData<D>,
}

pub type ComplexGrid<T> = Grid2<T, Spatial>;
pub type SpectrumGrid<T> = Grid2<T, Frequency>;

impl<T: Real, D> Grid2<T, D> {
    pub fn new(size: usize, data: Vec<Complex<T>>) -> Result<Self> {
        check_pow2(size)?;
        if data.len() != size * size {
            return Err(mismatch(size * size, data.len()));
        }
        Ok(Grid2 {
            size,
            data,
            _domain: PhantomData,
        })
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Self::new(size, vec![Complex::new(T::zero(), T::zero()); size * size])
    }

    pub fn from_real(size: usize, re: &[T]) -> Result<Self> {
        Self::new(
            size,
            re.iter().map(|&r| Complex::new(r, T::zero())).collect(),
        )
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> Complex<T> {
        self.data[y * self.size + x]
    }

    pub fn norm_sqr(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&mut self, a: T) {
        self.data.iter_mut().for_each(|z| *z = *z * a);
    }

    fn retag<E>(self) -> Grid2<T, E> {
        Grid2 {
            size: self.size,
            data: self.data,
            _domain: PhantomData,
        }
    }
}

pub(crate) fn check_pow2(size: usize) -> Result<()> {
    if size == 0 || !size.is_power_of_two() {
        return Err(invalid(format!("grid size {size} is not a power of two")));
    }
    Ok(())
}

/// Reusable buffers for one transform worker. Never share between threads.
pub struct FftScratch<T> {
    transpose: Vec<Complex<T>>,
    fft: Vec<Complex<T>>,
}

impl<T: Real> FftScratch<T> {
    pub fn new(max_size: usize, fft_scratch_len: usize) -> Self {
        let zero = Complex::new(T::zero(), T::zero());
        FftScratch {
            transpose: vec![zero; max_size * max_size],
            fft: vec![zero; fft_scratch_len],
        }
    }

    /// Complex slots held by this scratch arena.
    pub fn slots(&self) -> usize {
        self.transpose.len() + self.fft.len()
    }
}

/// Planned forward and inverse 2-D transforms of one size.
#[derive(Clone)]
pub struct Fft2<T> {
    size: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> Fft2<T> {
    pub fn new(size: usize, planner: &mut FftPlanner<T>) -> Result<Self> {
        check_pow2(size)?;
        Ok(Fft2 {
            size,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn scratch_len(&self) -> usize {
        self.fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len())
    }

    fn run(&self, fft: &dyn Fft<T>, data: &mut [Complex<T>], scratch: &mut FftScratch<T>) {
        let n = self.size;
        let data = &mut data[..n * n];
        let tmp = &mut scratch.transpose[..n * n];
        let work = &mut scratch.fft[..fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, work);
        transpose(data, tmp, n);
        fft.process_with_scratch(tmp, work);
        transpose(tmp, data, n);
    }

    /// Unnormalized forward transform of the first `size²` entries.
    pub fn forward(&self, data: &mut [Complex<T>], scratch: &mut FftScratch<T>) {
        self.run(self.fwd.as_ref(), data, scratch);
    }

    /// Inverse transform scaled by `1/size²`.
    pub fn inverse(&self, data: &mut [Complex<T>], scratch: &mut FftScratch<T>) {
        self.run(self.inv.as_ref(), data, scratch);
        let s = T::one() / T::of((self.size * self.size) as f64);
        data[..self.size * self.size]
            .iter_mut()
            .for_each(|z| *z = *z * s);
    }
}

/// Plans for the sizes `size >> r`, `r = 0..=levels`.
#[derive(Clone)]
pub struct FftBank<T> {
    plans: Vec<Fft2<T>>,
}

impl<T: Real> FftBank<T> {
    pub fn new(size: usize, levels: u32) -> Result<Self> {
        check_pow2(size)?;
        if size >> levels == 0 {
            return Err(invalid(format!("cannot subsample {size} by 2^{levels}")));
        }
        let mut planner = FftPlanner::new();
        let plans = (0..=levels)
            .map(|r| Fft2::new(size >> r, &mut planner))
            .collect::<Result<Vec<_>>>()?;
        Ok(FftBank { plans })
    }

    #[inline]
    pub fn at(&self, r: u32) -> &Fft2<T> {
        &self.plans[r as usize]
    }

    pub fn scratch(&self) -> FftScratch<T> {
        let max = self.plans[0].size;
        let len = self
            .plans
            .iter()
            .map(|p| p.scratch_len())
            .max()
            .unwrap_or(0);
        FftScratch::new(max, len)
    }
}

const BLOCK: usize = 16;

fn transpose<T: Copy>(src: &[T], dst: &mut [T], n: usize) {
    for by in (0..n).step_by(BLOCK) {
        for bx in (0..n).step_by(BLOCK) {
            for y in by..(by + BLOCK).min(n) {
                for x in bx..(bx + BLOCK).min(n) {
                    dst[x * n + y] = src[y * n + x];
                }
            }
        }
    }
}

/// Block-sums the `m x m` spectrum in `buf` down to `(m >> k)²` entries at the
/// front of `buf`, multiplying by `scale`. Safe in place: each output index is
/// at most the smallest input index it reads.
pub fn fold_in_place<T: Real>(buf: &mut [Complex<T>], m: usize, k: u32, scale: T) {
    if k == 0 {
        if scale != T::one() {
            buf[..m * m].iter_mut().for_each(|z| *z = *z * scale);
        }
        return;
    }
    let mo = m >> k;
    let reps = 1usize << k;
    for ky in 0..mo {
        for kx in 0..mo {
            let mut acc = Complex::new(T::zero(), T::zero());
            for a in 0..reps {
                let row = (ky + a * mo) * m;
                for b in 0..reps {
                    acc = acc + buf[row + kx + b * mo];
                }
            }
            buf[ky * mo + kx] = acc * scale;
        }
    }
}

/// `dst = scale * fold(filter ⊙ src)` where `filter` and `src` live on the
/// `m x m` grid and `dst` on `(m >> k)²`.
pub fn mul_fold<T: Real>(
    src: &[Complex<T>],
    filter: &[T],
    m: usize,
    k: u32,
    scale: T,
    dst: &mut [Complex<T>],
) {
    let mo = m >> k;
    let reps = 1usize << k;
    let dst = &mut dst[..mo * mo];
    if k == 0 {
        for ((d, s), f) in dst.iter_mut().zip(&src[..m * m]).zip(filter) {
            *d = *s * (*f * scale);
        }
        return;
    }
    dst.iter_mut()
        .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
    for a in 0..reps {
        for ky in 0..mo {
            let row = (ky + a * mo) * m;
            let drow = &mut dst[ky * mo..(ky + 1) * mo];
            for b in 0..reps {
                let base = row + b * mo;
                let s = &src[base..base + mo];
                let f = &filter[base..base + mo];
                for ((d, s), f) in drow.iter_mut().zip(s).zip(f) {
                    *d = *d + *s * *f;
                }
            }
        }
    }
    if scale != T::one() {
        dst.iter_mut().for_each(|z| *z = *z * scale);
    }
}

/// Adjoint of [`mul_fold`] accumulated into `acc`:
/// `acc[ω] += scale * filter[ω] * g[ω mod (m >> k)]`. Filters are real, so
/// conjugation is a no-op.
pub fn tile_mul_acc<T: Real>(
    g: &[Complex<T>],
    filter: &[T],
    m: usize,
    k: u32,
    scale: T,
    acc: &mut [Complex<T>],
) {
    let mo = m >> k;
    let reps = 1usize << k;
    for a in 0..reps {
        for ky in 0..mo {
            let grow = &g[ky * mo..(ky + 1) * mo];
            let row = (ky + a * mo) * m;
            for b in 0..reps {
                let base = row + b * mo;
                let out = &mut acc[base..base + mo];
                let f = &filter[base..base + mo];
                for ((o, gv), f) in out.iter_mut().zip(grow).zip(f) {
                    *o = *o + *gv * (*f * scale);
                }
            }
        }
    }
}

/// Replaces every entry by its modulus (imaginary part 0).
pub fn modulus_in_place<T: Real>(buf: &mut [Complex<T>]) {
    for z in buf {
        *z = Complex::new((z.re * z.re + z.im * z.im).sqrt(), T::zero());
    }
}

fn planned<T: Real>(size: usize) -> Result<(Fft2<T>, FftScratch<T>)> {
    let mut planner = FftPlanner::new();
    let fft = Fft2::new(size, &mut planner)?;
    let scratch = FftScratch::new(size, fft.scratch_len());
    Ok((fft, scratch))
}

/// Unnormalized forward 2-D DFT.
pub fn dft2<T: Real>(g: &ComplexGrid<T>) -> Result<SpectrumGrid<T>> {
    let (fft, mut scratch) = planned(g.size)?;
    let mut out = g.clone();
    fft.forward(&mut out.data, &mut scratch);
    Ok(out.retag())
}

/// Inverse 2-D DFT scaled by `1/M²`.
pub fn idft2<T: Real>(s: &SpectrumGrid<T>) -> Result<ComplexGrid<T>> {
    let (fft, mut scratch) = planned(s.size)?;
    let mut out = s.clone();
    fft.inverse(&mut out.data, &mut scratch);
    Ok(out.retag())
}

/// `out(ω) = 2^{-2k} Σ_blocks s(ω + block)`: the spectrum of the `2^k`
/// subsampled signal.
pub fn periodize<T: Real>(s: &SpectrumGrid<T>, k: u32) -> Result<SpectrumGrid<T>> {
    let reps = 1usize.checked_shl(k).unwrap_or(0);
    if reps == 0 || reps > s.size || !s.size.is_multiple_of(reps) {
        return Err(invalid(format!(
            "2^{k} does not divide grid size {}",
            s.size
        )));
    }
    let mut data = s.data.clone();
    let scale = T::one() / T::of((reps * reps) as f64);
    fold_in_place(&mut data, s.size, k, scale);
    data.truncate((s.size / reps) * (s.size / reps));
    SpectrumGrid::new(s.size / reps, data)
}

/// Adjoint of [`periodize`]: tiles `g` over the `4^k` blocks, scaled by
/// `2^{-2k}`.
pub fn periodize_vjp<T: Real>(g: &SpectrumGrid<T>, k: u32) -> Result<SpectrumGrid<T>> {
    let reps = 1usize
        .checked_shl(k)
        .ok_or_else(|| invalid("scale too large"))?;
    let m = g.size * reps;
    let mut out = vec![Complex::new(T::zero(), T::zero()); m * m];
    let ones = vec![T::one(); m * m];
    let scale = T::one() / T::of((reps * reps) as f64);
    tile_mul_acc(&g.data, &ones, m, k, scale, &mut out);
    SpectrumGrid::new(m, out)
}

pub fn pointwise_mul<T: Real>(a: &SpectrumGrid<T>, b: &SpectrumGrid<T>) -> Result<SpectrumGrid<T>> {
    if a.size != b.size {
        return Err(mismatch(
            format!("{0}x{0}", a.size),
            format!("{0}x{0}", b.size),
        ));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    SpectrumGrid::new(a.size, data)
}

pub fn modulus<T: Real>(g: &ComplexGrid<T>) -> ComplexGrid<T> {
    let mut out = g.clone();
    modulus_in_place(&mut out.data);
    out
}
