//! Energy of a weight operator per angular frequency, and sparsification in
//! that domain.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::classify::linear::LinearModel;
use crate::error::{invalid, mismatch, Result};
use crate::scattering::{path_table, CoeffShape, PathIndex};

type C = Complex<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularSpectrum {
    pub l: usize,
    /// Energy per frequency along `θ₁`, length `L`.
    pub omega1: Vec<f64>,
    /// Energy per `(ω_θ₁, ω_θ₂)`, row-major `L x L`.
    pub omega2: Vec<f64>,
    /// Squared norm of the analyzed order-1 block.
    pub energy1: f64,
    /// Squared norm of the analyzed order-2 block.
    pub energy2: f64,
}

/// Ratio of geometric to arithmetic mean; 1 for a flat spectrum.
pub fn spectral_flatness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let am = v.iter().sum::<f64>() / n;
    if am <= 0.0 {
        return 1.0;
    }
    let gm = (v.iter().map(|x| x.max(1e-300).ln()).sum::<f64>() / n).exp();
    gm / am
}

/// Unitary DFT of length `L` along angle indices.
struct AngleDft {
    l: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl AngleDft {
    fn new(l: usize) -> Self {
        let mut planner = FftPlanner::new();
        AngleDft {
            l,
            fwd: planner.plan_fft_forward(l),
            inv: planner.plan_fft_inverse(l),
            scale: 1.0 / (l as f64).sqrt(),
        }
    }

    fn run(&self, fft: &dyn Fft<f64>, buf: &mut [C]) {
        fft.process(buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
    }

    fn forward(&self, buf: &mut [C]) {
        self.run(self.fwd.as_ref(), buf);
    }

    fn inverse(&self, buf: &mut [C]) {
        self.run(self.inv.as_ref(), buf);
    }

    /// 2-D transform of a row-major `L x L` block.
    fn forward2(&self, buf: &mut [C]) {
        self.apply2(buf, true);
    }

    fn inverse2(&self, buf: &mut [C]) {
        self.apply2(buf, false);
    }

    fn apply2(&self, buf: &mut [C], forward: bool) {
        let l = self.l;
        let go = |b: &mut [C]| {
            if forward {
                self.forward(b)
            } else {
                self.inverse(b)
            }
        };
        for row in buf.chunks_exact_mut(l) {
            go(row);
        }
        let mut col = vec![C::new(0.0, 0.0); l];
        for x in 0..l {
            for y in 0..l {
                col[y] = buf[y * l + x];
            }
            go(&mut col);
            for y in 0..l {
                buf[y * l + x] = col[y];
            }
        }
    }
}

/// Index of every order-1 sequence `(c, j1, pos)` and order-2 block
/// `(c, j1, j2, pos)` inside one class row of the weights.
struct Layout {
    l: usize,
    /// Feature offsets of `θ₁ = 0..L` for each order-1 sequence.
    seq1: Vec<Vec<usize>>,
    /// Feature offsets of `(θ₁, θ₂)` row-major for each order-2 block.
    seq2: Vec<Vec<usize>>,
}

impl Layout {
    fn new(shape: &CoeffShape) -> Self {
        let (j, l) = (shape.j, shape.l);
        let table = path_table(j, l);
        let index: HashMap<PathIndex, usize> =
            table.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let s2 = shape.spatial * shape.spatial;
        let np = table.len();
        let at = |c: usize, p: PathIndex, pos: usize| (c * np + index[&p]) * s2 + pos;
        let mut seq1 = Vec::new();
        let mut seq2 = Vec::new();
        for c in 0..shape.input_channels {
            for j1 in 0..j {
                for pos in 0..s2 {
                    seq1.push(
                        (0..l)
                            .map(|l1| at(c, PathIndex::Order1 { j1, l1 }, pos))
                            .collect(),
                    );
                }
                for j2 in j1 + 1..j {
                    for pos in 0..s2 {
                        seq2.push(
                            (0..l * l)
                                .map(|t| {
                                    at(
                                        c,
                                        PathIndex::Order2 {
                                            j1,
                                            l1: t / l,
                                            j2,
                                            l2: t % l,
                                        },
                                        pos,
                                    )
                                })
                                .collect(),
                        );
                    }
                }
            }
        }
        Layout { l, seq1, seq2 }
    }

    fn members(&self) -> impl Iterator<Item = usize> + '_ {
        self.seq1.iter().chain(&self.seq2).flatten().copied()
    }
}

fn model_shape(model: &LinearModel) -> Result<CoeffShape> {
    model
        .meta()
        .layout
        .coeff_shape()
        .ok_or_else(|| invalid("angular analysis needs a model over scattering coefficients"))
}

/// `Ω₁` and `Ω₂` of a trained model, each class row scaled to unit norm
/// over its order-1 and order-2 weights first.
pub fn angular_spectrum(model: &LinearModel) -> Result<AngularSpectrum> {
    angular_spectrum_of(model.weights(), model.classes(), &model_shape(model)?)
}

/// `Ω₁` and `Ω₂` of a `[class][input_channel][path][y][x]` weight tensor.
pub fn angular_spectrum_of(
    weights: &[f64],
    classes: usize,
    shape: &CoeffShape,
) -> Result<AngularSpectrum> {
    let d = shape.len();
    if weights.len() != classes * d {
        return Err(mismatch(classes * d, weights.len()));
    }
    let layout = Layout::new(shape);
    let l = layout.l;
    let dft = AngleDft::new(l);
    let mut out = AngularSpectrum {
        l,
        omega1: vec![0.0; l],
        omega2: vec![0.0; l * l],
        energy1: 0.0,
        energy2: 0.0,
    };
    let mut buf = vec![C::new(0.0, 0.0); l * l];
    for k in 0..classes {
        let row = &weights[k * d..(k + 1) * d];
        let norm = layout
            .members()
            .map(|i| row[i] * row[i])
            .sum::<f64>()
            .sqrt();
        let s = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        for seq in &layout.seq1 {
            let b = &mut buf[..l];
            for (z, &i) in b.iter_mut().zip(seq) {
                *z = C::new(row[i] * s, 0.0);
                out.energy1 += z.norm_sqr();
            }
            dft.forward(b);
            for (o, z) in out.omega1.iter_mut().zip(b.iter()) {
                *o += z.norm_sqr();
            }
        }
        for seq in &layout.seq2 {
            for (z, &i) in buf.iter_mut().zip(seq) {
                *z = C::new(row[i] * s, 0.0);
                out.energy2 += z.norm_sqr();
            }
            dft.forward2(&mut buf);
            for (o, z) in out.omega2.iter_mut().zip(&buf) {
                *o += z.norm_sqr();
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsifyStats {
    pub total: usize,
    pub kept: usize,
    /// Fraction of angular coefficients set to zero.
    pub zero_fraction: f64,
    /// Share of the angular-domain energy that survives.
    pub energy_retained: f64,
}

/// Keeps the largest `keep_fraction` of the angular-frequency coefficients
/// of the order-1 and order-2 weights (one global threshold) and maps back
/// to real weights. Conjugate pairs are kept or dropped together so the
/// result stays real.
pub fn sparsify_angular(
    model: &LinearModel,
    keep_fraction: f64,
) -> Result<(LinearModel, SparsifyStats)> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(invalid(format!(
            "keep fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    let shape = model_shape(model)?;
    let layout = Layout::new(&shape);
    let l = layout.l;
    let dft = AngleDft::new(l);
    let d = shape.len();
    let classes = model.classes();

    // angular coefficients: per class, every order-1 sequence then every
    // order-2 block
    let per_class = layout.seq1.len() * l + layout.seq2.len() * l * l;
    let mut coef = vec![C::new(0.0, 0.0); classes * per_class];
    for k in 0..classes {
        let row = &model.weights()[k * d..(k + 1) * d];
        let mut at = k * per_class;
        for seq in &layout.seq1 {
            let b = &mut coef[at..at + l];
            for (z, &i) in b.iter_mut().zip(seq) {
                *z = C::new(row[i], 0.0);
            }
            dft.forward(b);
            at += l;
        }
        for seq in &layout.seq2 {
            let b = &mut coef[at..at + l * l];
            for (z, &i) in b.iter_mut().zip(seq) {
                *z = C::new(row[i], 0.0);
            }
            dft.forward2(b);
            at += l * l;
        }
    }

    // conjugate-pair groups: (first index, size, magnitude)
    let split = layout.seq1.len() * l;
    let mut groups: Vec<(usize, usize, f64)> = Vec::new();
    for k in 0..classes {
        let base = k * per_class;
        for s in 0..layout.seq1.len() {
            let o = base + s * l;
            for w in 0..l {
                let m = (l - w) % l;
                if m >= w {
                    groups.push((o + w, if m == w { 1 } else { 2 }, coef[o + w].norm()));
                }
            }
        }
        for s in 0..layout.seq2.len() {
            let o = base + split + s * l * l;
            for w in 0..l * l {
                let (a, b) = (w / l, w % l);
                let m = ((l - a) % l) * l + (l - b) % l;
                if m >= w {
                    groups.push((o + w, if m == w { 1 } else { 2 }, coef[o + w].norm()));
                }
            }
        }
    }
    groups.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let total = coef.len();
    let budget = (keep_fraction * total as f64 + 1e-9).floor() as usize;
    let mut keep = vec![false; total];
    let mut kept = 0;
    for &(i, size, _) in &groups {
        if kept + size > budget {
            break;
        }
        keep[i] = true;
        kept += size;
    }
    // mark partners of kept pairs
    let partner = |i: usize| -> usize {
        let k = i / per_class;
        let r = i % per_class;
        let base = k * per_class;
        if r < split {
            let (s, w) = (r / l, r % l);
            base + s * l + (l - w) % l
        } else {
            let r2 = r - split;
            let (s, w) = (r2 / (l * l), r2 % (l * l));
            let (a, b) = (w / l, w % l);
            base + split + s * l * l + ((l - a) % l) * l + (l - b) % l
        }
    };
    for &(i, _, _) in &groups {
        if keep[i] {
            keep[partner(i)] = true;
        }
    }

    let energy_all: f64 = coef.iter().map(|z| z.norm_sqr()).sum();
    let mut energy_kept = 0.0;
    for (z, &k) in coef.iter_mut().zip(&keep) {
        if k {
            energy_kept += z.norm_sqr();
        } else {
            *z = C::new(0.0, 0.0);
        }
    }

    let mut weights = model.weights().to_vec();
    for k in 0..classes {
        let row = &mut weights[k * d..(k + 1) * d];
        let mut at = k * per_class;
        for seq in &layout.seq1 {
            let b = &mut coef[at..at + l];
            dft.inverse(b);
            for (z, &i) in b.iter().zip(seq) {
                row[i] = z.re;
            }
            at += l;
        }
        for seq in &layout.seq2 {
            let b = &mut coef[at..at + l * l];
            dft.inverse2(b);
            for (z, &i) in b.iter().zip(seq) {
                row[i] = z.re;
            }
            at += l * l;
        }
    }
    let stats = SparsifyStats {
        total,
        kept,
        zero_fraction: (total - kept) as f64 / total.max(1) as f64,
        energy_retained: if energy_all > 0.0 {
            energy_kept / energy_all
        } else {
            1.0
        },
    };
    let out = LinearModel::new(model.meta().clone(), weights, model.bias().to_vec())?;
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::linear::{FeatureLayout, ModelMeta};
    use crate::grid::BoundaryMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn shape() -> CoeffShape {
        CoeffShape {
            j: 3,
            l: 8,
            input_size: 16,
            boundary: BoundaryMode::Periodic,
            spatial: 2,
            input_channels: 2,
        }
    }

    fn model_from(weights: Vec<f64>, classes: usize) -> LinearModel {
        let s = shape();
        let layout = FeatureLayout::of_coeffs(&s);
        let meta = ModelMeta {
            classes,
            layout,
            mean: vec![0.0; layout.groups()],
            std: vec![1.0; layout.groups()],
        };
        LinearModel::new(meta, weights, vec![0.0; classes]).unwrap()
    }

    fn random_model(seed: u64) -> LinearModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = shape().len();
        model_from((0..3 * d).map(|_| rng.random::<f64>() - 0.5).collect(), 3)
    }

    #[test]
    fn parseval_holds_for_both_orders() {
        let a = angular_spectrum(&random_model(1)).unwrap();
        let s1: f64 = a.omega1.iter().sum();
        let s2: f64 = a.omega2.iter().sum();
        assert!((s1 - a.energy1).abs() <= 1e-10 * a.energy1);
        assert!((s2 - a.energy2).abs() <= 1e-10 * a.energy2);
        // three unit-norm class rows
        assert!((a.energy1 + a.energy2 - 3.0).abs() < 1e-10);
    }

    #[test]
    fn constant_in_angle_is_pure_dc() {
        let s = shape();
        let table = path_table(s.j, s.l);
        let mut w = vec![0.0; s.len()];
        for c in 0..s.input_channels {
            for (p, path) in table.iter().enumerate() {
                if let PathIndex::Order1 { j1, .. } = path {
                    for pos in 0..4 {
                        w[(c * table.len() + p) * 4 + pos] = 1.0 + *j1 as f64 + pos as f64;
                    }
                }
            }
        }
        let a = angular_spectrum(&model_from(w, 1)).unwrap();
        assert!(a.omega1[1..].iter().all(|&v| v < 1e-20));
        assert!(a.omega1[0] > 0.0);
    }

    #[test]
    fn phase_ramp_concentrates_at_its_frequency() {
        let s = shape();
        let table = path_table(s.j, s.l);
        let m = 3;
        // cosine and sine of the ramp in the two input channels
        let mut w = vec![0.0; s.len()];
        for c in 0..2 {
            for (p, path) in table.iter().enumerate() {
                if let PathIndex::Order1 { l1, .. } = path {
                    let ph = 2.0 * PI * (*l1 * m) as f64 / s.l as f64;
                    let v = if c == 0 { ph.cos() } else { ph.sin() };
                    for pos in 0..4 {
                        w[(c * table.len() + p) * 4 + pos] = v;
                    }
                }
            }
        }
        let a = angular_spectrum(&model_from(w, 1)).unwrap();
        // a real ramp splits its energy between ±m
        let at_m = a.omega1[m] + a.omega1[s.l - m];
        assert!((at_m - a.energy1).abs() < 1e-10, "{:?}", a.omega1);
    }

    #[test]
    fn full_keep_is_a_round_trip() {
        let m = random_model(2);
        let (back, stats) = sparsify_angular(&m, 1.0).unwrap();
        assert_eq!(stats.kept, stats.total);
        assert_eq!(stats.zero_fraction, 0.0);
        for (a, b) in m.weights().iter().zip(back.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sparsity_meets_the_requested_fraction() {
        let m = random_model(3);
        for keep in [0.05, 0.2, 0.5, 0.77] {
            let (sp, stats) = sparsify_angular(&m, keep).unwrap();
            assert!(stats.zero_fraction >= 1.0 - keep, "{keep}: {stats:?}");
            assert!(stats.energy_retained <= 1.0 && stats.energy_retained > 0.0);
            assert!(sp.weights().iter().all(|v| v.is_finite()));
            // order-0 weights are untouched
            let d = shape().len();
            let np = path_table(3, 8).len();
            for k in 0..3 {
                for c in 0..2 {
                    for pos in 0..4 {
                        let i = k * d + (c * np) * 4 + pos;
                        assert_eq!(sp.weights()[i], m.weights()[i]);
                    }
                }
            }
        }
        assert!(sparsify_angular(&m, 0.0).is_err());
        assert!(sparsify_angular(&m, 1.5).is_err());
    }

    #[test]
    fn flatness_orders_peaked_below_flat() {
        assert!((spectral_flatness(&[1.0; 8]) - 1.0).abs() < 1e-12);
        assert!(spectral_flatness(&[8.0, 1.0, 0.1, 0.1, 0.1, 0.1, 0.1, 1.0]) < 0.5);
    }
}
