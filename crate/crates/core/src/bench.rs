//! Timing records for the forward pipeline, the spatial oracle and the
//! memory comparison.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::filterbank::FilterBank;
use crate::grid::{BoundaryMode, ColorSpace, ImageGrid, Precision};
use crate::scattering::{
    forward_batch, forward_oracle, memory_report, plan_for, ScatteringCoeffs, ScatteringConfig,
    Transform,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub op: String,
    /// `batch x channels x height x width`.
    pub shape: String,
    pub j: u32,
    pub l: usize,
    pub workers: usize,
    pub wall_ms: f64,
    pub peak_slots: usize,
    pub images_per_s: f64,
    /// Hash of the produced coefficients, empty when nothing is produced.
    pub checksum: String,
}

impl BenchRecord {
    pub const HEADER: [&'static str; 9] = [
        "op",
        "shape",
        "J",
        "L",
        "workers",
        "wall_ms",
        "peak_slots",
        "images_per_s",
        "checksum",
    ];

    pub fn row(&self) -> [String; 9] {
        [
            self.op.clone(),
            self.shape.clone(),
            self.j.to_string(),
            self.l.to_string(),
            self.workers.to_string(),
            sig9(self.wall_ms),
            self.peak_slots.to_string(),
            sig9(self.images_per_s),
            self.checksum.clone(),
        ]
    }
}

/// `v` with 9 significant digits, fixed notation for moderate magnitudes.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

/// Order-sensitive hash of the coefficient bits.
pub fn checksum(coeffs: &[ScatteringCoeffs]) -> u64 {
    let mut h = DefaultHasher::new();
    for c in coeffs {
        for v in c.data() {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Deterministic batch of uniform RGB images.
pub fn random_batch(batch: usize, n: usize, seed: u64) -> Vec<ImageGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..batch)
        .map(|_| ImageGrid::from_fn(n, n, ColorSpace::Rgb, |_, _, _| rng.random::<f64>()))
        .collect()
}

fn shape_of(imgs: &[ImageGrid]) -> String {
    let f = &imgs[0];
    format!(
        "{}x{}x{}x{}",
        imgs.len(),
        f.channels(),
        f.height(),
        f.width()
    )
}

fn per_second(count: usize, ms: f64) -> f64 {
    count as f64 / (ms / 1e3).max(1e-9)
}

/// Times the FFT pipeline on a batch; the filter bank is built outside the
/// timed region.
pub fn time_forward(
    imgs: &[ImageGrid],
    cfg: &ScatteringConfig,
    workers: usize,
) -> Result<BenchRecord> {
    let first = imgs.first().ok_or_else(|| invalid("empty batch"))?;
    let plan = plan_for(first.height(), cfg)?;
    let fb = FilterBank::build(plan.padded, cfg.j, cfg.l, cfg.params)?;
    let (_, peak) = Transform::new(&fb, cfg, first.height())?.forward_instrumented(first)?;
    let start = Instant::now();
    let out = forward_batch(imgs, &fb, cfg, workers)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(BenchRecord {
        op: "forward".into(),
        shape: shape_of(imgs),
        j: cfg.j,
        l: cfg.l,
        workers,
        wall_ms: ms,
        peak_slots: peak,
        images_per_s: per_second(imgs.len(), ms),
        checksum: format!("{:016x}", checksum(&out)),
    })
}

/// Times one image through the spatial oracle. The image must be square,
/// a power of two and is treated as periodic.
pub fn time_oracle(img: &ImageGrid, cfg: &ScatteringConfig) -> Result<BenchRecord> {
    let cfg = cfg.with_boundary(BoundaryMode::Periodic);
    let fb = FilterBank::build(img.height(), cfg.j, cfg.l, cfg.params)?;
    let start = Instant::now();
    let out = forward_oracle(img, &fb, &cfg)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let n = img.height();
    Ok(BenchRecord {
        op: "oracle".into(),
        shape: shape_of(std::slice::from_ref(img)),
        j: cfg.j,
        l: cfg.l,
        workers: 1,
        wall_ms: ms,
        peak_slots: n * n,
        images_per_s: per_second(1, ms),
        checksum: format!("{:016x}", checksum(std::slice::from_ref(&out))),
    })
}

/// Forward and oracle on the same image and the speedup of the former.
pub fn oracle_speedup(
    n: usize,
    j: u32,
    l: usize,
    seed: u64,
) -> Result<(BenchRecord, BenchRecord, f64)> {
    let cfg = ScatteringConfig::new(j, l)
        .with_boundary(BoundaryMode::Periodic)
        .with_precision(Precision::Double);
    let img = random_batch(1, n, seed).remove(0);
    let gray = ImageGrid::new(n, n, 1, ColorSpace::Gray, img.channel(0).to_vec())?;
    // best of three for the fast path; the oracle is slow enough to time once
    let mut fast = time_forward(std::slice::from_ref(&gray), &cfg, 1)?;
    for _ in 0..2 {
        let again = time_forward(std::slice::from_ref(&gray), &cfg, 1)?;
        if again.wall_ms < fast.wall_ms {
            fast = again;
        }
    }
    let slow = time_oracle(&gray, &cfg)?;
    let ratio = slow.wall_ms / fast.wall_ms.max(1e-9);
    Ok((fast, slow, ratio))
}

/// Tree storage against the measured infix arena at `n x n`, one row each.
pub fn memory_records(n: usize, j: u32, l: usize) -> Result<[BenchRecord; 2]> {
    let cfg = ScatteringConfig::new(j, l);
    let start = Instant::now();
    let r = memory_report(&cfg, n)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let row = |op: &str, slots: usize| BenchRecord {
        op: op.into(),
        shape: format!("1x1x{n}x{n}"),
        j,
        l,
        workers: 1,
        wall_ms: ms,
        peak_slots: slots,
        images_per_s: per_second(1, ms),
        checksum: String::new(),
    };
    Ok([
        row("memory_tree", r.tree_coeffs),
        row("memory_infix", r.infix_peak),
    ])
}
