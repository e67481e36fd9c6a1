//! Self-test invariant suite. Every check records the measured value next to
//! its bound so a report can be diffed across machines.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::backward;
use crate::classify::{train_linear, TrainConfig};
use crate::error::{invalid, Result};
use crate::filterbank::{littlewood_paley, FilterBank, MorletParams};
use crate::format::{decode_sct1, decode_slm1, encode_sct1, encode_slm1};
use crate::grid::{BoundaryMode, ColorSpace, ImageGrid, Precision};
use crate::io::{decode_rawf, encode_rawf};
use crate::scattering::{
    forward_batch, forward_oracle, memory_report, path_count, plan_for, tree_coeffs, CascadeMode,
    ScatteringCoeffs, ScatteringConfig, Transform,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub bound: Bound,
    pub limit: f64,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub seed: u64,
    pub seconds: f64,
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Damage one wavelet in every bank the suite builds.
    pub corrupt_filter: bool,
}

struct Measured {
    value: f64,
    detail: String,
}

fn measured(value: f64, detail: impl Into<String>) -> Result<Measured> {
    Ok(Measured {
        value,
        detail: detail.into(),
    })
}

struct Suite {
    opts: SelftestOptions,
    rng: ChaCha8Rng,
    checks: Vec<CheckResult>,
}

fn random_image(rng: &mut ChaCha8Rng, n: usize, cs: ColorSpace) -> ImageGrid {
    ImageGrid::from_fn(n, n, cs, |_, _, _| rng.random::<f64>())
}

fn rel_max_dev(a: &ScatteringCoeffs, b: &ScatteringCoeffs) -> f64 {
    let num = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let den = b.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

impl Suite {
    fn bank(&self, cfg: &ScatteringConfig, n: usize) -> Result<FilterBank> {
        let plan = plan_for(n, cfg)?;
        let mut fb = FilterBank::build(plan.padded, cfg.j, cfg.l, cfg.params)?;
        if self.opts.corrupt_filter {
            fb.perturb_filter(0, 0, 0, 0, 0.5);
        }
        Ok(fb)
    }

    fn transform(&self, cfg: &ScatteringConfig, n: usize) -> Result<Transform> {
        Transform::new(&self.bank(cfg, n)?, cfg, n)
    }

    fn check(
        &mut self,
        name: &'static str,
        bound: Bound,
        limit: f64,
        f: impl FnOnce(&mut Self) -> Result<Measured>,
    ) {
        let start = Instant::now();
        let (passed, value, detail) = match f(self) {
            Ok(m) => {
                let ok = match bound {
                    Bound::AtMost => m.value <= limit,
                    Bound::AtLeast => m.value >= limit,
                };
                (ok, m.value, m.detail)
            }
            Err(e) => (false, f64::NAN, format!("error: {e}")),
        };
        self.checks.push(CheckResult {
            name,
            passed,
            measured: value,
            bound,
            limit,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
}

/// Runs every invariant; never panics on a failing check.
pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let start = Instant::now();
    let mut s = Suite {
        opts: *opts,
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        checks: Vec::new(),
    };

    s.check("path_counts", Bound::AtMost, 0.0, |_| {
        let got: Vec<usize> = [2, 3, 4].iter().map(|&j| 3 * path_count(j, 8)).collect();
        let off = got
            .iter()
            .zip([243, 651, 1251])
            .filter(|(a, b)| **a != *b)
            .count();
        measured(off as f64, format!("channels for J=2,3,4, L=8: {got:?}"))
    });

    s.check("tree_memory_formula", Bound::AtMost, 0.10, |_| {
        let published = [2.0e6, 2.5e6, 2.6e6];
        let got: Vec<usize> = [2, 3, 4].iter().map(|&j| tree_coeffs(j, 8, 256)).collect();
        let dev = got
            .iter()
            .zip(published)
            .map(|(&g, p)| (g as f64 - p).abs() / p)
            .fold(0.0, f64::max);
        measured(dev, format!("tree slots at N=256, L=8: {got:?}"))
    });

    s.check("infix_memory_bound", Bound::AtMost, 5.0, |_| {
        let mut worst: f64 = 0.0;
        for j in [2, 3, 4] {
            for n in [64, 128, 256] {
                let r = memory_report(&ScatteringConfig::new(j, 8), n)?;
                worst = worst.max(r.infix_peak as f64 / (n * n) as f64);
            }
        }
        measured(worst, "max infix peak / N² over J∈{2,3,4}, N∈{64,128,256}")
    });

    let lp_cfg = ScatteringConfig::new(2, 8).with_boundary(BoundaryMode::Periodic);
    s.check("wavelet_zero_mean", Bound::AtMost, 1e-9, |s| {
        let fb = s.bank(&lp_cfg, 32)?;
        let worst = fb
            .iter_psi()
            .filter(|(_, _, r, _)| *r == 0)
            .map(|(_, _, _, g)| g.data()[0].norm())
            .fold(0.0, f64::max);
        measured(worst, "max |ψ̂(0)| over the full-resolution wavelets")
    });

    s.check("littlewood_paley_upper", Bound::AtMost, 1.05, |s| {
        let lp = littlewood_paley(&s.bank(&lp_cfg, 64)?);
        measured(lp.max_e, "max of the Littlewood–Paley sum, M=64, J=2, L=8")
    });

    s.check("littlewood_paley_band", Bound::AtLeast, 0.35, |s| {
        let lp = littlewood_paley(&s.bank(&lp_cfg, 64)?);
        measured(lp.min_e_band, "min over 2π/2^J ≤ |ω| ≤ 0.75π")
    });

    let oracle_cfg = ScatteringConfig::new(2, 4)
        .with_boundary(BoundaryMode::Periodic)
        .with_precision(Precision::Double);
    for (name, mode, limit) in [
        ("oracle_full_resolution", CascadeMode::FullResolution, 1e-5),
        ("oracle_subsampled", CascadeMode::Subsampled, 1e-2),
    ] {
        s.check(name, Bound::AtMost, limit, |s| {
            let cfg = oracle_cfg.with_mode(mode);
            let fb = s.bank(&cfg, 16)?;
            let t = Transform::new(&fb, &cfg, 16)?;
            let mut worst: f64 = 0.0;
            for _ in 0..3 {
                let x = random_image(&mut s.rng, 16, ColorSpace::Gray);
                worst = worst.max(rel_max_dev(
                    &t.forward(&x)?,
                    &forward_oracle(&x, &fb, &cfg)?,
                ));
            }
            measured(
                worst,
                "max |S − S_oracle| / max |S_oracle| on 3 random 16² images",
            )
        });
    }

    s.check("constant_image", Bound::AtMost, 1e-5, |s| {
        let t = s.transform(&lp_cfg.with_precision(Precision::Double), 32)?;
        let c = 0.7;
        let out = t.forward(&ImageGrid::from_fn(32, 32, ColorSpace::Gray, |_, _, _| c))?;
        let order0 = out
            .block(0, 0)
            .iter()
            .map(|v| (v - c).abs())
            .fold(0.0, f64::max);
        let higher = (1..out.paths().len())
            .flat_map(|p| out.block(0, p).iter().copied())
            .map(f64::abs)
            .fold(0.0, f64::max);
        measured(
            order0.max(higher) / c,
            "max deviation from (c, 0, ..., 0), relative to c",
        )
    });

    s.check("gradient_check", Bound::AtMost, 1e-4, |s| {
        let cfg = ScatteringConfig::new(2, 4).with_precision(Precision::Double);
        let t = s.transform(&cfg, 16)?;
        let x = random_image(&mut s.rng, 16, ColorSpace::Gray);
        let (sx, tape) = t.forward_with_tape(&x)?;
        let ct = sx.with_data((0..sx.len()).map(|_| s.rng.random::<f64>() - 0.5).collect())?;
        let grad = backward(&tape, &ct)?;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..3 {
            let v: Vec<f64> = (0..x.data().len())
                .map(|_| s.rng.random::<f64>() - 0.5)
                .collect();
            let step = |sign: f64| {
                x.with_data(
                    x.data()
                        .iter()
                        .zip(&v)
                        .map(|(a, d)| a + sign * h * d)
                        .collect(),
                )
            };
            let fd =
                (t.forward(&step(1.0)?)?.dot(&ct) - t.forward(&step(-1.0)?)?.dot(&ct)) / (2.0 * h);
            let an: f64 = grad.data().iter().zip(&v).map(|(g, d)| g * d).sum();
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-12));
        }
        measured(
            worst,
            "relative error of ⟨∇⟨S, c⟩, v⟩ against central differences, 3 directions",
        )
    });

    let cov_cfg = ScatteringConfig::new(2, 8)
        .with_boundary(BoundaryMode::Periodic)
        .with_precision(Precision::Double);
    s.check("translation_covariance", Bound::AtMost, 1e-5, |s| {
        let t = s.transform(&cov_cfg, 32)?;
        let x = random_image(&mut s.rng, 32, ColorSpace::Gray);
        let shift = 1usize << cov_cfg.j;
        let a = t.forward(&x.roll(shift, shift))?;
        let b = t.forward(&x)?.roll(1, 1);
        measured(
            a.sub(&b)?.norm() / b.norm(),
            "|S(shift x) − shift S(x)| / |S(x)|, shift 2^J",
        )
    });

    s.check("rotation_covariance", Bound::AtMost, 0.03, |s| {
        let t = s.transform(&cov_cfg, 32)?;
        let x = random_image(&mut s.rng, 32, ColorSpace::Gray);
        let a = t.forward(&x.rot90()?)?;
        let b = t.forward(&x)?;
        let (num, den) = rotation_mismatch(&a, &b)?;
        measured(
            (num / den).sqrt(),
            "order-1 relative energy mismatch, θ index shifted by L/2",
        )
    });

    s.check("non_expansive", Bound::AtMost, 1.0, |s| {
        let cfg = ScatteringConfig::new(2, 8).with_precision(Precision::Double);
        let fb = s.bank(&cfg, 32)?;
        let eps = (littlewood_paley(&fb).max_e - 1.0).max(0.0);
        let t = Transform::new(&fb, &cfg, 32)?;
        let mut worst: f64 = 0.0;
        for k in 0..8 {
            let x = random_image(&mut s.rng, 32, ColorSpace::Gray);
            let y = if k % 2 == 0 {
                random_image(&mut s.rng, 32, ColorSpace::Gray)
            } else {
                x.with_data(
                    x.data()
                        .iter()
                        .map(|v| v + 0.01 * s.rng.random::<f64>())
                        .collect(),
                )?
            };
            let d = x
                .with_data(x.data().iter().zip(y.data()).map(|(a, b)| a - b).collect())?
                .norm();
            let ds = t.forward(&x)?.sub(&t.forward(&y)?)?.grid_norm();
            worst = worst.max(ds / ((1.0 + eps) * d));
        }
        measured(
            worst,
            format!(
                "max |Sx − Sy| / ((1+ε)|x − y|) over 4 random and 4 nearby pairs, ε = {eps:.3e}"
            ),
        )
    });

    s.check("batch_determinism", Bound::AtMost, 0.0, |s| {
        let cfg = ScatteringConfig::new(2, 4);
        let fb = s.bank(&cfg, 16)?;
        let imgs: Vec<ImageGrid> = (0..6)
            .map(|_| random_image(&mut s.rng, 16, ColorSpace::Rgb))
            .collect();
        let a = forward_batch(&imgs, &fb, &cfg, 1)?;
        let b = forward_batch(&imgs, &fb, &cfg, 3)?;
        let diff = a
            .iter()
            .zip(&b)
            .flat_map(|(p, q)| p.data().iter().zip(q.data()).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max);
        measured(diff, "max difference between 1 and 3 workers")
    });

    s.check("format_round_trips", Bound::AtMost, 0.0, |s| {
        let cfg = ScatteringConfig::new(2, 4);
        let t = s.transform(&cfg, 16)?;
        let x = random_image(&mut s.rng, 16, ColorSpace::Rgb);
        let coeffs = t.forward(&x)?;
        let mut bad = Vec::new();

        let params = MorletParams::for_angles(4);
        let sct = encode_sct1(&coeffs, Some(&params))?;
        let (back, p) = decode_sct1(&sct)?;
        if encode_sct1(&back, p.as_ref())? != sct {
            bad.push("SCT1");
        }

        let samples = vec![(coeffs.clone(), 0), (coeffs.scaled(0.5), 1)];
        let tc = TrainConfig {
            epochs: 2,
            ..Default::default()
        };
        let model = train_linear(&samples, 2, &tc, s.opts.seed)?;
        let slm = encode_slm1(&model)?;
        if encode_slm1(&decode_slm1(&slm)?)? != slm {
            bad.push("SLM1");
        }

        let raw = encode_rawf(&x);
        if encode_rawf(&decode_rawf(&raw)?) != raw {
            bad.push("RAWF");
        }
        let detail = if bad.is_empty() {
            "write → read → write byte-identical for SCT1, SLM1, RAWF".to_string()
        } else {
            format!("not byte-identical: {}", bad.join(", "))
        };
        measured(bad.len() as f64, detail)
    });

    SelftestReport {
        passed: s.checks.iter().all(|c| c.passed),
        seed: opts.seed,
        seconds: start.elapsed().as_secs_f64(),
        checks: s.checks,
    }
}

/// Squared mismatch and energy between `a = S(rot90 x)` and the rotated
/// order-1 maps of `b = S(x)`, first channel.
fn rotation_mismatch(a: &ScatteringCoeffs, b: &ScatteringCoeffs) -> Result<(f64, f64)> {
    let l = b.angles();
    if l % 2 != 0 {
        return Err(invalid("rotation check needs an even number of angles"));
    }
    let s = b.spatial();
    let (mut num, mut den) = (0.0, 0.0);
    for (p, path) in b.paths().iter().enumerate() {
        let [order, j1, l1, _, _] = path.to_row();
        if order != 1 {
            continue;
        }
        let l_rot = (l1 as usize + l / 2) % l;
        let q = b
            .paths()
            .iter()
            .position(|r| r.to_row() == [1, j1, l_rot as i64, -1, -1])
            .ok_or_else(|| invalid("missing rotated path"))?;
        let (src, dst) = (b.block(0, p), a.block(0, q));
        for y in 0..s {
            for x in 0..s {
                let d = src[y * s + x] - dst[x * s + (s - y) % s];
                num += d * d;
                den += src[y * s + x] * src[y * s + x];
            }
        }
    }
    Ok((num, den))
}
