//! Reconstruction of an image from its scattering coefficients by Adam
//! descent on `|S(y) − target|²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::filterbank::FilterBank;
use crate::grid::{yuv_to_rgb, yuv_to_rgb_adjoint, ColorSpace, ImageGrid};
use crate::scattering::{ScatteringCoeffs, ScatteringConfig, Transform};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub iterations: usize,
    pub init_noise_variance: f64,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Space of the optimization variable for colour targets.
    pub work_color_space: ColorSpace,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            iterations: 200,
            init_noise_variance: 1e-4,
            step_size: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            work_color_space: ColorSpace::Yuv,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(invalid("iterations must be at least 1"));
        }
        if !(self.init_noise_variance > 0.0) || !(self.step_size > 0.0) || !(self.eps_adam > 0.0) {
            return Err(invalid(
                "noise variance, step size and Adam epsilon must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Adam moment estimates for one image-shaped variable.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn for_image(img: &ImageGrid) -> Self {
        Self::new(img.data().len())
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }
}

/// Advances `state` with `grad` and returns the bias-corrected update
/// `−lr · m̂ / (√v̂ + ε)`, to be added to the variable.
pub fn adam_step(state: &mut AdamState, grad: &ImageGrid, cfg: &ReconConfig) -> Result<ImageGrid> {
    let g = grad.data();
    if g.len() != state.m.len() {
        return Err(mismatch(state.m.len(), g.len()));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let mut update = Vec::with_capacity(g.len());
    for ((m, v), &g) in state.m.iter_mut().zip(state.v.iter_mut()).zip(g) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        update.push(-cfg.step_size * mh / (vh.sqrt() + cfg.eps_adam));
    }
    grad.with_data(update)
}

/// One row of the optimization trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub loss: f64,
    pub err_s: f64,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Final iterate in RGB (or gray); not clamped.
    pub image: ImageGrid,
    /// Entry `k` describes the iterate after `k` updates, `k = 0..=iterations`.
    pub history: Vec<HistoryEntry>,
}

impl Reconstruction {
    /// Starts of the 50-iteration windows over which the loss went up.
    pub fn divergent_windows(&self) -> Vec<usize> {
        let h = &self.history;
        (0..h.len().saturating_sub(50))
            .step_by(50)
            .filter(|&s| h[s + 50].loss > h[s].loss)
            .collect()
    }
}

/// Maps the optimization variable to the image the transform sees.
fn to_signal(y: &ImageGrid) -> Result<ImageGrid> {
    match y.color_space() {
        ColorSpace::Yuv => yuv_to_rgb(y),
        _ => Ok(y.clone()),
    }
}

fn pull_signal(y: &ImageGrid, grad: ImageGrid) -> Result<ImageGrid> {
    match y.color_space() {
        ColorSpace::Yuv => yuv_to_rgb_adjoint(&grad),
        _ => Ok(grad),
    }
}

/// Reconstructs an image whose scattering coefficients match `target`,
/// starting from seeded Gaussian noise in `cfg_recon.work_color_space`.
pub fn reconstruct(
    target: &ScatteringCoeffs,
    fb: &FilterBank,
    cfg_scat: &ScatteringConfig,
    cfg_recon: &ReconConfig,
    seed: u64,
) -> Result<Reconstruction> {
    cfg_recon.validate()?;
    let n = target.input_size();
    let transform = Transform::new(fb, cfg_scat, n)?;
    if transform.output_shape(target.input_channels()) != target.shape() {
        return Err(mismatch(
            format!("{:?}", transform.output_shape(target.input_channels())),
            format!("{:?}", target.shape()),
        ));
    }
    let space = match target.input_channels() {
        1 => ColorSpace::Gray,
        3 => cfg_recon.work_color_space,
        c => return Err(invalid(format!("cannot reconstruct a {c}-channel image"))),
    };
    if target.input_channels() == 3 && space == ColorSpace::Gray {
        return Err(invalid("a colour target needs an RGB or YUV working space"));
    }
    let target_norm = target.norm();
    if target_norm == 0.0 {
        return Err(Error::UndefinedMetric(
            "target coefficients are zero".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg_recon.init_noise_variance.sqrt())
        .map_err(|e| invalid(e.to_string()))?;
    let mut y = ImageGrid::from_fn(n, n, space, |_, _, _| noise.sample(&mut rng))
        .with_precision(cfg_scat.precision);
    let mut adam = AdamState::for_image(&y);
    let mut history = Vec::with_capacity(cfg_recon.iterations + 1);

    for it in 0..cfg_recon.iterations {
        let (loss, grad) = transform.loss_grad(target, &to_signal(&y)?)?;
        history.push(HistoryEntry {
            iteration: it,
            loss,
            err_s: loss.sqrt() / target_norm,
        });
        let update = adam_step(&mut adam, &pull_signal(&y, grad)?, cfg_recon)?;
        for (v, u) in y.data_mut().iter_mut().zip(update.data()) {
            *v += u;
        }
    }
    let image = to_signal(&y)?;
    let loss = transform
        .forward(&image)?
        .sub(target)?
        .data()
        .iter()
        .map(|v| v * v)
        .sum::<f64>();
    history.push(HistoryEntry {
        iteration: cfg_recon.iterations,
        loss,
        err_s: loss.sqrt() / target_norm,
    });
    Ok(Reconstruction { image, history })
}

/// `(|x̂ − x| / |x|, |S x̂ − S x| / |S x|)`.
pub fn err_metrics(
    xhat: &ImageGrid,
    x: &ImageGrid,
    fb: &FilterBank,
    cfg: &ScatteringConfig,
) -> Result<(f64, f64)> {
    err_metrics_with(&Transform::new(fb, cfg, x.height())?, xhat, x)
}

pub fn err_metrics_with(
    transform: &Transform,
    xhat: &ImageGrid,
    x: &ImageGrid,
) -> Result<(f64, f64)> {
    if !xhat.same_shape(x) {
        return Err(mismatch(x.shape_string(), xhat.shape_string()));
    }
    let xn = x.norm();
    if xn == 0.0 {
        return Err(Error::UndefinedMetric("|x| = 0".into()));
    }
    let dx = xhat
        .data()
        .iter()
        .zip(x.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let sx = transform.forward(x)?;
    let sn = sx.norm();
    if sn == 0.0 {
        return Err(Error::UndefinedMetric("|S x| = 0".into()));
    }
    let shat = transform.forward(xhat)?;
    Ok((dx / xn, shat.sub(&sx)?.norm() / sn))
}
