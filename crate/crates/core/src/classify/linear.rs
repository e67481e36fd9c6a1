use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::grid::{BoundaryMode, ImageGrid};
use crate::scattering::{path_count, CoeffShape, ScatteringCoeffs};

/// What the weights of a [`LinearModel`] are laid over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureLayout {
    /// Scattering coefficients, `[input_channel][path][y][x]`.
    Scattering {
        j: u32,
        l: usize,
        input_size: usize,
        boundary: BoundaryMode,
        spatial: usize,
        input_channels: usize,
    },
    /// Raw pixels, `[channel][y][x]`.
    Pixels {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl FeatureLayout {
    pub fn of_coeffs(shape: &CoeffShape) -> Self {
        FeatureLayout::Scattering {
            j: shape.j,
            l: shape.l,
            input_size: shape.input_size,
            boundary: shape.boundary,
            spatial: shape.spatial,
            input_channels: shape.input_channels,
        }
    }

    pub fn of_image(img: &ImageGrid) -> Self {
        FeatureLayout::Pixels {
            height: img.height(),
            width: img.width(),
            channels: img.channels(),
        }
    }

    pub fn coeff_shape(&self) -> Option<CoeffShape> {
        match *self {
            FeatureLayout::Scattering {
                j,
                l,
                input_size,
                boundary,
                spatial,
                input_channels,
            } => Some(CoeffShape {
                j,
                l,
                input_size,
                boundary,
                spatial,
                input_channels,
            }),
            FeatureLayout::Pixels { .. } => None,
        }
    }

    /// Number of standardization groups: one per (channel, path) or per
    /// pixel channel.
    pub fn groups(&self) -> usize {
        match *self {
            FeatureLayout::Scattering {
                j,
                l,
                input_channels,
                ..
            } => input_channels * path_count(j, l),
            FeatureLayout::Pixels { channels, .. } => channels,
        }
    }

    pub fn group_len(&self) -> usize {
        match *self {
            FeatureLayout::Scattering { spatial, .. } => spatial * spatial,
            FeatureLayout::Pixels { height, width, .. } => height * width,
        }
    }

    pub fn len(&self) -> usize {
        self.groups() * self.group_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub classes: usize,
    pub layout: FeatureLayout,
    /// Per-group training mean.
    pub mean: Vec<f64>,
    /// Per-group training standard deviation (1 where the group is constant).
    pub std: Vec<f64>,
}

/// Affine classifier over standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    meta: ModelMeta,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub scores: Vec<f64>,
}

impl LinearModel {
    pub fn new(meta: ModelMeta, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let d = meta.layout.len();
        if weights.len() != meta.classes * d {
            return Err(mismatch(meta.classes * d, weights.len()));
        }
        if bias.len() != meta.classes {
            return Err(mismatch(meta.classes, bias.len()));
        }
        let g = meta.layout.groups();
        if meta.mean.len() != g || meta.std.len() != g {
            return Err(mismatch(
                format!("{g} normalization groups"),
                meta.mean.len(),
            ));
        }
        if meta.classes == 0 {
            return Err(invalid("a model needs at least one class"));
        }
        if weights
            .iter()
            .chain(&bias)
            .chain(&meta.mean)
            .chain(&meta.std)
            .any(|v| !v.is_finite())
        {
            return Err(invalid("model parameters must be finite"));
        }
        Ok(LinearModel {
            meta,
            weights,
            bias,
        })
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn classes(&self) -> usize {
        self.meta.classes
    }

    pub fn feature_len(&self) -> usize {
        self.meta.layout.len()
    }

    /// Weights laid out `[class][feature]`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn class_weights(&self, k: usize) -> &[f64] {
        let d = self.feature_len();
        &self.weights[k * d..(k + 1) * d]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn standardized(&self, x: &[f64]) -> Vec<f64> {
        standardize(x, &self.meta)
    }

    /// Affine scores of a raw feature vector.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_len() {
            return Err(mismatch(self.feature_len(), x.len()));
        }
        let z = self.standardized(x);
        Ok((0..self.classes())
            .map(|k| self.bias[k] + dot(self.class_weights(k), &z))
            .collect())
    }

    /// `∂ score_k / ∂ x` for raw (unstandardized) features.
    pub fn score_gradient(&self, k: usize) -> Vec<f64> {
        let gl = self.meta.layout.group_len();
        self.class_weights(k)
            .iter()
            .enumerate()
            .map(|(d, w)| w / self.meta.std[d / gl])
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn standardize(x: &[f64], meta: &ModelMeta) -> Vec<f64> {
    let gl = meta.layout.group_len();
    x.iter()
        .enumerate()
        .map(|(d, v)| (v - meta.mean[d / gl]) / meta.std[d / gl])
        .collect()
}

/// Argmax with the lowest index winning ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

fn check_layout(model: &LinearModel, layout: FeatureLayout) -> Result<()> {
    if model.meta.layout != layout {
        return Err(mismatch(
            format!("{:?}", model.meta.layout),
            format!("{layout:?}"),
        ));
    }
    Ok(())
}

/// Class and scores for scattering features.
pub fn predict(model: &LinearModel, coeffs: &ScatteringCoeffs) -> Result<Prediction> {
    check_layout(model, FeatureLayout::of_coeffs(&coeffs.shape()))?;
    let scores = model.scores(coeffs.data())?;
    Ok(Prediction {
        class: argmax(&scores),
        scores,
    })
}

/// Class and scores for a raw-pixel model.
pub fn predict_pixels(model: &LinearModel, img: &ImageGrid) -> Result<Prediction> {
    check_layout(model, FeatureLayout::of_image(img))?;
    let scores = model.scores(img.data())?;
    Ok(Prediction {
        class: argmax(&scores),
        scores,
    })
}

/// Fraction of correctly classified samples.
pub fn accuracy(model: &LinearModel, samples: &[(ScatteringCoeffs, usize)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("cannot score an empty set"));
    }
    let hits = samples
        .par_iter()
        .map(|(c, y)| predict(model, c).map(|p| (p.class == *y) as usize))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / samples.len() as f64)
}

pub fn accuracy_pixels(model: &LinearModel, samples: &[(ImageGrid, usize)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("cannot score an empty set"));
    }
    let hits = samples
        .iter()
        .map(|(img, y)| predict_pixels(model, img).map(|p| (p.class == *y) as usize))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / samples.len() as f64)
}

/// Multinomial logistic regression on scattering features.
pub fn train_linear(
    features: &[(ScatteringCoeffs, usize)],
    classes: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LinearModel> {
    let first = features
        .first()
        .ok_or_else(|| invalid("empty training set"))?;
    let layout = FeatureLayout::of_coeffs(&first.0.shape());
    if let Some((bad, _)) = features.iter().find(|(c, _)| !c.same_shape(&first.0)) {
        return Err(mismatch(
            format!("{:?}", first.0.shape()),
            format!("{:?}", bad.shape()),
        ));
    }
    let rows: Vec<&[f64]> = features.iter().map(|(c, _)| c.data()).collect();
    let labels: Vec<usize> = features.iter().map(|s| s.1).collect();
    fit(&rows, &labels, layout, classes, cfg, seed)
}

/// The same probe on raw pixels.
pub fn train_linear_pixels(
    samples: &[(ImageGrid, usize)],
    classes: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LinearModel> {
    let first = samples
        .first()
        .ok_or_else(|| invalid("empty training set"))?;
    if let Some((bad, _)) = samples.iter().find(|(i, _)| !i.same_shape(&first.0)) {
        return Err(mismatch(first.0.shape_string(), bad.shape_string()));
    }
    let rows: Vec<&[f64]> = samples.iter().map(|(i, _)| i.data()).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.1).collect();
    fit(
        &rows,
        &labels,
        FeatureLayout::of_image(&first.0),
        classes,
        cfg,
        seed,
    )
}

fn group_stats(rows: &[&[f64]], layout: &FeatureLayout) -> (Vec<f64>, Vec<f64>) {
    let (g, gl) = (layout.groups(), layout.group_len());
    let count = (rows.len() * gl) as f64;
    let mut mean = vec![0.0; g];
    let mut var = vec![0.0; g];
    for (gi, m) in mean.iter_mut().enumerate() {
        *m = rows
            .iter()
            .map(|r| r[gi * gl..(gi + 1) * gl].iter().sum::<f64>())
            .sum::<f64>()
            / count;
    }
    for (gi, v) in var.iter_mut().enumerate() {
        let m = mean[gi];
        *v = rows
            .iter()
            .map(|r| {
                r[gi * gl..(gi + 1) * gl]
                    .iter()
                    .map(|x| (x - m).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / count;
    }
    let std = var
        .into_iter()
        .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, std)
}

fn fit(
    rows: &[&[f64]],
    labels: &[usize],
    layout: FeatureLayout,
    classes: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LinearModel> {
    if classes == 0 {
        return Err(invalid("need at least one class"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(invalid(format!(
            "label {y} out of range for {classes} classes"
        )));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(invalid(
            "epochs, batch size and learning rate must be positive",
        ));
    }
    if !(0.0..1.0).contains(&cfg.momentum) || cfg.weight_decay < 0.0 {
        return Err(invalid(
            "momentum must lie in [0, 1) and weight decay be non-negative",
        ));
    }
    let d = layout.len();
    let (mean, std) = group_stats(rows, &layout);
    let meta = ModelMeta {
        classes,
        layout,
        mean,
        std,
    };
    let z: Vec<Vec<f64>> = rows.par_iter().map(|r| standardize(r, &meta)).collect();

    let mut w = vec![0.0; classes * d];
    let mut b = vec![0.0; classes];
    let mut vw = vec![0.0; classes * d];
    let mut vb = vec![0.0; classes];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            // residuals p - onehot, one row per sample
            let resid: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| {
                    let scores: Vec<f64> = (0..classes)
                        .map(|k| b[k] + dot(&w[k * d..(k + 1) * d], &z[i]))
                        .collect();
                    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                    let total: f64 = e.iter().sum();
                    (0..classes)
                        .map(|k| e[k] / total - if k == labels[i] { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect();
            let inv = 1.0 / batch.len() as f64;
            w.par_chunks_mut(d)
                .zip(vw.par_chunks_mut(d))
                .enumerate()
                .for_each(|(k, (wk, vk))| {
                    let mut grad: Vec<f64> = wk.iter().map(|x| cfg.weight_decay * x).collect();
                    for (r, &i) in resid.iter().zip(batch) {
                        let c = r[k] * inv;
                        for (g, zi) in grad.iter_mut().zip(&z[i]) {
                            *g += c * zi;
                        }
                    }
                    for ((wi, vi), g) in wk.iter_mut().zip(vk.iter_mut()).zip(&grad) {
                        *vi = cfg.momentum * *vi - cfg.learning_rate * g;
                        *wi += *vi;
                    }
                });
            for k in 0..classes {
                let g: f64 = resid.iter().map(|r| r[k]).sum::<f64>() * inv;
                vb[k] = cfg.momentum * vb[k] - cfg.learning_rate * g;
                b[k] += vb[k];
            }
        }
    }
    LinearModel::new(meta, w, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ColorSpace;

    fn toy(n: usize) -> Vec<(ImageGrid, usize)> {
        (0..n)
            .map(|i| {
                let y = i % 2;
                let s = if y == 0 { -1.0 } else { 1.0 };
                let img = ImageGrid::from_fn(2, 2, ColorSpace::Gray, |_, r, c| {
                    s * (1.0 + ((i * 7 + r * 3 + c) % 5) as f64 * 0.1) + (r as f64 - c as f64) * 0.2
                });
                (img, y)
            })
            .collect()
    }

    #[test]
    fn separable_problem_is_learned() {
        let data = toy(40);
        let m = train_linear_pixels(&data, 2, &TrainConfig::default(), 1).unwrap();
        assert_eq!(accuracy_pixels(&m, &data).unwrap(), 1.0);
        let again = train_linear_pixels(&data, 2, &TrainConfig::default(), 1).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn bias_only_model_and_shift_invariance() {
        let data = toy(4);
        let mut m = train_linear_pixels(&data, 3, &TrainConfig::default(), 0).unwrap();
        m.weights_mut().iter_mut().for_each(|w| *w = 0.0);
        m.bias_mut().copy_from_slice(&[1.0, 0.0, 0.0]);
        for (img, _) in &data {
            assert_eq!(predict_pixels(&m, img).unwrap().class, 0);
        }
        let mut trained = train_linear_pixels(&data, 2, &TrainConfig::default(), 0).unwrap();
        let before: Vec<usize> = data
            .iter()
            .map(|(i, _)| predict_pixels(&trained, i).unwrap().class)
            .collect();
        trained.bias_mut().iter_mut().for_each(|b| *b += 5.0);
        let after: Vec<usize> = data
            .iter()
            .map(|(i, _)| predict_pixels(&trained, i).unwrap().class)
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn ties_go_to_the_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let data = toy(4);
        assert!(train_linear_pixels(&[], 2, &TrainConfig::default(), 0).is_err());
        assert!(train_linear_pixels(&data, 1, &TrainConfig::default(), 0).is_err());
        let m = train_linear_pixels(&data, 2, &TrainConfig::default(), 0).unwrap();
        assert!(predict_pixels(&m, &ImageGrid::zeros(3, 3, ColorSpace::Gray)).is_err());
    }
}
