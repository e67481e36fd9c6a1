use serde::{Deserialize, Serialize};

use crate::adjoint::backward;
use crate::classify::linear::{predict, LinearModel};
use crate::error::{invalid, Result};
use crate::filterbank::FilterBank;
use crate::grid::ImageGrid;
use crate::scattering::{ScatteringConfig, Transform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackGoal {
    /// Push the prediction to this class.
    Targeted(usize),
    /// Move away from the current class towards the runner-up.
    Untargeted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub source_class: usize,
    /// Smallest grid value that reached the goal.
    pub eps: Option<f64>,
    pub adversarial: Option<ImageGrid>,
    pub adversarial_class: Option<usize>,
}

impl AttackOutcome {
    pub fn succeeded(&self) -> bool {
        self.eps.is_some()
    }
}

/// Targeted sign-gradient attack through the scattering adjoint.
pub fn fgsm_attack(
    model: &LinearModel,
    fb: &FilterBank,
    cfg: &ScatteringConfig,
    x: &ImageGrid,
    target_class: usize,
    eps_grid: &[f64],
) -> Result<AttackOutcome> {
    let transform = Transform::new(fb, cfg, x.height())?;
    fgsm_attack_with(
        &transform,
        model,
        x,
        AttackGoal::Targeted(target_class),
        eps_grid,
    )
}

/// Tries `clamp(x + ε · sign(∇(score_goal − score_current)))` for each `ε`
/// in the ascending grid and stops at the first that reaches the goal.
pub fn fgsm_attack_with(
    transform: &Transform,
    model: &LinearModel,
    x: &ImageGrid,
    goal: AttackGoal,
    eps_grid: &[f64],
) -> Result<AttackOutcome> {
    if eps_grid.iter().any(|e| !(*e >= 0.0) || !e.is_finite())
        || eps_grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(invalid(
            "epsilon grid must be finite, non-negative and strictly ascending",
        ));
    }
    let (s, tape) = transform.forward_with_tape(x)?;
    let pred = predict(model, &s)?;
    let source = pred.class;
    let toward = match goal {
        AttackGoal::Targeted(t) => {
            if t >= model.classes() {
                return Err(invalid(format!("target class {t} out of range")));
            }
            if t == source {
                return Err(invalid(format!("image is already classified as {t}")));
            }
            t
        }
        AttackGoal::Untargeted => {
            let mut order: Vec<usize> = (0..model.classes()).filter(|&k| k != source).collect();
            order.sort_by(|&a, &b| pred.scores[b].total_cmp(&pred.scores[a]).then(a.cmp(&b)));
            *order
                .first()
                .ok_or_else(|| invalid("need at least two classes"))?
        }
    };
    let gt = model.score_gradient(toward);
    let gs = model.score_gradient(source);
    let ct = s.with_data(gt.iter().zip(&gs).map(|(a, b)| a - b).collect())?;
    let grad = backward(&tape, &ct)?;
    let sign: Vec<f64> = grad
        .data()
        .iter()
        .map(|&g| {
            if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();

    for &eps in eps_grid {
        let data = x
            .data()
            .iter()
            .zip(&sign)
            .map(|(v, g)| (v + eps * g).clamp(0.0, 1.0))
            .collect();
        let candidate = x.with_data(data)?;
        let class = predict(model, &transform.forward(&candidate)?)?.class;
        let reached = match goal {
            AttackGoal::Targeted(t) => class == t,
            AttackGoal::Untargeted => class != source,
        };
        if reached {
            return Ok(AttackOutcome {
                source_class: source,
                eps: Some(eps),
                adversarial: Some(candidate),
                adversarial_class: Some(class),
            });
        }
    }
    Ok(AttackOutcome {
        source_class: source,
        eps: None,
        adversarial: None,
        adversarial_class: None,
    })
}
