use serde::{Deserialize, Serialize};

use super::{sign, AttackOutcome};
use crate::diff::cost_input_gradient;
use crate::error::{Error, Result};
use crate::models::{Model, Sequence, TokenSequence, VanillaRnnParams};
use crate::training::Cost;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FgsmConfig {
    pub epsilon: f64,
}

impl FgsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// `x + ε·sgn(∇ₓ cost)`. Success means the cost strictly increased.
pub fn fgsm(
    p: &VanillaRnnParams,
    x: &Sequence,
    target: &Sequence,
    loss: &dyn Cost,
    cfg: &FgsmConfig,
) -> Result<AttackOutcome<Sequence>> {
    cfg.validate()?;
    let grad = cost_input_gradient(p, x, target, loss)?;
    let mut adv = x.clone();
    for (t, g) in grad.steps.iter().enumerate() {
        for (c, &v) in g.iter().enumerate() {
            adv.set(t, c, x.get(t, c) + cfg.epsilon * sign(v));
        }
    }
    let before = loss.value(&p.forward(x)?.output, target)?;
    let after = loss.value(&p.forward(&adv)?.output, target)?;
    let delta = adv.sub(x)?;
    let changed_positions = (0..x.len())
        .filter(|&t| delta.step(t).iter().any(|&v| v != 0.0))
        .collect();
    Ok(AttackOutcome {
        perturbation_norm: delta.norm_inf(),
        adversarial: adv,
        success: after > before,
        changed_positions,
        iterations: 1,
        diagnostic: None,
    })
}

/// Inputs an attack may be asked to work on.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackInput {
    Sequence(Sequence),
    Tokens(TokenSequence),
}

/// FGSM on whatever model/input pair was loaded. Token inputs live in a
/// discrete space and are rejected.
pub fn fgsm_model(
    model: &Model,
    input: &AttackInput,
    target: &Sequence,
    loss: &dyn Cost,
    cfg: &FgsmConfig,
) -> Result<AttackOutcome<Sequence>> {
    match (model, input) {
        (Model::Sequential(p), AttackInput::Sequence(x)) => fgsm(p, x, target, loss, cfg),
        (_, AttackInput::Tokens(_)) => Err(Error::Unsupported(
            "the fast gradient sign method needs continuous inputs; token ids are discrete".into(),
        )),
        (Model::Classifier(_), AttackInput::Sequence(_)) => Err(Error::Unsupported(
            "the classifier consumes token sequences, not real-valued sequences".into(),
        )),
    }
}
