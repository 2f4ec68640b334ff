use serde::{Deserialize, Serialize};

use super::{sign, AttackOutcome};
use crate::diff::rnn_jacobian;
use crate::error::{Error, Result};
use crate::models::{Sequence, VanillaRnnParams};

/// Added to the off-target denominator of the selectivity score.
pub const SELECTIVITY_KAPPA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetGoal {
    /// Reach `|y − value| < delta`.
    Value(f64),
    /// Move by at least `delta` in the direction of the sign.
    Direction(f64),
    /// Reach `|y − (y_clean + offset)| < delta`, `y_clean` being the output on
    /// the unperturbed input.
    Offset(f64),
}

/// One output coordinate the attack should steer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepTarget {
    pub step: usize,
    pub coord: usize,
    pub goal: TargetGoal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequentialAttackConfig {
    pub targets: Vec<StepTarget>,
    pub delta: f64,
    /// Minimum ratio of on-target to largest off-target Jacobian magnitude
    /// for an input coordinate to be perturbed.
    pub off_target_ratio: f64,
    pub step_size: f64,
    pub max_iters: usize,
}

impl SequentialAttackConfig {
    pub fn validate(&self, p: &VanillaRnnParams, len: usize) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("no output targets given".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.off_target_ratio >= 1.0) {
            return Err(Error::Config(format!(
                "off_target_ratio must be >= 1, got {}",
                self.off_target_ratio
            )));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step_size must be > 0, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        for t in &self.targets {
            if t.step >= len || t.coord >= p.output_dim() {
                return Err(Error::Config(format!(
                    "target (step {}, coord {}) outside an output of {len} steps × {}",
                    t.step,
                    t.coord,
                    p.output_dim()
                )));
            }
            match t.goal {
                TargetGoal::Direction(d) if d == 0.0 || !d.is_finite() => {
                    return Err(Error::Config("a direction target needs a nonzero sign".into()));
                }
                TargetGoal::Value(v) | TargetGoal::Offset(v) if !v.is_finite() => {
                    return Err(Error::Config("target values must be finite".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl StepTarget {
    fn satisfied(&self, original: &Sequence, current: &Sequence, delta: f64) -> bool {
        let y = current.get(self.step, self.coord);
        match self.goal {
            TargetGoal::Value(v) => (y - v).abs() < delta,
            TargetGoal::Direction(d) => sign(d) * (y - original.get(self.step, self.coord)) >= delta,
            TargetGoal::Offset(d) => (y - original.get(self.step, self.coord) - d).abs() < delta,
        }
    }

    /// Sign of the change still wanted at this output.
    fn wanted(&self, original: &Sequence, current: &Sequence) -> f64 {
        let y = current.get(self.step, self.coord);
        match self.goal {
            TargetGoal::Value(v) => sign(v - y),
            TargetGoal::Direction(d) => sign(d),
            TargetGoal::Offset(d) => sign(original.get(self.step, self.coord) + d - y),
        }
    }
}

/// Steers the targeted output coordinates by repeatedly nudging input
/// coordinates whose Jacobian entry for the target is large compared with
/// their effect on every untargeted output.
///
/// For target `(j, o)` the input coordinate `(i, c)` scores
/// `|J[i][j][o, c]| / (max |J[i][k][o', c]| + κ)`, the max running over
/// untargeted `(k, o')`. Coordinates scoring at least `off_target_ratio` move
/// by `step_size · sgn(J[i][j][o, c]) · wanted`, where `wanted` is the sign
/// of the change the target still needs. Inputs after the last targeted step
/// have zero Jacobian and are never selected.
pub fn craft_sequential(
    p: &VanillaRnnParams,
    x: &Sequence,
    cfg: &SequentialAttackConfig,
) -> Result<AttackOutcome<Sequence>> {
    cfg.validate(p, x.len())?;
    let original = p.forward(x)?.output;
    let targeted = |k: usize, o: usize| cfg.targets.iter().any(|t| t.step == k && t.coord == o);
    let mut adv = x.clone();
    let mut output = original.clone();
    let mut iterations = 0;
    let mut diagnostic = None;

    loop {
        if cfg.targets.iter().all(|t| t.satisfied(&original, &output, cfg.delta)) {
            break;
        }
        if iterations == cfg.max_iters {
            diagnostic = Some(format!("targets not reached within {} iterations", cfg.max_iters));
            break;
        }
        let jac = rnn_jacobian(p, &adv)?;
        let mut step = Sequence::zeros(x.len(), x.width());
        let mut selected = 0usize;
        for t in cfg.targets.iter().filter(|t| !t.satisfied(&original, &output, cfg.delta)) {
            let wanted = t.wanted(&original, &output);
            for i in 0..=t.step {
                for c in 0..x.width() {
                    let on = jac.get(i, c, t.step, t.coord);
                    if on == 0.0 {
                        continue;
                    }
                    let mut off: f64 = 0.0;
                    for k in i..x.len() {
                        for o in 0..p.output_dim() {
                            if !targeted(k, o) {
                                off = off.max(jac.get(i, c, k, o).abs());
                            }
                        }
                    }
                    if on.abs() / (off + SELECTIVITY_KAPPA) >= cfg.off_target_ratio {
                        let v = step.get(i, c) + cfg.step_size * sign(on) * wanted;
                        step.set(i, c, v);
                        selected += 1;
                    }
                }
            }
        }
        if selected == 0 {
            diagnostic = Some(format!(
                "no input coordinate reaches the selectivity ratio {} for the remaining targets",
                cfg.off_target_ratio
            ));
            break;
        }
        for i in 0..x.len() {
            for c in 0..x.width() {
                adv.set(i, c, adv.get(i, c) + step.get(i, c));
            }
        }
        output = p.forward(&adv)?.output;
        iterations += 1;
    }

    let success = cfg.targets.iter().all(|t| t.satisfied(&original, &output, cfg.delta));
    let delta = adv.sub(x)?;
    let changed_positions = (0..x.len())
        .filter(|&t| delta.step(t).iter().any(|&v| v != 0.0))
        .collect();
    Ok(AttackOutcome {
        perturbation_norm: delta.norm_inf(),
        adversarial: adv,
        success,
        changed_positions,
        iterations,
        diagnostic: if success { None } else { diagnostic },
    })
}
