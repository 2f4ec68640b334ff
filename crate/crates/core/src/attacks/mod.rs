//! Adversarial crafting for both architectures.
//!
//! * [`fgsm`]: one-shot `x + ε·sgn(∇ₓ cost)` on continuous sequences.
//! * [`craft_word_swap`]: greedy dictionary substitutions guided by the sign
//!   of the classifier's embedding Jacobian.
//! * [`craft_sequential`]: iterative perturbation of input coordinates that
//!   drive one output step much more than the others.

mod fgsm;
mod sequential;
mod wordswap;

pub use fgsm::{fgsm, fgsm_model, AttackInput, FgsmConfig};
pub use sequential::{craft_sequential, SequentialAttackConfig, StepTarget, TargetGoal, SELECTIVITY_KAPPA};
pub use wordswap::{craft_word_swap, SwapRecord, WordSwapConfig, WordSwapOutcome};

use serde::{Deserialize, Serialize};

/// Result of any crafting procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome<A> {
    pub adversarial: A,
    pub success: bool,
    /// Word positions (token inputs) or input steps (continuous inputs) that
    /// differ from the original.
    pub changed_positions: Vec<usize>,
    /// ∞-norm of the perturbation for continuous inputs, number of changed
    /// words for token inputs.
    pub perturbation_norm: f64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
