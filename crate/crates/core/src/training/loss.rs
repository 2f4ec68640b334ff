use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_softmax, softmax, Vector};
use crate::models::Sequence;

/// A differentiable scalar cost between a model's output sequence and a
/// target sequence.
pub trait Cost {
    fn value(&self, output: &Sequence, target: &Sequence) -> Result<f64>;

    /// `∂cost/∂output(t)` for every step.
    fn gradient(&self, output: &Sequence, target: &Sequence) -> Result<Vec<Vector>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean over every step and coordinate of the squared difference.
    MeanSquaredError,
    /// Per-step softmax cross-entropy against target distributions, averaged
    /// over steps. For the classifier this is the usual `-log p[label]`.
    CrossEntropy,
}

fn check(output: &Sequence, target: &Sequence) -> Result<()> {
    output
        .check_same_shape(target)
        .map_err(|_| Error::shape(format!("target of {}x{}", output.len(), output.width()), format!("{}x{}", target.len(), target.width())))
}

impl Cost for Loss {
    fn value(&self, output: &Sequence, target: &Sequence) -> Result<f64> {
        check(output, target)?;
        match self {
            Loss::MeanSquaredError => {
                let n = (output.len() * output.width()) as f64;
                let sum: f64 = output
                    .to_flat()
                    .iter()
                    .zip(target.to_flat())
                    .map(|(y, t)| (y - t).powi(2))
                    .sum();
                Ok(sum / n)
            }
            Loss::CrossEntropy => {
                let total: f64 = output
                    .steps()
                    .iter()
                    .zip(target.steps())
                    .map(|(y, t)| -log_softmax(y).iter().zip(t.iter()).map(|(l, p)| l * p).sum::<f64>())
                    .sum();
                Ok(total / output.len() as f64)
            }
        }
    }

    fn gradient(&self, output: &Sequence, target: &Sequence) -> Result<Vec<Vector>> {
        check(output, target)?;
        match self {
            Loss::MeanSquaredError => {
                let n = (output.len() * output.width()) as f64;
                output
                    .steps()
                    .iter()
                    .zip(target.steps())
                    .map(|(y, t)| Ok(y.sub(t)?.scale(2.0 / n)))
                    .collect()
            }
            Loss::CrossEntropy => {
                let n = output.len() as f64;
                Ok(output
                    .steps()
                    .iter()
                    .zip(target.steps())
                    .map(|(y, t)| {
                        let p = softmax(y);
                        let mass: f64 = t.iter().sum();
                        Vector::from_vec(
                            p.iter().zip(t.iter()).map(|(p, t)| (p * mass - t) / n).collect(),
                        )
                    })
                    .collect())
            }
        }
    }
}

/// `-log p[label]` and its gradient with respect to the logits.
pub fn classifier_cross_entropy(logits: &Vector, label: usize) -> Result<(f64, Vector)> {
    if label >= logits.dim() {
        return Err(Error::Input(format!("label {label} outside {} classes", logits.dim())));
    }
    let logp = log_softmax(logits);
    let p = softmax(logits);
    let mut grad = p;
    grad[label] -= 1.0;
    Ok((-logp[label], grad))
}
