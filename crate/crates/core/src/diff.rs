//! Input derivatives of both models, computed on the graph unfolded over time.
//!
//! For the vanilla RNN the sensitivity of output step `j` is carried backwards
//! as an `output_dim × hidden_dim` matrix, one pass per output step:
//!
//! ```text
//! G ← w_out
//! for k = j, j-1, …, 0:
//!     A ← G · diag(φ'(h(k)))
//!     J[k][j] ← A · w_in
//!     G ← A · w
//! ```
//!
//! Blocks with `k > j` are never touched and stay exactly zero.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::models::{LstmClassifierParams, Sequence, TokenSequence, VanillaRnnParams, NUM_CLASSES};
use crate::training::{classifier_cross_entropy, Cost};

/// `blocks[i][j] = ∂y(j)/∂x(i)`, each of shape `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianTensor {
    in_dim: usize,
    out_dim: usize,
    blocks: Vec<Vec<Matrix>>,
}

impl JacobianTensor {
    pub fn zeros(input_len: usize, output_len: usize, in_dim: usize, out_dim: usize) -> Self {
        JacobianTensor {
            in_dim,
            out_dim,
            blocks: vec![vec![Matrix::zeros(out_dim, in_dim); output_len]; input_len],
        }
    }

    pub fn input_len(&self) -> usize {
        self.blocks.len()
    }

    pub fn output_len(&self) -> usize {
        self.blocks.first().map_or(0, Vec::len)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn block(&self, i: usize, j: usize) -> &Matrix {
        &self.blocks[i][j]
    }

    /// `∂y(j)[out_coord] / ∂x(i)[in_coord]`.
    pub fn get(&self, i: usize, in_coord: usize, j: usize, out_coord: usize) -> f64 {
        self.blocks[i][j][(out_coord, in_coord)]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(Matrix::is_finite)
    }

    /// Largest `|self − reference| / max(1, |reference|)` over all entries.
    pub fn max_relative_error(&self, reference: &JacobianTensor) -> Result<f64> {
        if self.input_len() != reference.input_len()
            || self.output_len() != reference.output_len()
            || self.in_dim != reference.in_dim
            || self.out_dim != reference.out_dim
        {
            return Err(Error::Shape("Jacobian tensors of different shapes".into()));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.blocks.iter().flatten().zip(reference.blocks.iter().flatten()) {
            for (x, r) in a.as_slice().iter().zip(b.as_slice()) {
                worst = worst.max((x - r).abs() / r.abs().max(1.0));
            }
        }
        Ok(worst)
    }

    /// One row per `(input step, input coordinate)`, one column per
    /// `(output step, output coordinate)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("in_step,in_coord");
        for j in 0..self.output_len() {
            for o in 0..self.out_dim {
                let _ = write!(out, ",y{j}_{o}");
            }
        }
        out.push('\n');
        for i in 0..self.input_len() {
            for c in 0..self.in_dim {
                let _ = write!(out, "{i},{c}");
                for j in 0..self.output_len() {
                    for o in 0..self.out_dim {
                        let _ = write!(out, ",{:e}", self.get(i, c, j, o));
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Exact `∂y(j)/∂x(i)` for every pair of steps.
pub fn rnn_jacobian(p: &VanillaRnnParams, x: &Sequence) -> Result<JacobianTensor> {
    let trace = p.forward(x)?;
    let t = x.len();
    let mut jac = JacobianTensor::zeros(t, t, p.input_dim(), p.output_dim());
    for j in 0..t {
        let mut sens = p.w_out.clone();
        for k in (0..=j).rev() {
            let deriv: Vec<f64> = trace
                .hidden
                .step(k)
                .iter()
                .map(|&h| p.activation.derivative_at_output(h))
                .collect();
            let a = sens.scale_cols(&deriv);
            jac.blocks[k][j] = a.matmul(&p.w_in)?;
            if k > 0 {
                sens = a.matmul(&p.w)?;
            }
        }
    }
    Ok(jac)
}

/// Gradients of each class logit with respect to the embedding fed in at
/// every word position.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingJacobian {
    /// `columns[i][class]`.
    columns: Vec<Vec<Vector>>,
}

impl EmbeddingJacobian {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// `∂logit[class] / ∂embedding(i)`.
    pub fn get(&self, position: usize, class: usize) -> &Vector {
        &self.columns[position][class]
    }

    /// L1 norm of the gradient at `position` for `class`.
    pub fn saliency(&self, position: usize, class: usize) -> f64 {
        self.columns[position][class].norm_l1()
    }

    pub fn is_finite(&self) -> bool {
        self.columns.iter().flatten().all(Vector::is_finite)
    }

    /// The same numbers laid out as a tensor with one output step holding
    /// both logits, for comparison against [`finite_diff_jacobian`].
    pub fn to_tensor(&self) -> JacobianTensor {
        let embed = self.columns.first().map_or(0, |c| c[0].dim());
        let mut jac = JacobianTensor::zeros(self.len(), 1, embed, NUM_CLASSES);
        for (i, col) in self.columns.iter().enumerate() {
            for (class, g) in col.iter().enumerate() {
                jac.blocks[i][0].row_mut(class).copy_from_slice(g.as_slice());
            }
        }
        jac
    }
}

pub fn classifier_embedding_jacobian(p: &LstmClassifierParams, s: &TokenSequence) -> Result<EmbeddingJacobian> {
    let trace = p.forward(s)?;
    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    for class in 0..NUM_CLASSES {
        let mut seed = Vector::zeros(NUM_CLASSES);
        seed[class] = 1.0;
        per_class.push(p.backward_inputs(&trace, &seed)?);
    }
    let columns = (0..s.len())
        .map(|i| per_class.iter().map(|g| g[i].clone()).collect())
        .collect();
    Ok(EmbeddingJacobian { columns })
}

/// `∂cost/∂x(i)` for every input step.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGradient {
    pub steps: Vec<Vector>,
}

impl CostGradient {
    pub fn as_sequence(&self) -> Result<Sequence> {
        Sequence::new(self.steps.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.steps.iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

pub fn cost_input_gradient(
    p: &VanillaRnnParams,
    x: &Sequence,
    target: &Sequence,
    loss: &dyn Cost,
) -> Result<CostGradient> {
    let trace = p.forward(x)?;
    let d_output = loss.gradient(&trace.output, target)?;
    let grads = p.backward(x, &trace, &d_output)?;
    Ok(CostGradient { steps: grads.inputs })
}

/// Cross-entropy gradient of the classifier with respect to the embeddings.
pub fn classifier_cost_gradient(p: &LstmClassifierParams, s: &TokenSequence, label: usize) -> Result<CostGradient> {
    let trace = p.forward(s)?;
    let (_, d_logits) = classifier_cross_entropy(&trace.logits, label)?;
    Ok(CostGradient {
        steps: p.backward_inputs(&trace, &d_logits)?,
    })
}

/// Central differences `(f(x + h·e) − f(x − h·e)) / 2h` for every input
/// coordinate. `f` is treated as a black box.
pub fn finite_diff_jacobian<F>(f: F, x: &Sequence, h: f64) -> Result<JacobianTensor>
where
    F: Fn(&Sequence) -> Result<Sequence>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Parameter(format!("finite-difference step must be > 0, got {h}")));
    }
    let base = f(x)?;
    let mut jac = JacobianTensor::zeros(x.len(), base.len(), x.width(), base.width());
    for i in 0..x.len() {
        for c in 0..x.width() {
            let mut up = x.clone();
            up.set(i, c, x.get(i, c) + h);
            let mut down = x.clone();
            down.set(i, c, x.get(i, c) - h);
            let (fu, fd) = (f(&up)?, f(&down)?);
            fu.check_same_shape(&base)?;
            fd.check_same_shape(&base)?;
            for j in 0..base.len() {
                for o in 0..base.width() {
                    jac.blocks[i][j][(o, c)] = (fu.get(j, o) - fd.get(j, o)) / (2.0 * h);
                }
            }
        }
    }
    Ok(jac)
}

/// Logits of the classifier as a function of its embedded input, shaped for
/// [`finite_diff_jacobian`]: one output step with both logits.
pub fn classifier_logits_fn(p: &LstmClassifierParams) -> impl Fn(&Sequence) -> Result<Sequence> + '_ {
    move |x: &Sequence| {
        let out = p.forward_embedded(x.steps())?;
        Sequence::new(vec![out.logits])
    }
}

/// The embedded form of a token sequence.
pub fn embed(p: &LstmClassifierParams, s: &TokenSequence) -> Result<Sequence> {
    s.validate(p.vocab_size())?;
    Sequence::new(
        s.tokens()
            .iter()
            .map(|&t| Vector::from_vec(p.embedding.row(t).to_vec()))
            .collect(),
    )
}
