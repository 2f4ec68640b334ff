use serde::{Deserialize, Serialize};

use super::Sequence;
use crate::error::{Error, Result};
use crate::linalg::{uniform_matrix, Matrix, Rng, Vector};

/// Squashing applied to the hidden state. `Identity` only exists so tests can
/// probe the network as a linear map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    #[default]
    Tanh,
    Identity,
}

impl HiddenActivation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            HiddenActivation::Tanh => x.tanh(),
            HiddenActivation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn derivative_at_output(self, h: f64) -> f64 {
        match self {
            HiddenActivation::Tanh => 1.0 - h * h,
            HiddenActivation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            HiddenActivation::Tanh => 0,
            HiddenActivation::Identity => 1,
        }
    }

    pub(crate) fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(HiddenActivation::Tanh),
            1 => Some(HiddenActivation::Identity),
            _ => None,
        }
    }
}

/// Weights of the Elman-style network
/// `h(t) = tanh(w_in·x(t) + w·h(t-1) + b_h)`, `y(t) = w_out·h(t) + b_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaRnnParams {
    pub w_in: Matrix,
    pub w: Matrix,
    pub w_out: Matrix,
    pub b_h: Vector,
    pub b_y: Vector,
    pub activation: HiddenActivation,
}

/// Output sequence plus the hidden states needed for differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnForward {
    pub output: Sequence,
    pub hidden: Sequence,
}

/// Gradients of a scalar with respect to every parameter and input step.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnGradients {
    pub params: VanillaRnnParams,
    pub inputs: Vec<Vector>,
}

impl VanillaRnnParams {
    pub fn new(w_in: Matrix, w: Matrix, w_out: Matrix, b_h: Vector, b_y: Vector) -> Result<Self> {
        let p = VanillaRnnParams {
            w_in,
            w,
            w_out,
            b_h,
            b_y,
            activation: HiddenActivation::Tanh,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        VanillaRnnParams {
            w_in: Matrix::zeros(hidden_dim, input_dim),
            w: Matrix::zeros(hidden_dim, hidden_dim),
            w_out: Matrix::zeros(output_dim, hidden_dim),
            b_h: Vector::zeros(hidden_dim),
            b_y: Vector::zeros(output_dim),
            activation: HiddenActivation::Tanh,
        }
    }

    /// Every weight and bias uniform in `[-scale, scale)`.
    pub fn random(rng: &mut Rng, input_dim: usize, hidden_dim: usize, output_dim: usize, scale: f64) -> Self {
        let w_in = uniform_matrix(rng, hidden_dim, input_dim, scale);
        let w = uniform_matrix(rng, hidden_dim, hidden_dim, scale);
        let w_out = uniform_matrix(rng, output_dim, hidden_dim, scale);
        let b_h = Vector::from_vec((0..hidden_dim).map(|_| rng.uniform(-scale, scale)).collect());
        let b_y = Vector::from_vec((0..output_dim).map(|_| rng.uniform(-scale, scale)).collect());
        VanillaRnnParams {
            w_in,
            w,
            w_out,
            b_h,
            b_y,
            activation: HiddenActivation::Tanh,
        }
    }

    pub fn with_activation(mut self, activation: HiddenActivation) -> Self {
        self.activation = activation;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w_out.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.w.rows();
        let checks = [
            ("w", self.w.cols(), h),
            ("w_in", self.w_in.rows(), h),
            ("w_out", self.w_out.cols(), h),
            ("b_h", self.b_h.dim(), h),
            ("b_y", self.b_y.dim(), self.w_out.rows()),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Shape(format!(
                    "parameter {name} inconsistent with hidden size {h}: {got} vs {want}"
                )));
            }
        }
        let finite = self.w_in.is_finite()
            && self.w.is_finite()
            && self.w_out.is_finite()
            && self.b_h.is_finite()
            && self.b_y.is_finite();
        if !finite {
            return Err(Error::Parameter("non-finite weight in vanilla RNN".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Sequence) -> Result<RnnForward> {
        if x.width() != self.input_dim() {
            return Err(Error::shape(
                format!("input steps of width {}", self.input_dim()),
                format!("width {}", x.width()),
            ));
        }
        let mut h = Vector::zeros(self.hidden_dim());
        let mut hidden = Vec::with_capacity(x.len());
        let mut output = Vec::with_capacity(x.len());
        for step in x.steps() {
            let mut pre = self.w_in.matvec(step)?;
            pre.axpy(1.0, &self.w.matvec(&h)?)?;
            pre.axpy(1.0, &self.b_h)?;
            h = pre.map(|v| self.activation.apply(v));
            let mut y = self.w_out.matvec(&h)?;
            y.axpy(1.0, &self.b_y)?;
            hidden.push(h.clone());
            output.push(y);
        }
        Ok(RnnForward {
            output: Sequence::new(output)?,
            hidden: Sequence::new(hidden)?,
        })
    }

    /// Backpropagation through time for an arbitrary scalar whose gradient
    /// with respect to each output step is `d_output[t]`.
    pub fn backward(&self, x: &Sequence, trace: &RnnForward, d_output: &[Vector]) -> Result<RnnGradients> {
        if d_output.len() != x.len() {
            return Err(Error::shape(
                format!("{} output gradients", x.len()),
                d_output.len(),
            ));
        }
        let mut grads = VanillaRnnParams::zeros(self.input_dim(), self.hidden_dim(), self.output_dim())
            .with_activation(self.activation);
        let mut inputs = vec![Vector::zeros(self.input_dim()); x.len()];
        let zero_h = Vector::zeros(self.hidden_dim());
        // Gradient flowing into h(t) from step t+1.
        let mut carry = Vector::zeros(self.hidden_dim());

        for t in (0..x.len()).rev() {
            let h = trace.hidden.step(t);
            let h_prev = if t == 0 { &zero_h } else { trace.hidden.step(t - 1) };
            let gy = &d_output[t];

            grads.w_out.add_outer(1.0, gy.as_slice(), h.as_slice())?;
            grads.b_y.axpy(1.0, gy)?;

            let mut dh = self.w_out.matvec_transposed(gy)?;
            dh.axpy(1.0, &carry)?;
            let da = Vector::from_vec(
                dh.iter()
                    .zip(h.iter())
                    .map(|(g, &hv)| g * self.activation.derivative_at_output(hv))
                    .collect(),
            );

            grads.w_in.add_outer(1.0, da.as_slice(), x.step(t).as_slice())?;
            grads.w.add_outer(1.0, da.as_slice(), h_prev.as_slice())?;
            grads.b_h.axpy(1.0, &da)?;
            inputs[t] = self.w_in.matvec_transposed(&da)?;
            carry = self.w.matvec_transposed(&da)?;
        }
        Ok(RnnGradients { params: grads, inputs })
    }

    /// All parameters as one flat buffer, in serialization order.
    pub fn to_flat(&self) -> Vec<f64> {
        [
            self.w_in.as_slice(),
            self.w.as_slice(),
            self.w_out.as_slice(),
            self.b_h.as_slice(),
            self.b_y.as_slice(),
        ]
        .concat()
    }

    pub fn from_flat(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        activation: HiddenActivation,
        data: &[f64],
    ) -> Result<Self> {
        let sizes = [
            hidden_dim * input_dim,
            hidden_dim * hidden_dim,
            output_dim * hidden_dim,
            hidden_dim,
            output_dim,
        ];
        let total: usize = sizes.iter().sum();
        if data.len() != total {
            return Err(Error::shape(format!("{total} parameters"), data.len()));
        }
        let mut rest = data;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let p = VanillaRnnParams {
            w_in: Matrix::from_vec(hidden_dim, input_dim, take(sizes[0]))?,
            w: Matrix::from_vec(hidden_dim, hidden_dim, take(sizes[1]))?,
            w_out: Matrix::from_vec(output_dim, hidden_dim, take(sizes[2]))?,
            b_h: take(sizes[3]).into(),
            b_y: take(sizes[4]).into(),
            activation,
        };
        Ok(p)
    }

    pub(crate) fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w_in
            .as_mut_slice()
            .iter_mut()
            .chain(self.w.as_mut_slice())
            .chain(self.w_out.as_mut_slice())
            .chain(self.b_h.as_mut_slice())
            .chain(self.b_y.as_mut_slice())
    }

    /// `self += alpha · other`, parameter by parameter.
    pub fn axpy(&mut self, alpha: f64, other: &VanillaRnnParams) {
        for (a, b) in self.flat_mut().zip(other.to_flat()) {
            *a += alpha * b;
        }
    }
}

pub fn rnn_forward(p: &VanillaRnnParams, x: &Sequence) -> Result<RnnForward> {
    p.forward(x)
}
