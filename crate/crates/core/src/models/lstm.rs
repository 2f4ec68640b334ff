use super::TokenSequence;
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, softmax, uniform_matrix, Matrix, Rng, Vector};

/// The classifier head is binary: 0 = negative, 1 = positive.
pub const NUM_CLASSES: usize = 2;

/// One LSTM gate acting on the concatenation `[embedding; h(t-1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Gate {
    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.as_mut_slice().iter_mut().chain(self.bias.as_mut_slice().iter_mut())
    }

    fn zeros(hidden: usize, concat: usize) -> Self {
        Gate {
            weight: Matrix::zeros(hidden, concat),
            bias: Vector::zeros(hidden),
        }
    }

    fn random(rng: &mut Rng, hidden: usize, concat: usize, scale: f64) -> Self {
        Gate {
            weight: uniform_matrix(rng, hidden, concat, scale),
            bias: Vector::from_vec((0..hidden).map(|_| rng.uniform(-scale, scale)).collect()),
        }
    }

    fn preactivation(&self, z: &[f64]) -> Result<Vector> {
        let mut a = self.weight.matvec_slice(z)?;
        a.axpy(1.0, &self.bias)?;
        Ok(a)
    }
}

/// Embedding layer, a forget-gate LSTM without peepholes, mean pooling over
/// all hidden states, and a two-logit affine head.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmClassifierParams {
    /// `vocab_size × embed_dim`, one row per token id.
    pub embedding: Matrix,
    pub input_gate: Gate,
    pub forget_gate: Gate,
    pub output_gate: Gate,
    pub candidate: Gate,
    /// `2 × hidden_dim`.
    pub head_weight: Matrix,
    pub head_bias: Vector,
}

/// Everything the recurrence computed at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    /// `[embedding; h(t-1)]`.
    pub input: Vector,
    pub input_gate: Vector,
    pub forget_gate: Vector,
    pub output_gate: Vector,
    pub candidate: Vector,
    pub cell: Vector,
    pub cell_tanh: Vector,
    pub hidden: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmForward {
    pub steps: Vec<LstmStep>,
    pub pooled: Vector,
    pub logits: Vector,
    pub probs: Vector,
}

impl LstmForward {
    pub fn predicted_class(&self) -> usize {
        class_from_logits(&self.logits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGradients {
    /// Parameter gradients; embedding rows hold the scatter-added input gradients.
    pub params: LstmClassifierParams,
    /// Gradient with respect to the embedding fed in at each position.
    pub embeddings: Vec<Vector>,
}

impl LstmClassifierParams {
    pub fn zeros(vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        let concat = embed_dim + hidden_dim;
        LstmClassifierParams {
            embedding: Matrix::zeros(vocab_size, embed_dim),
            input_gate: Gate::zeros(hidden_dim, concat),
            forget_gate: Gate::zeros(hidden_dim, concat),
            output_gate: Gate::zeros(hidden_dim, concat),
            candidate: Gate::zeros(hidden_dim, concat),
            head_weight: Matrix::zeros(NUM_CLASSES, hidden_dim),
            head_bias: Vector::zeros(NUM_CLASSES),
        }
    }

    /// Recurrent and head weights uniform in `[-scale, scale)` around the
    /// given embedding table.
    pub fn random_with_embedding(rng: &mut Rng, embedding: Matrix, hidden_dim: usize, scale: f64) -> Self {
        let concat = embedding.cols() + hidden_dim;
        LstmClassifierParams {
            input_gate: Gate::random(rng, hidden_dim, concat, scale),
            forget_gate: Gate::random(rng, hidden_dim, concat, scale),
            output_gate: Gate::random(rng, hidden_dim, concat, scale),
            candidate: Gate::random(rng, hidden_dim, concat, scale),
            head_weight: uniform_matrix(rng, NUM_CLASSES, hidden_dim, scale),
            head_bias: Vector::from_vec((0..NUM_CLASSES).map(|_| rng.uniform(-scale, scale)).collect()),
            embedding,
        }
    }

    pub fn random(rng: &mut Rng, vocab_size: usize, embed_dim: usize, hidden_dim: usize, scale: f64) -> Self {
        let embedding = uniform_matrix(rng, vocab_size, embed_dim, scale);
        Self::random_with_embedding(rng, embedding, hidden_dim, scale)
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.head_weight.cols()
    }

    fn gates(&self) -> [&Gate; 4] {
        [&self.input_gate, &self.forget_gate, &self.output_gate, &self.candidate]
    }

    fn gates_mut(&mut self) -> [&mut Gate; 4] {
        [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
            &mut self.candidate,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (e, h) = (self.embed_dim(), self.hidden_dim());
        if self.vocab_size() < 2 {
            return Err(Error::Shape(format!(
                "classifier vocabulary must hold at least 2 words, got {}",
                self.vocab_size()
            )));
        }
        for gate in self.gates() {
            if gate.weight.shape() != (h, e + h) || gate.bias.dim() != h {
                return Err(Error::shape(
                    format!("gate weight {h}x{} and bias {h}", e + h),
                    format!(
                        "{}x{} and {}",
                        gate.weight.rows(),
                        gate.weight.cols(),
                        gate.bias.dim()
                    ),
                ));
            }
        }
        if self.head_weight.rows() != NUM_CLASSES || self.head_bias.dim() != NUM_CLASSES {
            return Err(Error::Shape("classifier head must have exactly 2 outputs".into()));
        }
        if !self.to_flat().iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter("non-finite weight in LSTM classifier".into()));
        }
        Ok(())
    }

    pub fn forward(&self, s: &TokenSequence) -> Result<LstmForward> {
        s.validate(self.vocab_size())?;
        self.forward_embedded(
            &s.tokens()
                .iter()
                .map(|&t| Vector::from_vec(self.embedding.row(t).to_vec()))
                .collect::<Vec<_>>(),
        )
    }

    /// Forward pass on already-embedded inputs. Lets differentiation probe
    /// the network off the finite set of dictionary embeddings.
    pub fn forward_embedded(&self, inputs: &[Vector]) -> Result<LstmForward> {
        if inputs.is_empty() {
            return Err(Error::Input("cannot classify an empty sequence".into()));
        }
        let (e, hd) = (self.embed_dim(), self.hidden_dim());
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut pooled = vec![0.0; hd];
        let mut steps = Vec::with_capacity(inputs.len());

        for x in inputs {
            if x.dim() != e {
                return Err(Error::shape(format!("embedding of dim {e}"), x.dim()));
            }
            let z: Vec<f64> = x.iter().copied().chain(h.iter().copied()).collect();
            let i = self.input_gate.preactivation(&z)?.map(sigmoid);
            let f = self.forget_gate.preactivation(&z)?.map(sigmoid);
            let o = self.output_gate.preactivation(&z)?.map(sigmoid);
            let g = self.candidate.preactivation(&z)?.map(f64::tanh);
            for k in 0..hd {
                c[k] = f[k] * c[k] + i[k] * g[k];
            }
            let cell_tanh: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            for k in 0..hd {
                h[k] = o[k] * cell_tanh[k];
                pooled[k] += h[k];
            }
            steps.push(LstmStep {
                input: z.into(),
                input_gate: i,
                forget_gate: f,
                output_gate: o,
                candidate: g,
                cell: c.clone().into(),
                cell_tanh: cell_tanh.into(),
                hidden: h.clone().into(),
            });
        }

        let n = inputs.len() as f64;
        let pooled = Vector::from_vec(pooled.into_iter().map(|v| v / n).collect());
        let mut logits = self.head_weight.matvec(&pooled)?;
        logits.axpy(1.0, &self.head_bias)?;
        let probs = softmax(&logits);
        Ok(LstmForward {
            steps,
            pooled,
            logits,
            probs,
        })
    }

    /// Gradients of `d_logits · logits` with respect to every parameter and
    /// every embedded input.
    pub fn backward(&self, s: &TokenSequence, trace: &LstmForward, d_logits: &Vector) -> Result<LstmGradients> {
        let mut params = LstmClassifierParams::zeros(self.vocab_size(), self.embed_dim(), self.hidden_dim());
        let embeddings = self.backward_impl(trace, d_logits, Some(&mut params))?;
        for (&tok, g) in s.tokens().iter().zip(&embeddings) {
            for (dst, v) in params.embedding.row_mut(tok).iter_mut().zip(g.iter()) {
                *dst += v;
            }
        }
        Ok(LstmGradients { params, embeddings })
    }

    /// Only the gradients with respect to the embedded inputs.
    pub fn backward_inputs(&self, trace: &LstmForward, d_logits: &Vector) -> Result<Vec<Vector>> {
        self.backward_impl(trace, d_logits, None)
    }

    fn backward_impl(
        &self,
        trace: &LstmForward,
        d_logits: &Vector,
        mut grads: Option<&mut LstmClassifierParams>,
    ) -> Result<Vec<Vector>> {
        if d_logits.dim() != NUM_CLASSES {
            return Err(Error::shape("2 logit gradients", d_logits.dim()));
        }
        let (e, hd) = (self.embed_dim(), self.hidden_dim());
        let n = trace.steps.len();
        let d_pooled = self.head_weight.matvec_transposed(d_logits)?;
        if let Some(g) = grads.as_deref_mut() {
            g.head_weight.add_outer(1.0, d_logits.as_slice(), trace.pooled.as_slice())?;
            g.head_bias.axpy(1.0, d_logits)?;
        }
        let d_step_h = d_pooled.scale(1.0 / n as f64);

        let mut d_inputs = vec![Vector::zeros(e); n];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let zero = Vector::zeros(hd);

        for t in (0..n).rev() {
            let st = &trace.steps[t];
            let c_prev = if t == 0 { &zero } else { &trace.steps[t - 1].cell };
            let mut da = [vec![0.0; hd], vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]];
            for k in 0..hd {
                let dh = d_step_h[k] + dh_next[k];
                let (i, f, o, g) = (
                    st.input_gate[k],
                    st.forget_gate[k],
                    st.output_gate[k],
                    st.candidate[k],
                );
                let tc = st.cell_tanh[k];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev[k];
                dc_next[k] = dc * f;
                da[0][k] = d_i * i * (1.0 - i);
                da[1][k] = d_f * f * (1.0 - f);
                da[2][k] = d_o * o * (1.0 - o);
                da[3][k] = d_g * (1.0 - g * g);
            }

            let mut dz = vec![0.0; e + hd];
            for (gate, d) in self.gates().into_iter().zip(&da) {
                for (r, &dr) in d.iter().enumerate() {
                    if dr == 0.0 {
                        continue;
                    }
                    for (acc, w) in dz.iter_mut().zip(gate.weight.row(r)) {
                        *acc += dr * w;
                    }
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                for (gate, d) in g.gates_mut().into_iter().zip(&da) {
                    gate.weight.add_outer(1.0, d, st.input.as_slice())?;
                    for (b, v) in gate.bias.as_mut_slice().iter_mut().zip(d) {
                        *b += v;
                    }
                }
            }
            d_inputs[t] = Vector::from_vec(dz[..e].to_vec());
            dh_next.copy_from_slice(&dz[e..]);
        }
        Ok(d_inputs)
    }

    /// Serialization order: embedding, gates (input, forget, output,
    /// candidate; weight then bias), head weight, head bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.embedding.as_slice().to_vec();
        for gate in self.gates() {
            out.extend_from_slice(gate.weight.as_slice());
            out.extend_from_slice(gate.bias.as_slice());
        }
        out.extend_from_slice(self.head_weight.as_slice());
        out.extend_from_slice(self.head_bias.as_slice());
        out
    }

    pub fn from_flat(vocab_size: usize, embed_dim: usize, hidden_dim: usize, data: &[f64]) -> Result<Self> {
        let mut p = LstmClassifierParams::zeros(vocab_size, embed_dim, hidden_dim);
        let expected = p.num_params();
        if data.len() != expected {
            return Err(Error::shape(format!("{expected} parameters"), data.len()));
        }
        for (dst, &v) in p.flat_mut().zip(data) {
            *dst = v;
        }
        Ok(p)
    }

    pub fn num_params(&self) -> usize {
        let (e, h, v) = (self.embed_dim(), self.hidden_dim(), self.vocab_size());
        v * e + 4 * (h * (e + h) + h) + NUM_CLASSES * h + NUM_CLASSES
    }

    pub(crate) fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let LstmClassifierParams {
            embedding,
            input_gate,
            forget_gate,
            output_gate,
            candidate,
            head_weight,
            head_bias,
        } = self;
        embedding
            .as_mut_slice()
            .iter_mut()
            .chain(input_gate.values_mut())
            .chain(forget_gate.values_mut())
            .chain(output_gate.values_mut())
            .chain(candidate.values_mut())
            .chain(head_weight.as_mut_slice().iter_mut())
            .chain(head_bias.as_mut_slice().iter_mut())
    }

    /// `self += alpha · other`, parameter by parameter.
    pub fn axpy(&mut self, alpha: f64, other: &LstmClassifierParams) {
        for (a, b) in self.flat_mut().zip(other.to_flat()) {
            *a += alpha * b;
        }
    }
}

/// Argmax over the two logits; equal logits resolve to class 0.
pub fn class_from_logits(logits: &Vector) -> usize {
    logits.argmax()
}

pub fn lstm_classify(p: &LstmClassifierParams, s: &TokenSequence) -> Result<LstmForward> {
    p.forward(s)
}

pub fn predict_class(p: &LstmClassifierParams, s: &TokenSequence) -> Result<usize> {
    Ok(p.forward(s)?.predicted_class())
}
