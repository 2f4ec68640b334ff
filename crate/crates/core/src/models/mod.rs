//! The two recurrent architectures: a vanilla sequence-to-sequence RNN and an
//! LSTM sentiment classifier with mean pooling.

mod io;
mod lstm;
mod rnn;

pub use io::{
    load_model, read_model, save_model, sidecar_path, write_model, ModelMetadata, FORMAT_VERSION, MAGIC,
};
pub use lstm::{
    class_from_logits, lstm_classify, predict_class, Gate, LstmClassifierParams, LstmForward,
    LstmGradients, LstmStep, NUM_CLASSES,
};
pub use rnn::{rnn_forward, HiddenActivation, RnnForward, RnnGradients, VanillaRnnParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// A time-ordered list of equal-width real vectors, at least one step long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vector>", into = "Vec<Vector>")]
pub struct Sequence {
    steps: Vec<Vector>,
}

impl Sequence {
    pub fn new(steps: Vec<Vector>) -> Result<Self> {
        let width = match steps.first() {
            Some(s) => s.dim(),
            None => return Err(Error::Input("a sequence needs at least one step".into())),
        };
        if let Some((t, s)) = steps.iter().enumerate().find(|(_, s)| s.dim() != width) {
            return Err(Error::shape(
                format!("every step of width {width}"),
                format!("step {t} of width {}", s.dim()),
            ));
        }
        Ok(Sequence { steps })
    }

    pub fn zeros(len: usize, width: usize) -> Self {
        Sequence {
            steps: vec![Vector::zeros(width); len.max(1)],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Sequence::new(rows.iter().cloned().map(Vector::from).collect())
    }

    /// Build from a flat step-major buffer.
    pub fn from_flat(len: usize, width: usize, data: &[f64]) -> Result<Self> {
        if data.len() != len * width || len == 0 {
            return Err(Error::shape(
                format!("{len}x{width} values (len >= 1)"),
                format!("{} values", data.len()),
            ));
        }
        Sequence::new(data.chunks_exact(width.max(1)).map(|c| c.to_vec().into()).collect())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn width(&self) -> usize {
        self.steps[0].dim()
    }

    pub fn step(&self, t: usize) -> &Vector {
        &self.steps[t]
    }

    pub fn steps(&self) -> &[Vector] {
        &self.steps
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.steps[t][c]
    }

    pub fn set(&mut self, t: usize, c: usize, value: f64) {
        self.steps[t][c] = value;
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.steps.iter().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.steps.iter().all(Vector::is_finite)
    }

    pub fn sub(&self, other: &Sequence) -> Result<Sequence> {
        self.check_same_shape(other)?;
        let steps = self
            .steps
            .iter()
            .zip(&other.steps)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Sequence { steps })
    }

    /// Largest absolute coordinate over all steps.
    pub fn norm_inf(&self) -> f64 {
        self.steps.iter().map(Vector::norm_inf).fold(0.0, f64::max)
    }

    pub fn check_same_shape(&self, other: &Sequence) -> Result<()> {
        if self.len() != other.len() || self.width() != other.width() {
            return Err(Error::shape(
                format!("sequence of {}x{}", self.len(), self.width()),
                format!("{}x{}", other.len(), other.width()),
            ));
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vector>> for Sequence {
    type Error = Error;

    fn try_from(steps: Vec<Vector>) -> Result<Self> {
        Sequence::new(steps)
    }
}

impl From<Sequence> for Vec<Vector> {
    fn from(s: Sequence) -> Self {
        s.steps
    }
}

/// Token id reserved for words outside the dictionary.
pub const OOV_TOKEN: usize = 0;

/// A nonempty list of dictionary token ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TokenSequence {
    tokens: Vec<usize>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Input("a token sequence needs at least one token".into()));
        }
        Ok(TokenSequence { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn with_token(&self, position: usize, token: usize) -> TokenSequence {
        let mut tokens = self.tokens.clone();
        tokens[position] = token;
        TokenSequence { tokens }
    }

    /// Check every id against a vocabulary of `vocab_size` entries.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        match self.tokens.iter().position(|&t| t >= vocab_size) {
            Some(pos) => Err(Error::Input(format!(
                "token id {} at position {pos} is outside the vocabulary of {vocab_size}",
                self.tokens[pos]
            ))),
            None => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for TokenSequence {
    type Error = Error;

    fn try_from(tokens: Vec<usize>) -> Result<Self> {
        TokenSequence::new(tokens)
    }
}

impl From<TokenSequence> for Vec<usize> {
    fn from(s: TokenSequence) -> Self {
        s.tokens
    }
}

/// Either architecture, as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Sequential(VanillaRnnParams),
    Classifier(LstmClassifierParams),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Sequential(_) => "sequential",
            Model::Classifier(_) => "classifier",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_rejects_ragged_steps() {
        let err = Sequence::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        assert!(Sequence::new(vec![]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let s = Sequence::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let back = Sequence::from_flat(3, 2, &s.to_flat()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn token_validation() {
        let s = TokenSequence::new(vec![0, 3, 9]).unwrap();
        assert!(s.validate(10).is_ok());
        assert!(matches!(s.validate(9), Err(Error::Input(_))));
        assert!(TokenSequence::new(vec![]).is_err());
    }
}
