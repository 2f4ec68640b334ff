//! Small recurrent networks, their exact input Jacobians obtained by
//! unfolding the recurrence over time, and adversarial sequence crafting
//! driven by those Jacobians.
//!
//! * [`models`]: vanilla sequence-to-sequence RNN and LSTM sentiment classifier.
//! * [`diff`]: input Jacobians, cost gradients and a finite-difference oracle.
//! * [`attacks`]: fast gradient sign, dictionary word swaps, and
//!   step-targeted perturbation of sequential outputs.
//! * [`data`]: embedding dictionaries, corpora and synthetic generators.
//! * [`training`]: gradient descent for both models.

pub mod attacks;
pub mod data;
pub mod diff;
pub mod error;
pub mod linalg;
pub mod models;
pub mod training;

pub use error::{Error, Result};
pub use linalg::{Matrix, Rng, Vector};
pub use models::{
    LstmClassifierParams, Model, Sequence, TokenSequence, VanillaRnnParams, OOV_TOKEN,
};
