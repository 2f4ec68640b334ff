//! Plain gradient descent for both architectures.
//!
//! The sequential model defaults to one update per pair on mean squared
//! error (full batch when `batch_size` is `None`); the classifier uses
//! shuffled minibatches on cross-entropy. Parameter gradients come from the models' own
//! backpropagation through time.

mod loss;

pub use loss::{classifier_cross_entropy, Cost, Loss};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingDictionary, LabeledCorpus, SeqPairSet};
use crate::error::{Error, Result};
use crate::linalg::Rng;
use crate::models::{LstmClassifierParams, Model, VanillaRnnParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub loss: Loss,
    pub seed: u64,
    pub init_scale: f64,
    pub hidden_dim: usize,
    /// Examples per update; `None` trains on the whole dataset per step.
    pub batch_size: Option<usize>,
    /// Rescale the gradient to this global L2 norm when it is exceeded.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 400,
            learning_rate: 1e-3,
            loss: Loss::MeanSquaredError,
            seed: 0,
            init_scale: 0.1,
            hidden_dim: 32,
            batch_size: Some(1),
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    /// Settings for the desk-scale sentiment classifier.
    pub fn classifier_default() -> Self {
        TrainConfig {
            epochs: 60,
            learning_rate: 0.5,
            loss: Loss::CrossEntropy,
            seed: 0,
            init_scale: 0.1,
            hidden_dim: 32,
            batch_size: Some(16),
            clip_norm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!("init_scale must be > 0, got {}", self.init_scale)));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be > 0, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// One entry per epoch: the training loss at the start of that epoch for
    /// full-batch runs, the running mean over minibatches otherwise.
    pub loss_curve: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_mse: Option<f64>,
    /// Not serialized so that reports stay byte-identical across runs.
    #[serde(skip)]
    pub wall_clock: Duration,
}

fn check_finite(epoch: usize, loss: f64) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { epoch, loss })
    }
}

fn clip(grads: &mut [f64], max_norm: Option<f64>) {
    if let Some(max) = max_norm {
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > max {
            let s = max / norm;
            grads.iter_mut().for_each(|g| *g *= s);
        }
    }
}

/// Mean loss and mean parameter gradient of the vanilla RNN over `pairs`.
pub fn sequential_loss_and_gradient(
    p: &VanillaRnnParams,
    pairs: &[(crate::models::Sequence, crate::models::Sequence)],
    loss: &dyn Cost,
) -> Result<(f64, VanillaRnnParams)> {
    let mut total = 0.0;
    let mut grad = VanillaRnnParams::zeros(p.input_dim(), p.hidden_dim(), p.output_dim())
        .with_activation(p.activation);
    let scale = 1.0 / pairs.len() as f64;
    for (x, y) in pairs {
        let trace = p.forward(x)?;
        total += loss.value(&trace.output, y)?;
        let d_out = loss.gradient(&trace.output, y)?;
        let g = p.backward(x, &trace, &d_out)?;
        grad.axpy(scale, &g.params);
    }
    Ok((total * scale, grad))
}

pub fn sequential_loss(p: &VanillaRnnParams, set: &SeqPairSet, loss: &dyn Cost) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in &set.pairs {
        total += loss.value(&p.forward(x)?.output, y)?;
    }
    Ok(total / set.len() as f64)
}

/// Trains a fresh vanilla RNN on `set`.
pub fn train_sequential(set: &SeqPairSet, cfg: &TrainConfig) -> Result<(VanillaRnnParams, TrainReport)> {
    cfg.validate()?;
    let (x0, y0) = set
        .pairs
        .first()
        .ok_or_else(|| Error::Input("cannot train on an empty pair set".into()))?;
    let mut rng = Rng::derive(cfg.seed, "train/sequential");
    let init = VanillaRnnParams::random(&mut rng, x0.width(), cfg.hidden_dim, y0.width(), cfg.init_scale);
    train_sequential_from(init, set, cfg)
}

/// Continues training from `params`.
pub fn train_sequential_from(
    mut params: VanillaRnnParams,
    set: &SeqPairSet,
    cfg: &TrainConfig,
) -> Result<(VanillaRnnParams, TrainReport)> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Input("cannot train on an empty pair set".into()));
    }
    let started = Instant::now();
    let mut rng = Rng::derive(cfg.seed, "train/sequential/order");
    let initial_loss = sequential_loss(&params, set, &cfg.loss)?;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..set.len()).collect();

    for epoch in 1..=cfg.epochs {
        match cfg.batch_size {
            None => {
                let (loss, grad) = sequential_loss_and_gradient(&params, &set.pairs, &cfg.loss)?;
                check_finite(epoch, loss)?;
                curve.push(loss);
                let mut flat = grad.to_flat();
                clip(&mut flat, cfg.clip_norm);
                for (w, g) in params.flat_mut().zip(flat) {
                    *w -= cfg.learning_rate * g;
                }
            }
            Some(batch) => {
                rng.shuffle(&mut order);
                let mut epoch_loss = 0.0;
                for chunk in order.chunks(batch) {
                    let pairs: Vec<_> = chunk.iter().map(|&i| set.pairs[i].clone()).collect();
                    let (loss, grad) = sequential_loss_and_gradient(&params, &pairs, &cfg.loss)?;
                    check_finite(epoch, loss)?;
                    epoch_loss += loss * chunk.len() as f64;
                    let mut flat = grad.to_flat();
                    clip(&mut flat, cfg.clip_norm);
                    for (w, g) in params.flat_mut().zip(flat) {
                        *w -= cfg.learning_rate * g;
                    }
                }
                curve.push(epoch_loss / set.len() as f64);
            }
        }
    }
    let final_loss = sequential_loss(&params, set, &cfg.loss)?;
    check_finite(cfg.epochs, final_loss)?;
    let final_mse = sequential_loss(&params, set, &Loss::MeanSquaredError)?;
    Ok((
        params,
        TrainReport {
            loss_curve: curve,
            initial_loss,
            final_loss,
            final_accuracy: None,
            final_mse: Some(final_mse),
            wall_clock: started.elapsed(),
        },
    ))
}

/// Mean cross-entropy and mean parameter gradient over `items`.
pub fn classifier_loss_and_gradient(
    p: &LstmClassifierParams,
    items: &[&(crate::models::TokenSequence, usize)],
) -> Result<(f64, LstmClassifierParams)> {
    let mut grad = LstmClassifierParams::zeros(p.vocab_size(), p.embed_dim(), p.hidden_dim());
    let mut total = 0.0;
    let scale = 1.0 / items.len() as f64;
    for (s, label) in items {
        let trace = p.forward(s)?;
        let (loss, d_logits) = classifier_cross_entropy(&trace.logits, *label)?;
        total += loss;
        let g = p.backward(s, &trace, &d_logits)?;
        grad.axpy(scale, &g.params);
    }
    Ok((total * scale, grad))
}

/// Trains a classifier whose embedding table starts from `dict`.
pub fn train_classifier(
    corpus: &LabeledCorpus,
    dict: &EmbeddingDictionary,
    cfg: &TrainConfig,
) -> Result<(LstmClassifierParams, TrainReport)> {
    cfg.validate()?;
    let mut rng = Rng::derive(cfg.seed, "train/classifier");
    let init = LstmClassifierParams::random_with_embedding(&mut rng, dict.vectors().clone(), cfg.hidden_dim, cfg.init_scale);
    train_classifier_from(init, corpus, cfg)
}

pub fn train_classifier_from(
    mut params: LstmClassifierParams,
    corpus: &LabeledCorpus,
    cfg: &TrainConfig,
) -> Result<(LstmClassifierParams, TrainReport)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Input("cannot train on an empty corpus".into()));
    }
    if cfg.loss != Loss::CrossEntropy {
        return Err(Error::Config("the classifier is trained with cross_entropy".into()));
    }
    for (s, _) in &corpus.items {
        s.validate(params.vocab_size())?;
    }
    let started = Instant::now();
    let mut rng = Rng::derive(cfg.seed, "train/classifier/order");
    let initial_loss = classifier_loss(&params, corpus)?;
    let batch = cfg.batch_size.unwrap_or(corpus.len());
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let items: Vec<_> = chunk.iter().map(|&i| &corpus.items[i]).collect();
            let (loss, grad) = classifier_loss_and_gradient(&params, &items)?;
            check_finite(epoch, loss)?;
            epoch_loss += loss * chunk.len() as f64;
            let mut flat = grad.to_flat();
            clip(&mut flat, cfg.clip_norm);
            for (w, g) in params.flat_mut().zip(flat) {
                *w -= cfg.learning_rate * g;
            }
        }
        curve.push(epoch_loss / corpus.len() as f64);
    }
    let final_loss = classifier_loss(&params, corpus)?;
    check_finite(cfg.epochs, final_loss)?;
    let accuracy = classifier_accuracy(&params, corpus)?;
    Ok((
        params,
        TrainReport {
            loss_curve: curve,
            initial_loss,
            final_loss,
            final_accuracy: Some(accuracy),
            final_mse: None,
            wall_clock: started.elapsed(),
        },
    ))
}

pub fn classifier_loss(p: &LstmClassifierParams, corpus: &LabeledCorpus) -> Result<f64> {
    let mut total = 0.0;
    for (s, label) in &corpus.items {
        total += classifier_cross_entropy(&p.forward(s)?.logits, *label)?.0;
    }
    Ok(total / corpus.len().max(1) as f64)
}

pub fn classifier_accuracy(p: &LstmClassifierParams, corpus: &LabeledCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty corpus".into()));
    }
    let mut correct = 0usize;
    for (s, label) in &corpus.items {
        if p.forward(s)?.predicted_class() == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / corpus.len() as f64)
}

pub enum Dataset<'a> {
    Pairs(&'a SeqPairSet),
    Corpus(&'a LabeledCorpus),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub examples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_entropy: Option<f64>,
}

/// Accuracy for the classifier, mean squared error for the sequential model.
pub fn evaluate(model: &Model, data: &Dataset<'_>) -> Result<Metrics> {
    match (model, data) {
        (Model::Sequential(p), Dataset::Pairs(set)) => {
            if set.is_empty() {
                return Err(Error::Input("cannot evaluate on an empty pair set".into()));
            }
            Ok(Metrics {
                examples: set.len(),
                accuracy: None,
                mse: Some(sequential_loss(p, set, &Loss::MeanSquaredError)?),
                cross_entropy: None,
            })
        }
        (Model::Classifier(p), Dataset::Corpus(corpus)) => Ok(Metrics {
            examples: corpus.len(),
            accuracy: Some(classifier_accuracy(p, corpus)?),
            mse: None,
            cross_entropy: Some(classifier_loss(p, corpus)?),
        }),
        (m, _) => Err(Error::Unsupported(format!(
            "a {} model cannot be evaluated on this dataset kind",
            m.kind()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_correlated_pairs, generate_synthetic_corpus, CorpusConfig, SeqPairConfig, Split};
    use crate::linalg::Vector;
    use crate::models::{Sequence, TokenSequence};

    fn random_sequence(rng: &mut Rng, len: usize, width: usize) -> Sequence {
        Sequence::new(
            (0..len)
                .map(|_| Vector::from_vec((0..width).map(|_| rng.uniform(-1.0, 1.0)).collect()))
                .collect(),
        )
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    #[test]
    fn vanilla_parameter_gradients_match_finite_differences() {
        let mut rng = Rng::new(17);
        for loss in [Loss::MeanSquaredError, Loss::CrossEntropy] {
            let p = VanillaRnnParams::random(&mut rng, 3, 4, 2, 0.8);
            let pairs: Vec<_> = (0..3)
                .map(|_| (random_sequence(&mut rng, 4, 3), random_sequence(&mut rng, 4, 2)))
                .collect();
            let (_, grad) = sequential_loss_and_gradient(&p, &pairs, &loss).unwrap();
            let analytic = grad.to_flat();
            let base = p.to_flat();
            let h = 1e-5;
            for k in 0..base.len() {
                let mut up = base.clone();
                up[k] += h;
                let mut down = base.clone();
                down[k] -= h;
                let f = |w: &[f64]| {
                    let q = VanillaRnnParams::from_flat(3, 4, 2, p.activation, w).unwrap();
                    sequential_loss_and_gradient(&q, &pairs, &loss).unwrap().0
                };
                let numeric = (f(&up) - f(&down)) / (2.0 * h);
                assert!(rel(analytic[k], numeric) < 1e-4, "{loss:?} param {k}: {} vs {numeric}", analytic[k]);
            }
        }
    }

    #[test]
    fn classifier_parameter_gradients_match_finite_differences() {
        let mut rng = Rng::new(18);
        let p = LstmClassifierParams::random(&mut rng, 6, 3, 2, 0.8);
        let items = [
            (TokenSequence::new(vec![1, 4, 4, 2]).unwrap(), 1),
            (TokenSequence::new(vec![5, 0]).unwrap(), 0),
        ];
        let refs: Vec<_> = items.iter().collect();
        let (_, grad) = classifier_loss_and_gradient(&p, &refs).unwrap();
        let analytic = grad.to_flat();
        let base = p.to_flat();
        let h = 1e-5;
        for k in 0..base.len() {
            let f = |delta: f64| {
                let mut w = base.clone();
                w[k] += delta;
                let q = LstmClassifierParams::from_flat(6, 3, 2, &w).unwrap();
                classifier_loss_and_gradient(&q, &refs).unwrap().0
            };
            let numeric = (f(h) - f(-h)) / (2.0 * h);
            assert!(rel(analytic[k], numeric) < 1e-4, "param {k}: {} vs {numeric}", analytic[k]);
        }
    }

    fn small_pairs(alpha: f64, n: usize) -> SeqPairSet {
        let cfg = SeqPairConfig {
            n_pairs: n,
            alpha,
            ..SeqPairConfig::default()
        };
        generate_correlated_pairs(&mut Rng::new(5), &cfg).unwrap()
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let set = small_pairs(1.0, 5);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (p, report) = train_sequential(&set, &cfg).unwrap();
        let mut rng = Rng::derive(cfg.seed, "train/sequential");
        let init = VanillaRnnParams::random(&mut rng, 5, cfg.hidden_dim, 3, cfg.init_scale);
        assert_eq!(p, init);
        assert!(report.loss_curve.is_empty());
        assert_eq!(report.initial_loss, report.final_loss);
    }

    #[test]
    fn pure_noise_targets_cannot_be_beaten() {
        let set = small_pairs(0.0, 100);
        let cfg = TrainConfig {
            epochs: 100,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let (_, report) = train_sequential(&set, &cfg).unwrap();
        assert!(report.final_mse.unwrap() >= 5e-5);
    }

    #[test]
    fn divergence_names_the_epoch() {
        let set = small_pairs(1.0, 4);
        let cfg = TrainConfig {
            epochs: 50,
            learning_rate: 1e6,
            init_scale: 1.0,
            ..TrainConfig::default()
        };
        match train_sequential(&set, &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1 && epoch <= 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn training_is_deterministic() {
        let set = small_pairs(1.0, 10);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: Some(3),
            ..TrainConfig::default()
        };
        let (a, ra) = train_sequential(&set, &cfg).unwrap();
        let (b, rb) = train_sequential(&set, &cfg).unwrap();
        let bits = |p: &VanillaRnnParams| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(ra.loss_curve, rb.loss_curve);
    }

    fn tiny_corpus() -> (LabeledCorpus, EmbeddingDictionary) {
        let cfg = CorpusConfig {
            vocab_size: 30,
            embed_dim: 4,
            n_train: 1,
            n_test: 1,
            min_len: 5,
            max_len: 5,
            max_cues: 1,
            cue_words: 3,
        };
        let c = generate_synthetic_corpus(&mut Rng::new(9), &cfg).unwrap();
        (c.train, c.dictionary)
    }

    #[test]
    fn single_example_overfits() {
        let (corpus, dict) = tiny_corpus();
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 0.1,
            init_scale: 1.0,
            ..TrainConfig::classifier_default()
        };
        let (p, report) = train_classifier(&corpus, &dict, &cfg).unwrap();
        let (s, label) = &corpus.items[0];
        assert!(p.forward(s).unwrap().probs[*label] > 0.99);
        assert_eq!(report.loss_curve.len(), 200);
    }

    #[test]
    fn all_zero_labels_reach_full_accuracy() {
        let (_, dict) = tiny_corpus();
        let items = (0..6)
            .map(|i| (TokenSequence::new(vec![1 + i, 2 + i, 3]).unwrap(), 0))
            .collect();
        let corpus = LabeledCorpus::new(items, Split::Train).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            hidden_dim: 3,
            ..TrainConfig::classifier_default()
        };
        let (_, report) = train_classifier(&corpus, &dict, &cfg).unwrap();
        assert_eq!(report.final_accuracy, Some(1.0));
    }

    #[test]
    fn evaluate_examples() {
        let set = small_pairs(1.0, 4);
        let (p, _) = train_sequential(&set, &TrainConfig { epochs: 1, ..TrainConfig::default() }).unwrap();
        // A dataset whose targets are the model's own outputs is predicted perfectly.
        let mut perfect = set.clone();
        for (x, y) in perfect.pairs.iter_mut() {
            *y = p.forward(x).unwrap().output;
        }
        let model = Model::Sequential(p);
        let m = evaluate(&model, &Dataset::Pairs(&perfect)).unwrap();
        assert_eq!(m.mse, Some(0.0));
        assert_eq!(m, evaluate(&model, &Dataset::Pairs(&perfect)).unwrap());

        let (corpus, _) = tiny_corpus();
        assert!(matches!(evaluate(&model, &Dataset::Corpus(&corpus)), Err(Error::Unsupported(_))));

        // Zero weights predict class 0 everywhere.
        let constant = Model::Classifier(LstmClassifierParams::zeros(30, 4, 2));
        let items: Vec<_> = (0..9).map(|i| (TokenSequence::new(vec![1 + i]).unwrap(), i % 2)).collect();
        let balanced = LabeledCorpus::new(items, Split::Test).unwrap();
        let acc = evaluate(&constant, &Dataset::Corpus(&balanced)).unwrap().accuracy.unwrap();
        assert!((acc - 5.0 / 9.0).abs() < 1e-12);
    }
}
