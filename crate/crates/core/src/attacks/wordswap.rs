use serde::{Deserialize, Serialize};

use super::{sign, AttackOutcome};
use crate::data::EmbeddingDictionary;
use crate::diff::classifier_embedding_jacobian;
use crate::error::{Error, Result};
use crate::models::{LstmClassifierParams, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordSwapConfig {
    /// Most words the attack may replace. Clamped to the sentence length.
    pub max_changed_words: usize,
}

impl WordSwapConfig {
    /// Budget of `floor(fraction · len)` words, at least one.
    pub fn fraction_of(len: usize, fraction: f64) -> Self {
        let budget = ((len as f64) * fraction).floor() as usize;
        WordSwapConfig {
            max_changed_words: budget.clamp(1, len.max(1)),
        }
    }
}

/// One substitution made by the attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapRecord {
    pub position: usize,
    pub old_token: usize,
    pub new_token: usize,
    /// Class whose logit the swap tries to lower (the original prediction).
    pub class: usize,
    pub logit_before: f64,
    pub logit_after: f64,
}

impl SwapRecord {
    pub fn reduced_logit(&self) -> bool {
        self.logit_after < self.logit_before
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSwapOutcome {
    #[serde(flatten)]
    pub outcome: AttackOutcome<TokenSequence>,
    pub original_class: usize,
    pub final_class: usize,
    pub swaps: Vec<SwapRecord>,
}

/// `‖sgn(z − current) − direction‖₁`.
fn sign_distance(candidate: &[f64], current: &[f64], direction: &[f64]) -> f64 {
    candidate
        .iter()
        .zip(current)
        .zip(direction)
        .map(|((z, x), d)| (sign(z - x) - d).abs())
        .sum()
}

/// Dictionary word whose embedding offset from `current_token` best matches
/// `direction` in sign, ties to the lowest id. The current word is skipped.
pub(crate) fn best_replacement(dict: &EmbeddingDictionary, current_token: usize, direction: &[f64]) -> Option<usize> {
    let current = dict.vector(current_token);
    let mut best: Option<(usize, f64)> = None;
    for id in 0..dict.vocab_size() {
        if id == current_token {
            continue;
        }
        let d = sign_distance(dict.vector(id), current, direction);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((id, d));
        }
    }
    best.map(|(id, _)| id)
}

/// Replaces words one at a time until the predicted class changes or the
/// budget is spent.
///
/// Each round recomputes the embedding Jacobian of the current sentence,
/// visits the not-yet-visited position with the largest L1 gradient of the
/// original class's logit (lowest index on ties), and substitutes the
/// dictionary word whose embedding offset has signs closest to
/// `−sgn(∂logit/∂embedding)`.
pub fn craft_word_swap(
    model: &LstmClassifierParams,
    s: &TokenSequence,
    dict: &EmbeddingDictionary,
    cfg: &WordSwapConfig,
) -> Result<WordSwapOutcome> {
    if dict.vocab_size() < 2 {
        return Err(Error::Config("the dictionary has no replacement words".into()));
    }
    if dict.embed_dim() != model.embed_dim() {
        return Err(Error::Config(format!(
            "dictionary embeddings have dim {}, model expects {}",
            dict.embed_dim(),
            model.embed_dim()
        )));
    }
    if dict.vocab_size() > model.vocab_size() {
        return Err(Error::Config(format!(
            "dictionary has {} words but the model only embeds {}",
            dict.vocab_size(),
            model.vocab_size()
        )));
    }
    s.validate(dict.vocab_size())?;

    let original = model.forward(s)?;
    let class = original.predicted_class();
    let budget = cfg.max_changed_words.min(s.len());
    let mut current = s.clone();
    let mut current_logit = original.logits[class];
    let mut current_class = class;
    let mut visited = vec![false; s.len()];
    let mut swaps = Vec::new();
    let mut iterations = 0;

    while current_class == class && swaps.len() < budget {
        let jac = classifier_embedding_jacobian(model, &current)?;
        let Some(position) = (0..current.len())
            .filter(|&i| !visited[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if jac.saliency(b, class) >= jac.saliency(i, class) => Some(b),
                _ => Some(i),
            })
        else {
            break;
        };
        visited[position] = true;
        iterations += 1;

        let direction: Vec<f64> = jac.get(position, class).iter().map(|&g| -sign(g)).collect();
        let old_token = current.tokens()[position];
        let Some(new_token) = best_replacement(dict, old_token, &direction) else {
            continue;
        };
        let candidate = current.with_token(position, new_token);
        let out = model.forward(&candidate)?;
        swaps.push(SwapRecord {
            position,
            old_token,
            new_token,
            class,
            logit_before: current_logit,
            logit_after: out.logits[class],
        });
        current = candidate;
        current_logit = out.logits[class];
        current_class = out.predicted_class();
    }

    let changed_positions: Vec<usize> = (0..s.len())
        .filter(|&i| s.tokens()[i] != current.tokens()[i])
        .collect();
    Ok(WordSwapOutcome {
        outcome: AttackOutcome {
            perturbation_norm: changed_positions.len() as f64,
            changed_positions,
            success: current_class != class,
            adversarial: current,
            iterations,
            diagnostic: None,
        },
        original_class: class,
        final_class: current_class,
        swaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OOV_WORD;
    use crate::linalg::{Matrix, Rng};
    use proptest::prelude::*;

    fn dict_for(model: &LstmClassifierParams) -> EmbeddingDictionary {
        let words = (0..model.vocab_size())
            .map(|i| if i == 0 { OOV_WORD.to_string() } else { format!("w{i}") })
            .collect();
        EmbeddingDictionary::new(words, model.embedding.clone()).unwrap()
    }

    #[test]
    fn constant_model_exhausts_budget() {
        let mut rng = Rng::new(3);
        let mut model = LstmClassifierParams::random(&mut rng, 12, 3, 3, 0.5);
        model.head_weight = Matrix::zeros(2, 3);
        model.head_bias = vec![0.0, 0.0].into();
        let s = TokenSequence::new(vec![1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let out = craft_word_swap(&model, &s, &dict_for(&model), &WordSwapConfig { max_changed_words: 2 }).unwrap();
        assert_eq!(out.original_class, 0);
        assert!(!out.outcome.success);
        assert_eq!(out.outcome.changed_positions.len(), 2);
    }

    #[test]
    fn replacement_matches_sign_pattern() {
        let words = vec![OOV_WORD.into(), "a".into(), "b".into(), "c".into()];
        let vectors = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
        ])
        .unwrap();
        let dict = EmbeddingDictionary::new(words, vectors).unwrap();
        // From "a" = (1, 1): want +x, −y → "b" = (2, 0).
        assert_eq!(best_replacement(&dict, 1, &[1.0, -1.0]), Some(2));
        assert_eq!(best_replacement(&dict, 1, &[-1.0, 1.0]), Some(3));
        // Ties go to the lowest id: from "b", both <unk> and "a" have
        // distance 2 for direction (−1, 0).
        assert_eq!(best_replacement(&dict, 2, &[-1.0, 0.0]), Some(0));
    }

    #[test]
    fn budget_fraction_rounding() {
        assert_eq!(WordSwapConfig::fraction_of(8, 0.25).max_changed_words, 2);
        assert_eq!(WordSwapConfig::fraction_of(11, 0.25).max_changed_words, 2);
        assert_eq!(WordSwapConfig::fraction_of(2, 0.25).max_changed_words, 1);
        assert_eq!(WordSwapConfig::fraction_of(20, 0.25).max_changed_words, 5);
    }

    #[test]
    fn mismatched_dictionary_rejected() {
        let model = LstmClassifierParams::zeros(5, 3, 2);
        let dict = EmbeddingDictionary::new(
            vec![OOV_WORD.into(), "x".into()],
            Matrix::zeros(2, 4),
        )
        .unwrap();
        let s = TokenSequence::new(vec![1]).unwrap();
        assert!(matches!(
            craft_word_swap(&model, &s, &dict, &WordSwapConfig { max_changed_words: 1 }),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn outcome_invariants(seed in any::<u64>(), len in 1usize..10, budget in 1usize..6) {
            let mut rng = Rng::new(seed);
            let model = LstmClassifierParams::random(&mut rng, 15, 4, 3, 1.5);
            let dict = dict_for(&model);
            let s = TokenSequence::new((0..len).map(|_| rng.below(15)).collect()).unwrap();
            let out = craft_word_swap(&model, &s, &dict, &WordSwapConfig { max_changed_words: budget }).unwrap();
            let adv = &out.outcome.adversarial;
            prop_assert_eq!(adv.len(), s.len());
            prop_assert!(adv.validate(dict.vocab_size()).is_ok());
            let differing = (0..len).filter(|&i| adv.tokens()[i] != s.tokens()[i]).count();
            prop_assert_eq!(differing, out.outcome.changed_positions.len());
            prop_assert!(differing <= budget.min(len));
            prop_assert!(out.outcome.iterations <= len);
            if out.outcome.success {
                prop_assert_ne!(model.forward(adv).unwrap().predicted_class(), model.forward(&s).unwrap().predicted_class());
            }
        }
    }
}
