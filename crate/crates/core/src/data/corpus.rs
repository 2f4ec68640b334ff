use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dictionary::{EmbeddingDictionary, OOV_WORD};
use crate::error::{Error, Result};
use crate::linalg::{normal_sample, Matrix, Rng};
use crate::models::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Token sequences with binary sentiment labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub items: Vec<(TokenSequence, usize)>,
    pub split: Split,
}

impl LabeledCorpus {
    pub fn new(items: Vec<(TokenSequence, usize)>, split: Split) -> Result<Self> {
        if let Some((_, label)) = items.iter().find(|(_, l)| *l > 1) {
            return Err(Error::Input(format!("label {label} is not binary")));
        }
        Ok(LabeledCorpus { items, split })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Lines of `label<TAB>text`.
    pub fn to_tsv(&self, dict: &EmbeddingDictionary) -> String {
        let mut out = String::new();
        for (s, label) in &self.items {
            let _ = writeln!(out, "{label}\t{}", dict.detokenize(s));
        }
        out
    }

    /// Parses `label<TAB>text` lines; blank lines are skipped.
    pub fn from_tsv(text: &str, dict: &EmbeddingDictionary, split: Split) -> Result<Self> {
        let mut items = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (label, body) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("corpus line {}: missing tab after label", n + 1)))?;
            let label = match label.trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Format(format!(
                        "corpus line {}: label must be 0 or 1, got {other:?}",
                        n + 1
                    )))
                }
            };
            let tokens = tokenize(body, dict)
                .map_err(|e| Error::Format(format!("corpus line {}: {e}", n + 1)))?;
            items.push((tokens, label));
        }
        LabeledCorpus::new(items, split)
    }

    pub fn save(&self, path: &Path, dict: &EmbeddingDictionary) -> Result<()> {
        fs::write(path, self.to_tsv(dict))?;
        Ok(())
    }

    pub fn load(path: &Path, dict: &EmbeddingDictionary, split: Split) -> Result<Self> {
        Self::from_tsv(&fs::read_to_string(path)?, dict, split)
    }
}

/// Lowercases and splits on anything that is not a letter, digit,
/// underscore or inner apostrophe. Unknown words map to the OOV id.
pub fn tokenize(text: &str, dict: &EmbeddingDictionary) -> Result<TokenSequence> {
    let lowered = text.to_lowercase();
    let ids: Vec<usize> = lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '\''))
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .map(|w| dict.id(w))
        .collect();
    if ids.is_empty() {
        return Err(Error::Input(format!("no words in {text:?}")));
    }
    TokenSequence::new(ids)
}

/// Which ids carry sentiment in a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueLayout {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    pub filler: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Cue words per sentence are drawn uniformly from `1..=max_cues`.
    pub max_cues: usize,
    /// Size of each class's cue-word set.
    pub cue_words: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            vocab_size: 500,
            embed_dim: 16,
            n_train: 200,
            n_test: 50,
            min_len: 8,
            max_len: 20,
            max_cues: 2,
            cue_words: 50,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size < 20 {
            return fail(format!("vocab_size must be >= 20, got {}", self.vocab_size));
        }
        if self.embed_dim == 0 {
            return fail("embed_dim must be positive".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return fail(format!("bad length range {}..={}", self.min_len, self.max_len));
        }
        if self.max_cues == 0 || self.max_cues > self.min_len {
            return fail(format!(
                "max_cues must be in 1..={} (shortest sentence), got {}",
                self.min_len, self.max_cues
            ));
        }
        if self.cue_words == 0 || 2 * self.cue_words + 1 >= self.vocab_size {
            return fail(format!(
                "cue_words must leave filler words: {} per class in a vocabulary of {}",
                self.cue_words, self.vocab_size
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: LabeledCorpus,
    pub test: LabeledCorpus,
    pub dictionary: EmbeddingDictionary,
    pub layout: CueLayout,
}

/// Word list with `<unk>` at id 0 and `per_class` cue words for each class.
fn synthetic_vocabulary(rng: &mut Rng, vocab_size: usize, per_class: usize) -> (Vec<String>, CueLayout) {
    let mut ids: Vec<usize> = (1..vocab_size).collect();
    rng.shuffle(&mut ids);
    let mut positive = ids[..per_class].to_vec();
    let mut negative = ids[per_class..2 * per_class].to_vec();
    let mut filler = ids[2 * per_class..].to_vec();
    positive.sort_unstable();
    negative.sort_unstable();
    filler.sort_unstable();

    let mut words = vec![String::new(); vocab_size];
    words[0] = OOV_WORD.to_string();
    for &id in &positive {
        words[id] = format!("pos_{id:04}");
    }
    for &id in &negative {
        words[id] = format!("neg_{id:04}");
    }
    for &id in &filler {
        words[id] = format!("w_{id:04}");
    }
    (
        words,
        CueLayout {
            positive,
            negative,
            filler,
        },
    )
}

/// Balanced sentences: filler words with `1..=max_cues` cue words of the
/// sentence's class at random positions.
pub fn generate_sentences(
    rng: &mut Rng,
    layout: &CueLayout,
    n_items: usize,
    len_range: (usize, usize),
    max_cues: usize,
    split: Split,
) -> Result<LabeledCorpus> {
    let (lo, hi) = len_range;
    if lo == 0 || lo > hi || max_cues == 0 || max_cues > lo {
        return Err(Error::Config(format!(
            "infeasible sentence shape: lengths {lo}..={hi}, up to {max_cues} cues"
        )));
    }
    if layout.filler.is_empty() || layout.positive.is_empty() || layout.negative.is_empty() {
        return Err(Error::Config("cue layout needs filler, positive and negative words".into()));
    }
    let mut labels: Vec<usize> = (0..n_items).map(|i| i % 2).collect();
    rng.shuffle(&mut labels);
    let mut items = Vec::with_capacity(n_items);
    for label in labels {
        let len = lo + rng.below(hi - lo + 1);
        let cues = if label == 1 { &layout.positive } else { &layout.negative };
        let mut tokens: Vec<usize> = (0..len)
            .map(|_| layout.filler[rng.below(layout.filler.len())])
            .collect();
        let n_cues = 1 + rng.below(max_cues);
        let mut positions: Vec<usize> = (0..len).collect();
        rng.shuffle(&mut positions);
        for &pos in &positions[..n_cues] {
            tokens[pos] = cues[rng.below(cues.len())];
        }
        items.push((TokenSequence::new(tokens)?, label));
    }
    LabeledCorpus::new(items, split)
}

/// Desk-scale stand-in for a review corpus. Embeddings start as standard
/// normal draws and are meant to be trained with the classifier.
pub fn generate_synthetic_corpus(rng: &mut Rng, cfg: &CorpusConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let (words, layout) = synthetic_vocabulary(rng, cfg.vocab_size, cfg.cue_words);
    let vectors = normal_sample(rng, 0.0, 1.0, cfg.vocab_size * cfg.embed_dim)?;
    let dictionary = EmbeddingDictionary::new(
        words,
        Matrix::from_vec(cfg.vocab_size, cfg.embed_dim, vectors.into_vec())?,
    )?;
    let range = (cfg.min_len, cfg.max_len);
    let train = generate_sentences(rng, &layout, cfg.n_train, range, cfg.max_cues, Split::Train)?;
    let test = generate_sentences(rng, &layout, cfg.n_test, range, cfg.max_cues, Split::Test)?;
    Ok(SyntheticCorpus {
        train,
        test,
        dictionary,
        layout,
    })
}
