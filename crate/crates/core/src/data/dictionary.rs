use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::models::{TokenSequence, OOV_TOKEN};

/// Spelling of the reserved out-of-vocabulary entry.
pub const OOV_WORD: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    Csv,
    Binary,
}

/// Word ↔ token id ↔ embedding vector. Id 0 is always [`OOV_WORD`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDictionary {
    words: Vec<String>,
    ids: HashMap<String, usize>,
    vectors: Matrix,
}

impl EmbeddingDictionary {
    /// `words[0]` must be [`OOV_WORD`]; the rest must be unique.
    pub fn new(words: Vec<String>, vectors: Matrix) -> Result<Self> {
        if words.len() < 2 {
            return Err(Error::Config(format!(
                "a dictionary needs at least 2 entries, got {}",
                words.len()
            )));
        }
        if words[0] != OOV_WORD {
            return Err(Error::Config(format!("entry 0 must be {OOV_WORD}, got {:?}", words[0])));
        }
        if vectors.rows() != words.len() {
            return Err(Error::shape(
                format!("{} embedding rows", words.len()),
                vectors.rows(),
            ));
        }
        if !vectors.is_finite() {
            return Err(Error::Config("non-finite embedding vector".into()));
        }
        let mut ids = HashMap::with_capacity(words.len());
        for (id, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid dictionary word {w:?}")));
            }
            if ids.insert(w.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate dictionary word {w:?}")));
            }
        }
        Ok(EmbeddingDictionary { words, ids, vectors })
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        self.vectors.row(id)
    }

    /// Token id for `word`, or [`OOV_TOKEN`] when it is unknown.
    pub fn id(&self, word: &str) -> usize {
        self.ids.get(word).copied().unwrap_or(OOV_TOKEN)
    }

    pub fn lookup(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Same words over a different embedding table, e.g. one learned by the
    /// classifier.
    pub fn with_vectors(&self, vectors: Matrix) -> Result<Self> {
        EmbeddingDictionary::new(self.words.clone(), vectors)
    }

    pub fn detokenize(&self, s: &TokenSequence) -> String {
        s.tokens()
            .iter()
            .map(|&t| self.word(t).unwrap_or(OOV_WORD))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn embed(&self, s: &TokenSequence) -> Result<Vec<Vector>> {
        s.validate(self.vocab_size())?;
        Ok(s.tokens().iter().map(|&t| Vector::from_vec(self.vector(t).to_vec())).collect())
    }

    /// Header `vocab_size embed_dim`, one `word id` line per entry, a
    /// `format csv|binary` line, then the matrix.
    pub fn to_bytes(&self, format: MatrixFormat) -> Vec<u8> {
        let mut text = format!("{} {}\n", self.vocab_size(), self.embed_dim());
        for (id, w) in self.words.iter().enumerate() {
            let _ = writeln!(text, "{w} {id}");
        }
        let mut bytes = match format {
            MatrixFormat::Csv => {
                text.push_str("format csv\n");
                for r in 0..self.vectors.rows() {
                    let row: Vec<String> = self.vectors.row(r).iter().map(|v| v.to_string()).collect();
                    text.push_str(&row.join(","));
                    text.push('\n');
                }
                text.into_bytes()
            }
            MatrixFormat::Binary => {
                text.push_str("format binary\n");
                text.into_bytes()
            }
        };
        if format == MatrixFormat::Binary {
            for v in self.vectors.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Format(format!("dictionary: {msg}"));
        let mut cursor = 0usize;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[cursor..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("unexpected end of file".into()))?;
            cursor += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8".into()))
        };

        let header: Vec<&str> = next_line()?.split_whitespace().collect();
        let (vocab, embed) = match header.as_slice() {
            [v, e] => (
                v.parse::<usize>().map_err(|_| bad(format!("bad vocab size {v:?}")))?,
                e.parse::<usize>().map_err(|_| bad(format!("bad embed dim {e:?}")))?,
            ),
            _ => return Err(bad("header must be `vocab_size embed_dim`".into())),
        };
        let mut words = vec![String::new(); vocab];
        let mut seen = vec![false; vocab];
        for _ in 0..vocab {
            let line = next_line()?;
            let (w, id) = line
                .rsplit_once(' ')
                .ok_or_else(|| bad(format!("bad word line {line:?}")))?;
            let id: usize = id.parse().map_err(|_| bad(format!("bad id in {line:?}")))?;
            if id >= vocab || seen[id] {
                return Err(bad(format!("id {id} out of range or repeated")));
            }
            seen[id] = true;
            words[id] = w.to_string();
        }
        let format = match next_line()? {
            "format csv" => MatrixFormat::Csv,
            "format binary" => MatrixFormat::Binary,
            other => return Err(bad(format!("unknown matrix format line {other:?}"))),
        };
        let data = match format {
            MatrixFormat::Csv => {
                let mut data = Vec::with_capacity(vocab * embed);
                for r in 0..vocab {
                    let line = next_line()?;
                    let row = line
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad(format!("bad embedding row {r}")))?;
                    if row.len() != embed {
                        return Err(bad(format!("embedding row {r} has {} values", row.len())));
                    }
                    data.extend(row);
                }
                data
            }
            MatrixFormat::Binary => {
                let rest = &bytes[cursor..];
                if rest.len() != vocab * embed * 8 {
                    return Err(bad(format!(
                        "binary matrix holds {} bytes, expected {}",
                        rest.len(),
                        vocab * embed * 8
                    )));
                }
                cursor = bytes.len();
                rest.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect()
            }
        };
        if bytes[cursor..].iter().any(|b| !b.is_ascii_whitespace()) {
            return Err(bad("trailing data".into()));
        }
        EmbeddingDictionary::new(words, Matrix::from_vec(vocab, embed, data)?)
    }

    pub fn save(&self, path: &Path, format: MatrixFormat) -> Result<()> {
        fs::write(path, self.to_bytes(format))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{uniform_matrix, Rng};

    fn small() -> EmbeddingDictionary {
        let words = [OOV_WORD, "good", "bad", "movie", "wouldn't"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rng = Rng::new(1);
        EmbeddingDictionary::new(words, uniform_matrix(&mut rng, 5, 3, 1.0)).unwrap()
    }

    #[test]
    fn id_word_round_trip() {
        let d = small();
        for id in 1..d.vocab_size() {
            assert_eq!(d.id(d.word(id).unwrap()), id);
        }
        assert_eq!(d.id("unseen"), OOV_TOKEN);
    }

    #[test]
    fn rejects_bad_tables() {
        let m = Matrix::zeros(3, 2);
        let dup = vec![OOV_WORD.into(), "a".into(), "a".into()];
        assert!(matches!(EmbeddingDictionary::new(dup, m.clone()), Err(Error::Config(_))));
        let no_oov = vec!["x".into(), "a".into(), "b".into()];
        assert!(EmbeddingDictionary::new(no_oov, m.clone()).is_err());
        assert!(EmbeddingDictionary::new(vec![OOV_WORD.into()], Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn file_round_trip_both_formats() {
        let d = small();
        for format in [MatrixFormat::Csv, MatrixFormat::Binary] {
            let back = EmbeddingDictionary::from_bytes(&d.to_bytes(format)).unwrap();
            assert_eq!(back, d);
        }
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let bytes = small().to_bytes(MatrixFormat::Binary);
        assert!(matches!(
            EmbeddingDictionary::from_bytes(&bytes[..bytes.len() - 4]),
            Err(Error::Format(_))
        ));
    }
}
