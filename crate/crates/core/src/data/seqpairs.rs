use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normal_sample, Rng};
use crate::models::Sequence;

/// `output(j)[output_coord] += alpha · input(j − lag)[input_coord]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSource {
    pub output_coord: usize,
    pub input_coord: usize,
    pub lag: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqPairConfig {
    pub n_pairs: usize,
    pub len: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub input_variance: f64,
    pub output_variance: f64,
    pub alpha: f64,
}

impl Default for SeqPairConfig {
    fn default() -> Self {
        SeqPairConfig {
            n_pairs: 100,
            len: 10,
            input_dim: 5,
            output_dim: 3,
            input_variance: 1.0,
            output_variance: 1e-4,
            alpha: 1.0,
        }
    }
}

impl SeqPairConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pairs == 0 || self.len == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("pair count, length and widths must be positive".into()));
        }
        if self.output_dim > self.input_dim {
            return Err(Error::Config(format!(
                "each of the {} output coordinates needs its own input coordinate, only {} available",
                self.output_dim, self.input_dim
            )));
        }
        if !(self.input_variance >= 0.0 && self.output_variance >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("variances must be >= 0 and alpha finite".into()));
        }
        Ok(())
    }
}

/// Dataset description stored next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqPairMetadata {
    pub seed: u64,
    pub config: SeqPairConfig,
    pub correlations: Vec<CorrelationSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqPairSet {
    pub pairs: Vec<(Sequence, Sequence)>,
    pub metadata: SeqPairMetadata,
}

/// Gaussian input/output noise, then each output coordinate picks up a unit
/// copy of one input coordinate from one or two steps earlier.
pub fn generate_correlated_pairs(rng: &mut Rng, cfg: &SeqPairConfig) -> Result<SeqPairSet> {
    cfg.validate()?;
    let mut sources: Vec<usize> = (0..cfg.input_dim).collect();
    rng.shuffle(&mut sources);
    let correlations: Vec<CorrelationSource> = (0..cfg.output_dim)
        .map(|c| CorrelationSource {
            output_coord: c,
            input_coord: sources[c],
            lag: 1 + rng.below(2),
            alpha: cfg.alpha,
        })
        .collect();

    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        let x = normal_sample(rng, 0.0, cfg.input_variance, cfg.len * cfg.input_dim)?;
        let y = normal_sample(rng, 0.0, cfg.output_variance, cfg.len * cfg.output_dim)?;
        let x = Sequence::from_flat(cfg.len, cfg.input_dim, x.as_slice())?;
        let mut y = Sequence::from_flat(cfg.len, cfg.output_dim, y.as_slice())?;
        for src in &correlations {
            for j in src.lag..cfg.len {
                let v = y.get(j, src.output_coord) + src.alpha * x.get(j - src.lag, src.input_coord);
                y.set(j, src.output_coord, v);
            }
        }
        pairs.push((x, y));
    }
    Ok(SeqPairSet {
        pairs,
        metadata: SeqPairMetadata {
            seed: rng.seed(),
            config: cfg.clone(),
            correlations,
        },
    })
}

impl SeqPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Columns `pair_id,step,role,coord,value`; values use the shortest
    /// representation that parses back to the same bits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,step,role,coord,value\n");
        for (id, (x, y)) in self.pairs.iter().enumerate() {
            for (role, s) in [("in", x), ("out", y)] {
                for t in 0..s.len() {
                    for c in 0..s.width() {
                        let _ = writeln!(out, "{id},{t},{role},{c},{}", s.get(t, c));
                    }
                }
            }
        }
        out
    }

    pub fn from_csv(csv: &str, metadata: SeqPairMetadata) -> Result<Self> {
        let cfg = &metadata.config;
        cfg.validate()?;
        let n_in = cfg.len * cfg.input_dim;
        let n_out = cfg.len * cfg.output_dim;
        let mut inputs = vec![vec![f64::NAN; n_in]; cfg.n_pairs];
        let mut outputs = vec![vec![f64::NAN; n_out]; cfg.n_pairs];
        let bad = |line: usize, msg: &str| Error::Format(format!("pairs line {line}: {msg}"));

        let mut lines = csv.lines().enumerate();
        match lines.next() {
            Some((_, "pair_id,step,role,coord,value")) => {}
            _ => return Err(Error::Format("pairs CSV is missing its header".into())),
        }
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(n + 1, "expected 5 fields"));
            }
            let id: usize = f[0].parse().map_err(|_| bad(n + 1, "bad pair_id"))?;
            let t: usize = f[1].parse().map_err(|_| bad(n + 1, "bad step"))?;
            let c: usize = f[3].parse().map_err(|_| bad(n + 1, "bad coord"))?;
            let v: f64 = f[4].parse().map_err(|_| bad(n + 1, "bad value"))?;
            let (buf, width) = match f[2] {
                "in" => (&mut inputs, cfg.input_dim),
                "out" => (&mut outputs, cfg.output_dim),
                _ => return Err(bad(n + 1, "role must be in or out")),
            };
            if id >= cfg.n_pairs || t >= cfg.len || c >= width {
                return Err(bad(n + 1, "index outside the shape in the metadata"));
            }
            buf[id][t * width + c] = v;
        }
        let mut pairs = Vec::with_capacity(cfg.n_pairs);
        for (x, y) in inputs.into_iter().zip(outputs) {
            if x.iter().chain(&y).any(|v| v.is_nan()) {
                return Err(Error::Format("pairs CSV is missing values".into()));
            }
            pairs.push((
                Sequence::from_flat(cfg.len, cfg.input_dim, &x)?,
                Sequence::from_flat(cfg.len, cfg.output_dim, &y)?,
            ));
        }
        Ok(SeqPairSet { pairs, metadata })
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv())?;
        fs::write(
            csv_path.with_extension("json"),
            serde_json::to_string_pretty(&self.metadata)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let meta_text = fs::read_to_string(csv_path.with_extension("json"))?;
        let metadata: SeqPairMetadata =
            serde_json::from_str(&meta_text).map_err(|e| Error::Format(format!("pairs metadata: {e}")))?;
        Self::from_csv(&fs::read_to_string(csv_path)?, metadata)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn default_shapes() {
        let set = generate_correlated_pairs(&mut Rng::new(1), &SeqPairConfig::default()).unwrap();
        assert_eq!(set.len(), 100);
        for (x, y) in &set.pairs {
            assert_eq!((x.len(), x.width()), (10, 5));
            assert_eq!((y.len(), y.width()), (10, 3));
        }
        assert_eq!(set.metadata.correlations.len(), 3);
        assert!(set.metadata.correlations.iter().all(|c| c.lag == 1 || c.lag == 2));
    }

    #[test]
    fn without_injection_outputs_are_small_noise() {
        let cfg = SeqPairConfig {
            alpha: 0.0,
            ..SeqPairConfig::default()
        };
        let set = generate_correlated_pairs(&mut Rng::new(2), &cfg).unwrap();
        for c in 0..3 {
            let v: Vec<f64> = set.pairs.iter().flat_map(|(_, y)| (0..10).map(move |t| y.get(t, c))).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(var > 1e-4 / 3.0 && var < 3e-4, "coordinate {c}: variance {var}");
        }
    }

    #[test]
    fn outputs_track_their_designated_source() {
        let set = generate_correlated_pairs(&mut Rng::new(3), &SeqPairConfig::default()).unwrap();
        for src in &set.metadata.correlations {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (x, y) in &set.pairs {
                for j in src.lag..10 {
                    a.push(y.get(j, src.output_coord));
                    b.push(x.get(j - src.lag, src.input_coord));
                }
            }
            assert!(pearson(&a, &b) > 0.99);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let cfg = SeqPairConfig {
            n_pairs: 4,
            ..SeqPairConfig::default()
        };
        let set = generate_correlated_pairs(&mut Rng::new(4), &cfg).unwrap();
        let back = SeqPairSet::from_csv(&set.to_csv(), set.metadata.clone()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn reproducible() {
        let a = generate_correlated_pairs(&mut Rng::new(5), &SeqPairConfig::default()).unwrap();
        let b = generate_correlated_pairs(&mut Rng::new(5), &SeqPairConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
