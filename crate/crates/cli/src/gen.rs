use clap::Subcommand;
use serde::Serialize;

use seqadv_core::data::{generate_correlated_pairs, generate_synthetic_corpus, CorpusConfig, CueLayout, MatrixFormat, SeqPairConfig};
use seqadv_core::Rng;

use crate::error::CliResult;
use crate::report::{self, Header, Report};
use crate::Ctx;

#[derive(Subcommand)]
pub enum GenKind {
    /// Labeled sentences plus an embedding dictionary:
    /// dictionary.txt, train.tsv, test.tsv, corpus.json.
    Corpus {
        /// Number of training sentences.
        #[arg(long)]
        n_items: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        vocab_size: Option<usize>,
    },
    /// Correlated input/output sequence pairs: pairs.csv, pairs.json.
    Seqpairs {
        #[arg(long)]
        n_pairs: Option<usize>,
    },
}

#[derive(Serialize)]
struct CorpusBody<'a> {
    train_items: usize,
    test_items: usize,
    layout: &'a CueLayout,
}

pub fn run(ctx: &Ctx, kind: GenKind) -> CliResult<()> {
    let seed = ctx.seed.unwrap_or(0);
    match kind {
        GenKind::Corpus { n_items, n_test, vocab_size } => {
            let mut cfg = report::load_config(ctx.config.as_deref(), CorpusConfig::default())?;
            if let Some(n) = n_items {
                cfg.n_train = n;
            }
            if let Some(n) = n_test {
                cfg.n_test = n;
            }
            if let Some(v) = vocab_size {
                cfg.vocab_size = v;
            }
            let corpus = generate_synthetic_corpus(&mut Rng::derive(seed, "gen/corpus"), &cfg)?;
            let dict_text = corpus.dictionary.to_bytes(MatrixFormat::Csv);
            let dict_path = ctx.out.file("dictionary.txt");
            std::fs::write(&dict_path, dict_text).map_err(|e| crate::error::CliError::write(&dict_path, e))?;
            report::write_text(&ctx.out.file("train.tsv"), &corpus.train.to_tsv(&corpus.dictionary))?;
            report::write_text(&ctx.out.file("test.tsv"), &corpus.test.to_tsv(&corpus.dictionary))?;
            report::write_json(
                &ctx.out.file("corpus.json"),
                &Report {
                    header: Header { command: "gen corpus", version: report::VERSION, seed, config: &cfg, inputs: vec![] },
                    body: CorpusBody {
                        train_items: corpus.train.len(),
                        test_items: corpus.test.len(),
                        layout: &corpus.layout,
                    },
                },
            )
        }
        GenKind::Seqpairs { n_pairs } => {
            let mut cfg = report::load_config(ctx.config.as_deref(), SeqPairConfig::default())?;
            if let Some(n) = n_pairs {
                cfg.n_pairs = n;
            }
            let mut set = generate_correlated_pairs(&mut Rng::derive(seed, "gen/seqpairs"), &cfg)?;
            set.metadata.seed = seed;
            let path = ctx.out.file("pairs.csv");
            set.save(&path).map_err(|e| crate::error::CliError::write(&path, e))
        }
    }
}
