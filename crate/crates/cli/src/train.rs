use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Subcommand;

use seqadv_core::data::{EmbeddingDictionary, LabeledCorpus, SeqPairSet, Split};
use seqadv_core::models::{save_model, ModelMetadata};
use seqadv_core::training::{train_classifier, train_sequential, TrainConfig, TrainReport};
use seqadv_core::Model;

use crate::error::{CliError, CliResult};
use crate::report::{self, Header, Report};
use crate::Ctx;

#[derive(Subcommand)]
pub enum TrainKind {
    /// Vanilla RNN on a pair CSV. Writes model.bin, model.json,
    /// train_report.json and loss_curve.csv.
    Sequential {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// LSTM classifier on a `label<TAB>text` corpus.
    Classifier {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
}

fn apply_overrides(ctx: &Ctx, cfg: &mut TrainConfig, epochs: Option<usize>, lr: Option<f64>) {
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(l) = lr {
        cfg.learning_rate = l;
    }
}

pub fn loss_curve_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in report.loss_curve.iter().enumerate() {
        let _ = writeln!(out, "{},{l}", i + 1);
    }
    out
}

pub fn run(ctx: &Ctx, kind: TrainKind) -> CliResult<()> {
    let (command, cfg, model, train_report, inputs) = match kind {
        TrainKind::Sequential { data, epochs, lr } => {
            let mut cfg = report::load_config(ctx.config.as_deref(), TrainConfig::default())?;
            apply_overrides(ctx, &mut cfg, epochs, lr);
            cfg.validate()?;
            let set = SeqPairSet::load(&data).map_err(|e| CliError::input(&data, e))?;
            let inputs = vec![report::digest("data", &data)?];
            let (p, r) = train_sequential(&set, &cfg)?;
            ("train sequential", cfg, Model::Sequential(p), r, inputs)
        }
        TrainKind::Classifier { data, dict, epochs, lr } => {
            let mut cfg = report::load_config(ctx.config.as_deref(), TrainConfig::classifier_default())?;
            apply_overrides(ctx, &mut cfg, epochs, lr);
            cfg.validate()?;
            let dictionary = EmbeddingDictionary::load(&dict).map_err(|e| CliError::input(&dict, e))?;
            let corpus = LabeledCorpus::load(&data, &dictionary, Split::Train).map_err(|e| CliError::input(&data, e))?;
            let inputs = vec![report::digest("data", &data)?, report::digest("dictionary", &dict)?];
            let (p, r) = train_classifier(&corpus, &dictionary, &cfg)?;
            ("train classifier", cfg, Model::Classifier(p), r, inputs)
        }
    };
    let training = serde_json::to_value(&cfg).map_err(|e| CliError::usage(e.to_string()))?;
    let model_path = ctx.out.file("model.bin");
    save_model(&model_path, &model, &ModelMetadata::describe(&model, cfg.seed, training))
        .map_err(|e| CliError::write(&model_path, e))?;
    report::write_text(&ctx.out.file("loss_curve.csv"), &loss_curve_csv(&train_report))?;
    report::write_json(
        &ctx.out.file("train_report.json"),
        &Report {
            header: Header { command, version: report::VERSION, seed: cfg.seed, config: &cfg, inputs },
            body: &train_report,
        },
    )
}
