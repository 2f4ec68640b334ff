use clap::Args;
use serde::Serialize;

use seqadv_core::data::{EmbeddingDictionary, LabeledCorpus, SeqPairSet, Split};
use seqadv_core::diff::{classifier_embedding_jacobian, classifier_logits_fn, embed, finite_diff_jacobian, rnn_jacobian, JacobianTensor};
use seqadv_core::models::load_model;
use seqadv_core::training::{evaluate, Dataset, Metrics};
use seqadv_core::{Model, Sequence};

use crate::error::{CliError, CliResult};
use crate::report::{self, Header, InputDigest, Report};
use crate::{Ctx, ModelData};

pub enum Data {
    Pairs(SeqPairSet),
    Corpus(LabeledCorpus, EmbeddingDictionary),
}

impl Data {
    pub fn len(&self) -> usize {
        match self {
            Data::Pairs(s) => s.len(),
            Data::Corpus(c, _) => c.len(),
        }
    }
}

/// Loads a model and the dataset kind it consumes. For a classifier the
/// dictionary keeps its words but takes the model's trained embeddings.
pub fn load(md: &ModelData) -> CliResult<(Model, Data, Vec<InputDigest>)> {
    let (model, _) = load_model(&md.model).map_err(|e| CliError::input(&md.model, e))?;
    let mut inputs = vec![report::digest("model", &md.model)?, report::digest("data", &md.data)?];
    let data = match &model {
        Model::Sequential(_) => {
            let set = SeqPairSet::load(&md.data).map_err(|e| CliError::input(&md.data, e))?;
            Data::Pairs(set)
        }
        Model::Classifier(p) => {
            let dict_path = md
                .dict
                .as_ref()
                .ok_or_else(|| CliError::usage("a classifier model needs --dict"))?;
            let dict = EmbeddingDictionary::load(dict_path).map_err(|e| CliError::input(dict_path, e))?;
            let dict = dict
                .with_vectors(p.embedding.clone())
                .map_err(|e| CliError::input(dict_path, format!("does not match the model: {e}")))?;
            inputs.push(report::digest("dictionary", dict_path)?);
            let corpus = LabeledCorpus::load(&md.data, &dict, Split::Train).map_err(|e| CliError::input(&md.data, e))?;
            Data::Corpus(corpus, dict)
        }
    };
    Ok((model, data, inputs))
}

#[derive(Args)]
pub struct JacobianArgs {
    #[command(flatten)]
    pub io: ModelData,
    /// Which dataset entry to differentiate at.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Use central differences with this step instead of the exact Jacobian.
    #[arg(long)]
    pub finite_difference: Option<f64>,
}

pub fn jacobian(ctx: &Ctx, args: JacobianArgs) -> CliResult<()> {
    let (model, data, _) = load(&args.io)?;
    if args.index >= data.len() {
        return Err(CliError::usage(format!(
            "--index {} out of range for {} dataset entries",
            args.index,
            data.len()
        )));
    }
    let tensor: JacobianTensor = match (&model, &data) {
        (Model::Sequential(p), Data::Pairs(set)) => {
            let x = &set.pairs[args.index].0;
            match args.finite_difference {
                None => rnn_jacobian(p, x)?,
                Some(h) => finite_diff_jacobian(|s: &Sequence| Ok(p.forward(s)?.output), x, h)?,
            }
        }
        (Model::Classifier(p), Data::Corpus(corpus, _)) => {
            let s = &corpus.items[args.index].0;
            match args.finite_difference {
                None => classifier_embedding_jacobian(p, s)?.to_tensor(),
                Some(h) => finite_diff_jacobian(classifier_logits_fn(p), &embed(p, s)?, h)?,
            }
        }
        _ => unreachable!("load pairs the dataset kind with the model kind"),
    };
    let name = if args.finite_difference.is_some() { "jacobian_fd.csv" } else { "jacobian.csv" };
    report::write_text(&ctx.out.file(name), &tensor.to_csv())
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub io: ModelData,
}

#[derive(Serialize)]
struct EvalBody {
    model: &'static str,
    metrics: Metrics,
}

pub fn eval(ctx: &Ctx, args: EvalArgs) -> CliResult<()> {
    let (model, data, inputs) = load(&args.io)?;
    let metrics = match &data {
        Data::Pairs(set) => evaluate(&model, &Dataset::Pairs(set))?,
        Data::Corpus(corpus, _) => evaluate(&model, &Dataset::Corpus(corpus))?,
    };
    report::write_json(
        &ctx.out.file("eval.json"),
        &Report {
            header: Header {
                command: "eval",
                version: report::VERSION,
                seed: ctx.seed.unwrap_or(0),
                config: &serde_json::Value::Null,
                inputs,
            },
            body: EvalBody { model: model.kind(), metrics },
        },
    )
}
