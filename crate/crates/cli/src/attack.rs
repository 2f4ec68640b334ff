use std::fmt::Write as _;

use clap::Subcommand;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use seqadv_core::attacks::{
    craft_sequential, craft_word_swap, fgsm, FgsmConfig, SequentialAttackConfig, StepTarget, SwapRecord, TargetGoal,
    WordSwapConfig,
};
use seqadv_core::training::{Cost, Loss};
use seqadv_core::{Model, Sequence};

use crate::error::{CliError, CliResult};
use crate::inspect::{self, Data};
use crate::report::{self, Header, Report};
use crate::{Ctx, ModelData};

#[derive(Subcommand)]
pub enum AttackKind {
    /// Fast gradient sign method on a sequential model (squared-error cost).
    Fgsm {
        #[command(flatten)]
        io: ModelData,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Attack only the first N inputs.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Dictionary word swaps against a classifier.
    Wordswap {
        #[command(flatten)]
        io: ModelData,
        /// Budget as a fraction of each sentence's length.
        #[arg(long)]
        budget_fraction: Option<f64>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Steer chosen output steps of a sequential model.
    Seqtarget {
        #[command(flatten)]
        io: ModelData,
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordSwapRun {
    /// Per-sentence budget `floor(fraction · length)`, at least one word.
    pub budget_fraction: f64,
}

impl Default for WordSwapRun {
    fn default() -> Self {
        WordSwapRun { budget_fraction: 0.25 }
    }
}

/// Two targets with opposite directions, in the spirit of the paper's
/// illustration: coordinate 0 of the fifth step up, coordinate 2 of the
/// eighth step down.
pub fn default_seqtarget() -> SequentialAttackConfig {
    SequentialAttackConfig {
        targets: vec![
            StepTarget { step: 4, coord: 0, goal: TargetGoal::Direction(1.0) },
            StepTarget { step: 7, coord: 2, goal: TargetGoal::Direction(-1.0) },
        ],
        delta: 0.3,
        off_target_ratio: 2.0,
        step_size: 0.05,
        max_iters: 100,
    }
}

#[derive(Serialize)]
struct FgsmRecord {
    index: usize,
    success: bool,
    loss_before: f64,
    loss_after: f64,
    perturbation_norm: f64,
    changed_positions: Vec<usize>,
    adversarial: Sequence,
}

#[derive(Serialize)]
struct WordSwapRecord {
    index: usize,
    label: usize,
    original_class: usize,
    final_class: usize,
    correctly_classified: bool,
    success: bool,
    length: usize,
    budget: usize,
    changed_words: usize,
    changed_positions: Vec<usize>,
    original_text: String,
    adversarial_text: String,
    swaps: Vec<SwapRecord>,
}

#[derive(Serialize)]
struct SeqTargetRecord {
    index: usize,
    success: bool,
    iterations: usize,
    perturbation_norm: f64,
    changed_positions: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostic: Option<String>,
    output_delta: Sequence,
    adversarial: Sequence,
}

#[derive(Serialize)]
struct Summary {
    attack: &'static str,
    attacked: usize,
    success_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_perturbation_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_changed_words: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_changed_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    correctly_classified: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    success_rate_correctly_classified: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logit_reducing_swaps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_swaps: Option<usize>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn pool(ctx: &Ctx) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = ctx.jobs {
        b = b.num_threads(j);
    }
    b.build().map_err(|e| CliError::usage(format!("cannot start worker threads: {e}")))
}

/// Runs `f` over `0..n` on the worker pool; results keep input order.
fn par_map<T: Send>(ctx: &Ctx, n: usize, f: impl Fn(usize) -> CliResult<T> + Sync) -> CliResult<Vec<T>> {
    pool(ctx)?.install(|| (0..n).into_par_iter().map(&f).collect())
}

fn write_records<T: Serialize>(ctx: &Ctx, kind: &str, records: &[T]) -> CliResult<()> {
    let dir = ctx.out.file(kind);
    report::ensure_dir(&dir)?;
    for (i, r) in records.iter().enumerate() {
        report::write_json(&dir.join(format!("input_{i:04}.json")), r)?;
    }
    Ok(())
}

fn wrong_kind(attack: &str, model: &Model) -> CliError {
    let why = match model {
        Model::Classifier(_) if attack != "wordswap" => {
            "it needs continuous sequence inputs and the classifier consumes discrete token ids"
        }
        Model::Sequential(_) => "it needs a classifier over token sequences",
        _ => "the model kind does not match",
    };
    CliError::usage(format!("cannot run {attack} against a {} model: {why}", model.kind()))
}

pub fn run(ctx: &Ctx, kind: AttackKind) -> CliResult<()> {
    match kind {
        AttackKind::Fgsm { io, epsilon, limit } => run_fgsm(ctx, &io, epsilon, limit),
        AttackKind::Wordswap { io, budget_fraction, limit } => run_wordswap(ctx, &io, budget_fraction, limit),
        AttackKind::Seqtarget { io, limit } => run_seqtarget(ctx, &io, limit),
    }
}

fn run_fgsm(ctx: &Ctx, io: &ModelData, epsilon: Option<f64>, limit: Option<usize>) -> CliResult<()> {
    let mut cfg = report::load_config(ctx.config.as_deref(), FgsmConfig { epsilon: 1e-3 })?;
    if let Some(e) = epsilon {
        cfg.epsilon = e;
    }
    cfg.validate()?;
    let (model, data, inputs) = inspect::load(io)?;
    let (Model::Sequential(p), Data::Pairs(set)) = (&model, &data) else {
        return Err(wrong_kind("fgsm", &model));
    };
    let n = limit.unwrap_or(set.len()).min(set.len());
    let loss = Loss::MeanSquaredError;
    let records = par_map(ctx, n, |i| {
        let (x, y) = &set.pairs[i];
        let out = fgsm(p, x, y, &loss, &cfg)?;
        Ok(FgsmRecord {
            index: i,
            success: out.success,
            loss_before: loss.value(&p.forward(x)?.output, y)?,
            loss_after: loss.value(&p.forward(&out.adversarial)?.output, y)?,
            perturbation_norm: out.perturbation_norm,
            changed_positions: out.changed_positions,
            adversarial: out.adversarial,
        })
    })?;
    write_records(ctx, "fgsm", &records)?;
    let mut csv = String::from("index,success,loss_before,loss_after,perturbation_norm,changed_steps\n");
    for r in &records {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.index,
            r.success as u8,
            r.loss_before,
            r.loss_after,
            r.perturbation_norm,
            r.changed_positions.len()
        );
    }
    let summary = Summary {
        attack: "fgsm",
        attacked: n,
        success_rate: mean(records.iter().map(|r| r.success as u8 as f64)),
        mean_perturbation_norm: Some(mean(records.iter().map(|r| r.perturbation_norm))),
        ..empty_summary()
    };
    let _ = writeln!(
        csv,
        "mean,{},{},{},{},{}",
        summary.success_rate,
        mean(records.iter().map(|r| r.loss_before)),
        mean(records.iter().map(|r| r.loss_after)),
        summary.mean_perturbation_norm.unwrap_or(0.0),
        mean(records.iter().map(|r| r.changed_positions.len() as f64))
    );
    finish(ctx, "fgsm", csv, &cfg, inputs, summary)
}

fn run_wordswap(ctx: &Ctx, io: &ModelData, budget_fraction: Option<f64>, limit: Option<usize>) -> CliResult<()> {
    let mut cfg = report::load_config(ctx.config.as_deref(), WordSwapRun::default())?;
    if let Some(f) = budget_fraction {
        cfg.budget_fraction = f;
    }
    if !(cfg.budget_fraction > 0.0 && cfg.budget_fraction <= 1.0) {
        return Err(CliError::usage(format!("budget_fraction must be in (0, 1], got {}", cfg.budget_fraction)));
    }
    let (model, data, inputs) = inspect::load(io)?;
    let (Model::Classifier(p), Data::Corpus(corpus, dict)) = (&model, &data) else {
        return Err(wrong_kind("wordswap", &model));
    };
    let n = limit.unwrap_or(corpus.len()).min(corpus.len());
    let records = par_map(ctx, n, |i| {
        let (s, label) = &corpus.items[i];
        let budget = WordSwapConfig::fraction_of(s.len(), cfg.budget_fraction);
        let out = craft_word_swap(p, s, dict, &budget)?;
        Ok(WordSwapRecord {
            index: i,
            label: *label,
            original_class: out.original_class,
            final_class: out.final_class,
            correctly_classified: out.original_class == *label,
            success: out.outcome.success,
            length: s.len(),
            budget: budget.max_changed_words,
            changed_words: out.outcome.changed_positions.len(),
            changed_positions: out.outcome.changed_positions,
            original_text: dict.detokenize(s),
            adversarial_text: dict.detokenize(&out.outcome.adversarial),
            swaps: out.swaps,
        })
    })?;
    write_records(ctx, "wordswap", &records)?;
    let mut csv = String::from("index,label,original_class,final_class,success,length,budget,changed_words\n");
    for r in &records {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.index, r.label, r.original_class, r.final_class, r.success as u8, r.length, r.budget, r.changed_words
        );
    }
    let correct: Vec<_> = records.iter().filter(|r| r.correctly_classified).collect();
    let swaps = records.iter().flat_map(|r| &r.swaps);
    let summary = Summary {
        attack: "wordswap",
        attacked: n,
        success_rate: mean(records.iter().map(|r| r.success as u8 as f64)),
        mean_changed_words: Some(mean(records.iter().map(|r| r.changed_words as f64))),
        mean_changed_fraction: Some(mean(records.iter().map(|r| r.changed_words as f64 / r.length as f64))),
        correctly_classified: Some(correct.len()),
        success_rate_correctly_classified: Some(mean(correct.iter().map(|r| r.success as u8 as f64))),
        logit_reducing_swaps: Some(swaps.clone().filter(|s| s.reduced_logit()).count()),
        total_swaps: Some(swaps.count()),
        ..empty_summary()
    };
    let _ = writeln!(
        csv,
        "mean,,,,{},{},{},{}",
        summary.success_rate,
        mean(records.iter().map(|r| r.length as f64)),
        mean(records.iter().map(|r| r.budget as f64)),
        summary.mean_changed_words.unwrap_or(0.0)
    );
    finish(ctx, "wordswap", csv, &cfg, inputs, summary)
}

fn run_seqtarget(ctx: &Ctx, io: &ModelData, limit: Option<usize>) -> CliResult<()> {
    let cfg = report::load_config(ctx.config.as_deref(), default_seqtarget())?;
    let (model, data, inputs) = inspect::load(io)?;
    let (Model::Sequential(p), Data::Pairs(set)) = (&model, &data) else {
        return Err(wrong_kind("seqtarget", &model));
    };
    let n = limit.unwrap_or(set.len()).min(set.len());
    let records = par_map(ctx, n, |i| {
        let x = &set.pairs[i].0;
        let out = craft_sequential(p, x, &cfg)?;
        let delta = p.forward(&out.adversarial)?.output.sub(&p.forward(x)?.output)?;
        Ok(SeqTargetRecord {
            index: i,
            success: out.success,
            iterations: out.iterations,
            perturbation_norm: out.perturbation_norm,
            changed_positions: out.changed_positions,
            diagnostic: out.diagnostic,
            output_delta: delta,
            adversarial: out.adversarial,
        })
    })?;
    write_records(ctx, "seqtarget", &records)?;
    let mut csv = String::from("index,success,iterations,perturbation_norm,changed_steps\n");
    for r in &records {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.index,
            r.success as u8,
            r.iterations,
            r.perturbation_norm,
            r.changed_positions.len()
        );
    }
    let summary = Summary {
        attack: "seqtarget",
        attacked: n,
        success_rate: mean(records.iter().map(|r| r.success as u8 as f64)),
        mean_perturbation_norm: Some(mean(records.iter().map(|r| r.perturbation_norm))),
        ..empty_summary()
    };
    let _ = writeln!(
        csv,
        "mean,{},{},{},{}",
        summary.success_rate,
        mean(records.iter().map(|r| r.iterations as f64)),
        summary.mean_perturbation_norm.unwrap_or(0.0),
        mean(records.iter().map(|r| r.changed_positions.len() as f64))
    );
    finish(ctx, "seqtarget", csv, &cfg, inputs, summary)
}

fn empty_summary() -> Summary {
    Summary {
        attack: "",
        attacked: 0,
        success_rate: 0.0,
        mean_perturbation_norm: None,
        mean_changed_words: None,
        mean_changed_fraction: None,
        correctly_classified: None,
        success_rate_correctly_classified: None,
        logit_reducing_swaps: None,
        total_swaps: None,
    }
}

fn finish<C: Serialize>(
    ctx: &Ctx,
    kind: &'static str,
    csv: String,
    cfg: &C,
    inputs: Vec<report::InputDigest>,
    summary: Summary,
) -> CliResult<()> {
    report::write_text(&ctx.out.file(&format!("{kind}_summary.csv")), &csv)?;
    let command = format!("attack {kind}");
    report::write_json(
        &ctx.out.file(&format!("{kind}_summary.json")),
        &Report {
            header: Header { command: &command, version: report::VERSION, seed: ctx.seed.unwrap_or(0), config: cfg, inputs },
            body: summary,
        },
    )
}
