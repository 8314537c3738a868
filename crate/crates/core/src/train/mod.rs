//! Training: the mixed objective (cross entropy heads plus a teacher-forced
//! or policy-gradient WHERE loss), the epoch loop with early stopping on dev
//! execution accuracy, and checkpointing.

mod adam;
mod checkpoint;
mod reward;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta};
pub use reward::{reinforce_loss, reward, Reward, RewardCause};

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, Params, Tape};
use crate::datagen::{Dataset, Example};
use crate::eval::{evaluate, EvalError};
use crate::models::{
    build_input_vocab, build_target_vocab, prepare_example, AnyModel, LossNodes, ModelConfig,
    ModelError, ModelKind, Prediction, Prepared, Targets,
};
use crate::nn::Vocab;
use crate::table::Table;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration errors: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("episode has {tokens} tokens but {log_probs} log-probabilities")]
    LengthMismatch { tokens: usize, log_probs: usize },
    #[error("non-finite value during training: {context}")]
    Numeric { context: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Data(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Supervised,
    Rl,
}

/// Training hyperparameters. The policy-gradient phase requires a
/// supervised checkpoint to fine-tune from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub phase: Phase,
    /// Global-norm gradient clip; `None` disables.
    pub clip_norm: Option<f64>,
    /// Constant subtracted from rewards before weighting log-probs. Off by
    /// default: the estimator is the raw single-sample form.
    pub reward_baseline: Option<f64>,
    /// Stop as soon as dev logical-form accuracy reaches this value; a
    /// convenience for convergence harnesses, off by default.
    pub stop_at_dev_lf: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            dropout: 0.3,
            max_epochs: 300,
            patience: 10,
            batch_size: 16,
            seed: 1,
            phase: Phase::Supervised,
            clip_norm: Some(5.0),
            reward_baseline: None,
            stop_at_dev_lf: None,
        }
    }
}

impl TrainConfig {
    /// All validation problems at once, so operators see the full list.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.lr > 0.0) {
            errs.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            errs.push(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.max_epochs == 0 {
            errs.push("max_epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be at least 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                errs.push(format!("clip_norm must be positive, got {}", c));
            }
        }
        errs
    }
}

/// One epoch's log record; these lines are the training log file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_agg: f64,
    pub l_sel: f64,
    pub l_whe: f64,
    pub dev_acc_ex: f64,
    pub dev_acc_lf: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub epochs_run: usize,
}

/// Mean per-component losses over one optimizer step.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub l_agg: f64,
    pub l_sel: f64,
    pub l_whe: f64,
    pub total: f64,
}

fn numeric_context(e: &ModelError, what: &str) -> Option<String> {
    if let ModelError::Ad(AdError::NonFinite { op }) = e {
        Some(format!("{} produced a non-finite value in op '{}'", what, op))
    } else {
        None
    }
}

/// One optimizer update over a batch: build a tape per example, backward on
/// the scaled mixed objective, accumulate into the shared gradients, then
/// apply ADAM. Gradients are averaged over the batch.
#[allow(clippy::too_many_arguments)]
pub fn mixed_step(
    model: &AnyModel,
    params: &mut Params,
    opt: &mut Adam,
    batch: &[(&Prepared, &Targets)],
    tables: &HashMap<&str, &Table>,
    cfg: &TrainConfig,
    step_seed: u64,
) -> Result<StepStats, TrainError> {
    assert!(!batch.is_empty());
    params.zero_grads();
    let scale = 1.0 / batch.len() as f64;
    let mut stats = StepStats { l_agg: 0.0, l_sel: 0.0, l_whe: 0.0, total: 0.0 };
    for (i, (prep, targets)) in batch.iter().enumerate() {
        let table = tables
            .get(prep.table_id.as_str())
            .ok_or_else(|| TrainError::Data(format!("unknown table '{}'", prep.table_id)))?;
        let seed = step_seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut tape = Tape::training(seed);
        let wrap = |e: ModelError| match numeric_context(&e, "forward pass") {
            Some(context) => TrainError::Numeric { context },
            None => TrainError::Model(e),
        };
        let losses: LossNodes = match cfg.phase {
            Phase::Supervised => model
                .supervised_loss(&mut tape, params, prep, targets)
                .map_err(wrap)?,
            Phase::Rl => {
                let sample = model
                    .rl_sample(&mut tape, params, prep, targets, table.header())
                    .map_err(wrap)?;
                let r = reward(&sample.prediction, &prep.gold, table);
                let l_whe = reinforce_loss(
                    &mut tape,
                    &sample.where_tokens,
                    &sample.nlps,
                    r.value,
                    cfg.reward_baseline.unwrap_or(0.0),
                )?;
                LossNodes { agg: Some(sample.l_agg), sel: Some(sample.l_sel), whe: l_whe }
            }
        };
        let (la, ls, lw) = losses.values(&tape);
        stats.l_agg += la * scale;
        stats.l_sel += ls * scale;
        stats.l_whe += lw * scale;
        stats.total += (la + ls + lw) * scale;
        let total = losses.total(&mut tape).map_err(|e| TrainError::Numeric {
            context: format!("loss combination: {}", e),
        })?;
        let scaled = tape.scale(total, scale).map_err(|e| TrainError::Numeric {
            context: format!("loss scaling: {}", e),
        })?;
        tape.backward(scaled).map_err(|e| TrainError::Numeric {
            context: format!("backward pass: {}", e),
        })?;
        tape.add_grads_to(params);
    }
    opt.step(params, cfg.clip_norm);
    Ok(stats)
}

/// Rebuild a model and its parameters from a checkpoint.
pub fn restore_model(ckpt: &Checkpoint) -> Result<(AnyModel, Params, Vocab), TrainError> {
    let vocab = Vocab::from_token_list(ckpt.meta.vocab.clone()).map_err(ModelError::Nn)?;
    let tvocab = match &ckpt.meta.target_vocab {
        Some(toks) => Some(Vocab::from_token_list(toks.clone()).map_err(ModelError::Nn)?),
        None => None,
    };
    let mut params = Params::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = AnyModel::build(&mut params, &ckpt.meta.model, &vocab, tvocab.as_ref(), None, &mut rng)?;
    params
        .load_values_from(&ckpt.params)
        .map_err(CheckpointError::Corrupt)?;
    Ok((model, params, vocab))
}

/// Greedy predictions for a list of examples under an eval-mode tape.
pub fn predict_examples(
    model: &AnyModel,
    params: &Params,
    examples: &[Example],
    tables: &HashMap<&str, &Table>,
    vocab: &Vocab,
) -> Result<Vec<Prediction>, TrainError> {
    examples
        .iter()
        .map(|ex| {
            let table = tables
                .get(ex.table_id.as_str())
                .ok_or_else(|| TrainError::Data(format!("unknown table '{}'", ex.table_id)))?;
            let prep = prepare_example(ex, table, vocab)?;
            let mut tape = Tape::eval();
            Ok(model.predict(&mut tape, params, &prep.input, table.header())?)
        })
        .collect()
}

fn prepare_split(
    examples: &[Example],
    tables: &HashMap<&str, &Table>,
    vocab: &Vocab,
    kind: ModelKind,
    tvocab: Option<&Vocab>,
) -> Result<Vec<(Prepared, Targets)>, TrainError> {
    examples
        .iter()
        .map(|ex| {
            let table = tables
                .get(ex.table_id.as_str())
                .ok_or_else(|| TrainError::Data(format!("unknown table '{}'", ex.table_id)))?;
            let prep = prepare_example(ex, table, vocab)?;
            let targets = prep.targets_for(kind, tvocab, table.header())?;
            Ok((prep, targets))
        })
        .collect()
}

/// Train a model on a dataset. Supervised training starts from fresh
/// parameters (or an explicit checkpoint); the policy-gradient phase always
/// fine-tunes a supervised checkpoint. Early stopping watches dev execution
/// accuracy and the best-scoring parameters are what gets checkpointed.
pub fn train(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    init_from: Option<Checkpoint>,
    emb_file: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    let mut errs = cfg.validate();
    if dataset.train.is_empty() {
        errs.push("training split is empty".into());
    }
    if cfg.phase == Phase::Rl && init_from.is_none() {
        errs.push("policy-gradient phase requires a supervised checkpoint".into());
    }
    let effective_kind = init_from
        .as_ref()
        .map(|c| c.meta.model.kind)
        .unwrap_or(model_cfg.kind);
    if cfg.phase == Phase::Rl && effective_kind != ModelKind::Seq2sql {
        errs.push("policy-gradient phase is only defined for the seq2sql model".into());
    }
    if !errs.is_empty() {
        return Err(TrainError::Config(errs));
    }

    let tables = dataset.table_index();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // architecture and vocabularies come from the checkpoint when resuming
    let (model, mut params, vocab, effective_cfg) = match init_from {
        Some(ckpt) => {
            let mut effective_cfg = ckpt.meta.model.clone();
            effective_cfg.dropout = cfg.dropout;
            let adjusted = Checkpoint {
                meta: CheckpointMeta { model: effective_cfg.clone(), ..ckpt.meta.clone() },
                params: ckpt.params,
            };
            let (model, params, vocab) = restore_model(&adjusted)?;
            (model, params, vocab, effective_cfg)
        }
        None => {
            let mut effective_cfg = model_cfg.clone();
            effective_cfg.dropout = cfg.dropout;
            let vocab = build_input_vocab(dataset.train.iter(), &tables);
            let tvocab = match effective_cfg.kind {
                ModelKind::Baseline => Some(build_target_vocab(
                    dataset.train.iter(),
                    &tables,
                    effective_cfg.target_vocab_cap,
                )),
                _ => None,
            };
            let mut params = Params::new();
            let model = AnyModel::build(
                &mut params,
                &effective_cfg,
                &vocab,
                tvocab.as_ref(),
                emb_file,
                &mut rng,
            )?;
            (model, params, vocab, effective_cfg)
        }
    };

    let train_set = prepare_split(&dataset.train, &tables, &vocab, model.kind(), model.target_vocab())?;
    let n_train = train_set.len();

    // seed "best" with the pre-training state so fine-tuning can never end
    // worse than it started on dev
    let initial_preds = predict_examples(&model, &params, &dataset.dev, &tables, &vocab)?;
    let initial_report = evaluate(&initial_preds, &dataset.dev, &tables)?;
    let mut best_acc = initial_report.acc_ex;
    let mut best_params = params.clone();
    let mut since_improved = 0usize;

    let mut opt = Adam::new(cfg.lr);
    let mut log: Vec<EpochLog> = Vec::new();
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut sums = (0.0, 0.0, 0.0);
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Prepared, &Targets)> =
                chunk.iter().map(|&i| (&train_set[i].0, &train_set[i].1)).collect();
            let step_seed: u64 = rng.gen();
            let stats = mixed_step(&model, &mut params, &mut opt, &batch, &tables, cfg, step_seed)?;
            sums.0 += stats.l_agg;
            sums.1 += stats.l_sel;
            sums.2 += stats.l_whe;
            steps += 1;
        }
        let denom = steps.max(1) as f64;

        let dev_preds = predict_examples(&model, &params, &dataset.dev, &tables, &vocab)?;
        let report = evaluate(&dev_preds, &dataset.dev, &tables)?;
        log.push(EpochLog {
            epoch,
            l_agg: sums.0 / denom,
            l_sel: sums.1 / denom,
            l_whe: sums.2 / denom,
            dev_acc_ex: report.acc_ex,
            dev_acc_lf: report.acc_lf,
        });
        epochs_run = epoch;

        if report.acc_ex > best_acc {
            best_acc = report.acc_ex;
            best_params = params.clone();
            since_improved = 0;
        } else {
            since_improved += 1;
        }
        if cfg.stop_at_dev_lf.map_or(false, |target| report.acc_lf >= target) {
            best_params = params.clone();
            best_acc = best_acc.max(report.acc_ex);
            break;
        }
        if since_improved >= cfg.patience {
            break;
        }
    }

    let checkpoint = Checkpoint {
        meta: CheckpointMeta {
            model: effective_cfg,
            vocab: vocab.tokens().to_vec(),
            target_vocab: model.target_vocab().map(|tv| tv.tokens().to_vec()),
            best_dev_acc_ex: best_acc,
            train: serde_json::to_value(cfg).expect("train config serializes"),
        },
        params: best_params,
    };
    Ok(TrainOutcome { checkpoint, log, epochs_run })
}
