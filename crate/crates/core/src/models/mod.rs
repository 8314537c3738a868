//! The three query-generation systems: an augmented pointer network that
//! emits whole queries, the structured three-headed model (aggregation
//! classifier, column selector, pointer-decoded WHERE clause), and an
//! attentional encoder-decoder baseline with beam search.

mod augptr;
mod baseline;
mod input;
mod seq2sql;

pub use augptr::AugPtrModel;
pub use baseline::{build_target_vocab, BaselineModel};
pub use input::{build_input_sequence, InputSequence, Segment, SENT_COL, SENT_QUESTION, SENT_SQL, SQL_VOCAB};
pub use seq2sql::Seq2SqlModel;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, NodeId, ParamId, Params, Tape, Tensor};
use crate::datagen::Example;
use crate::nn::{
    bilstm_encode, lstm_cell, pointer_scores, stack_rows, BiLstmParams, Embeddings, LstmParams,
    NnError, PointerParams, Vocab,
};
use crate::sql::{conds_from_tokens, gold_tokens_full, Query, SqlError};
use crate::table::{Column, Table};
use crate::text::tokenize_with_gloss;

#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("empty model input")]
    EmptyInput,
    #[error("gold token '{0}' cannot be pointed at in the input sequence")]
    TokenNotInInput(String),
    #[error("model kind does not support policy-gradient sampling")]
    RlUnsupported,
    #[error("baseline model requires a target vocabulary")]
    MissingTargetVocab,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Ad(#[from] AdError),
}

impl From<ModelError> for AdError {
    fn from(e: ModelError) -> AdError {
        match e {
            ModelError::Ad(a) => a,
            ModelError::Nn(n) => n.into_ad(),
            other => AdError::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    AugPtr,
    Seq2sql,
    Baseline,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "aug_ptr" => Some(ModelKind::AugPtr),
            "seq2sql" => Some(ModelKind::Seq2sql),
            "baseline" => Some(ModelKind::Baseline),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AugPtr => "aug_ptr",
            ModelKind::Seq2sql => "seq2sql",
            ModelKind::Baseline => "baseline",
        }
    }
}

/// Architecture hyperparameters. Desk-scale defaults; raise the sizes to
/// match larger experiments.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub d_emb: usize,
    pub d_hid: usize,
    pub attn_dim: usize,
    pub dropout: f64,
    pub max_decode_len: usize,
    pub beam_width: usize,
    pub target_vocab_cap: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Seq2sql,
            d_emb: 32,
            d_hid: 32,
            attn_dim: 32,
            dropout: 0.3,
            max_decode_len: 40,
            beam_width: 5,
            target_vocab_cap: 10_000,
        }
    }
}

/// A decoded prediction: the three query parts plus the assembly result.
/// `assembled` carries the structure error as data when the emitted token
/// stream is not a valid query.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub agg: Option<crate::sql::AggOp>,
    pub sel: Option<usize>,
    pub where_tokens: Vec<String>,
    pub assembled: Result<Query, SqlError>,
}

impl Prediction {
    pub fn is_structure_error(&self) -> bool {
        self.assembled.is_err()
    }

    pub fn to_json(&self) -> serde_json::Value {
        match &self.assembled {
            Ok(q) => q.to_json(),
            Err(_) => serde_json::json!({"error": "structure"}),
        }
    }
}

/// Combine head outputs into a prediction. Aggregation and selection are
/// valid by construction; only the WHERE stream can fail to assemble.
pub fn assemble_prediction(
    agg: crate::sql::AggOp,
    sel: usize,
    where_tokens: &[String],
    schema: &[Column],
) -> Prediction {
    let assembled = conds_from_tokens(where_tokens, schema)
        .map(|conds| Query { agg, sel, conds });
    Prediction {
        agg: Some(agg),
        sel: Some(sel),
        where_tokens: where_tokens.to_vec(),
        assembled,
    }
}

/// Build the shared input vocabulary from the training split: sentinels and
/// SQL keywords first, then column and question tokens in first-seen order.
pub fn build_input_vocab<'a>(
    examples: impl IntoIterator<Item = &'a Example>,
    tables: &std::collections::HashMap<&str, &Table>,
) -> Vocab {
    let mut toks: Vec<String> = vec![SENT_COL.into(), SENT_SQL.into(), SENT_QUESTION.into()];
    toks.extend(SQL_VOCAB.iter().map(|s| s.to_string()));
    for ex in examples {
        if let Some(t) = tables.get(ex.table_id.as_str()) {
            for col in t.header() {
                toks.extend(crate::text::normalize(&col.name).split(' ').map(str::to_string));
            }
        }
        toks.extend(ex.question.iter().cloned());
    }
    Vocab::build(toks.iter().map(String::as_str))
}

// ---------------------------------------------------------------------------
// shared encoder / pointer-decoder plumbing

/// One example's encoded input: the `[T, 2H]` matrix of encoder states and
/// the final state used to initialize decoders.
pub struct EncodedInput {
    pub hmat: NodeId,
    pub last: NodeId,
}

pub(crate) fn encode_input(
    tape: &mut Tape,
    params: &Params,
    emb: &Embeddings,
    enc: &BiLstmParams,
    input: &InputSequence,
    dropout: f64,
) -> Result<EncodedInput, ModelError> {
    let embedded = emb.embed_all(tape, params, &input.ids)?;
    let states = bilstm_encode(tape, params, enc, &embedded, dropout)?;
    let hmat = stack_rows(tape, &states)?;
    let last = *states.last().expect("nonempty encoding");
    Ok(EncodedInput { hmat, last })
}

/// Two-layer unidirectional pointer decoder with a learned start embedding;
/// hidden states start from a projection of the final encoder state.
#[derive(Debug, Clone)]
pub(crate) struct PointerDecoder {
    pub layers: Vec<LstmParams>,
    pub init_proj: Vec<ParamId>,
    pub ptr: PointerParams,
    pub start: ParamId,
}

impl PointerDecoder {
    pub fn init(
        params: &mut Params,
        prefix: &str,
        d_emb: usize,
        d_hid: usize,
        enc_dim: usize,
        attn_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = vec![
            LstmParams::init(params, &format!("{}.l0", prefix), d_emb, d_hid, rng),
            LstmParams::init(params, &format!("{}.l1", prefix), d_hid, d_hid, rng),
        ];
        let scale = 1.0 / (enc_dim as f64).sqrt();
        let init_proj = (0..layers.len())
            .map(|l| {
                params.add(
                    &format!("{}.init{}", prefix, l),
                    Tensor::uniform(&[d_hid, enc_dim], -scale, scale, rng),
                )
            })
            .collect();
        let ptr = PointerParams::init(params, &format!("{}.ptr", prefix), d_hid, enc_dim, attn_dim, rng);
        let start = params.add(
            &format!("{}.start", prefix),
            Tensor::uniform(&[d_emb], -0.1, 0.1, rng),
        );
        PointerDecoder { layers, init_proj, ptr, start }
    }

    pub fn begin(
        &self,
        tape: &mut Tape,
        params: &Params,
        enc_last: NodeId,
    ) -> Result<Vec<(NodeId, NodeId)>, ModelError> {
        self.layers
            .iter()
            .zip(&self.init_proj)
            .map(|(lp, &proj)| {
                let p = tape.param(params, proj);
                let projected = tape.matmul(p, enc_last)?;
                let h0 = tape.tanh(projected)?;
                let c0 = tape.leaf(Tensor::zeros(&[lp.d_hid]));
                Ok((h0, c0))
            })
            .collect()
    }

    /// One decoder step; returns the top layer's hidden state.
    pub fn step(
        &self,
        tape: &mut Tape,
        params: &Params,
        states: &mut [(NodeId, NodeId)],
        x: NodeId,
        dropout: f64,
    ) -> Result<NodeId, ModelError> {
        let mut inp = x;
        for (lp, state) in self.layers.iter().zip(states.iter_mut()) {
            let (h, c) = lstm_cell(tape, params, lp, inp, state.0, state.1)?;
            let h = tape.dropout(h, dropout)?;
            *state = (h, c);
            inp = h;
        }
        Ok(inp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// A decoded token stream with its pointer positions and per-step
/// negative-log-probability nodes (the policy-gradient carriers).
pub struct DecodeOut {
    pub positions: Vec<usize>,
    pub tokens: Vec<String>,
    pub nlps: Vec<NodeId>,
}

pub(crate) fn pointer_decode(
    tape: &mut Tape,
    params: &Params,
    dec: &PointerDecoder,
    emb: &Embeddings,
    input: &InputSequence,
    encoded: &EncodedInput,
    mode: DecodeMode,
    max_len: usize,
    dropout: f64,
) -> Result<DecodeOut, ModelError> {
    let scorer = dec.ptr.precompute(tape, params, encoded.hmat)?;
    let mut states = dec.begin(tape, params, encoded.last)?;
    let mut x = tape.param(params, dec.start);
    let mut out = DecodeOut { positions: Vec::new(), tokens: Vec::new(), nlps: Vec::new() };
    for _ in 0..max_len {
        let g = dec.step(tape, params, &mut states, x, dropout)?;
        let scores = pointer_scores(tape, params, &dec.ptr, scorer, g)?;
        let dist = tape.softmax(scores, 0)?;
        let pos = match mode {
            DecodeMode::Greedy => crate::autodiff::argmax(tape.value(dist).data()),
            DecodeMode::Sample => {
                let probs = tape.value(dist).data().to_vec();
                crate::autodiff::sample_index(&probs, tape.rng())
            }
        };
        out.nlps.push(tape.neg_log_prob(dist, pos)?);
        out.positions.push(pos);
        let token = input.tokens[pos].clone();
        let stop = token == "end";
        out.tokens.push(token);
        if stop {
            break;
        }
        x = emb.embed(tape, params, input.ids[pos])?;
    }
    Ok(out)
}

/// Teacher-forced cross entropy along a gold pointer path; the summed loss
/// node covers every step including the stop token.
pub(crate) fn pointer_teacher_loss(
    tape: &mut Tape,
    params: &Params,
    dec: &PointerDecoder,
    emb: &Embeddings,
    input: &InputSequence,
    encoded: &EncodedInput,
    gold_positions: &[usize],
    dropout: f64,
) -> Result<NodeId, ModelError> {
    let scorer = dec.ptr.precompute(tape, params, encoded.hmat)?;
    let mut states = dec.begin(tape, params, encoded.last)?;
    let mut x = tape.param(params, dec.start);
    let mut nlps = Vec::with_capacity(gold_positions.len());
    for &gold in gold_positions {
        let g = dec.step(tape, params, &mut states, x, dropout)?;
        let scores = pointer_scores(tape, params, &dec.ptr, scorer, g)?;
        let dist = tape.softmax(scores, 0)?;
        nlps.push(tape.neg_log_prob(dist, gold)?);
        x = emb.embed(tape, params, input.ids[gold])?;
    }
    Ok(sum_scalars(tape, &nlps)?)
}

pub(crate) fn sum_scalars(tape: &mut Tape, nodes: &[NodeId]) -> Result<NodeId, AdError> {
    debug_assert!(!nodes.is_empty());
    let cat = tape.concat(nodes, 0)?;
    tape.sum_all(cat)
}

// ---------------------------------------------------------------------------
// gold pointer paths

fn value_tokens_of(v: &crate::table::Value) -> Vec<String> {
    v.normalized().split_whitespace().map(str::to_string).collect()
}

fn push_where_positions(
    out: &mut Vec<usize>,
    input: &InputSequence,
    gold: &Query,
) -> Result<(), ModelError> {
    for (i, cond) in gold.conds.iter().enumerate() {
        let kw = if i == 0 { "where" } else { "and" };
        out.push(input.sql_pos(kw).ok_or_else(|| ModelError::TokenNotInInput(kw.into()))?);
        let (start, end) = input.col_spans[cond.col];
        out.extend(start..end);
        let op = cond.op.symbol();
        out.push(input.sql_pos(op).ok_or_else(|| ModelError::TokenNotInInput(op.into()))?);
        out.extend(input.value_positions(&value_tokens_of(&cond.value))?);
    }
    out.push(input.sql_pos("end").ok_or_else(|| ModelError::TokenNotInInput("end".into()))?);
    Ok(())
}

/// Pointer positions spelling the gold WHERE stream
/// (`where col op value [and ...] end`, or bare `end`).
pub fn gold_where_positions(input: &InputSequence, gold: &Query) -> Result<Vec<usize>, ModelError> {
    let mut out = Vec::new();
    push_where_positions(&mut out, input, gold)?;
    Ok(out)
}

/// Pointer positions spelling the gold full-query stream for the augmented
/// pointer network.
pub fn gold_full_positions(input: &InputSequence, gold: &Query) -> Result<Vec<usize>, ModelError> {
    let mut out = Vec::new();
    out.push(input.sql_pos("select").ok_or_else(|| ModelError::TokenNotInInput("select".into()))?);
    if let Some(kw) = gold.agg.keyword() {
        let kw = kw.to_lowercase();
        out.push(input.sql_pos(&kw).ok_or_else(|| ModelError::TokenNotInInput(kw.clone()))?);
    }
    let (start, end) = input.col_spans[gold.sel];
    out.extend(start..end);
    push_where_positions(&mut out, input, gold)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// per-example preparation and the model dispatch enum

/// Supervision targets, one variant per model kind.
#[derive(Debug, Clone)]
pub enum Targets {
    Seq2sql { agg: usize, sel: usize, where_pos: Vec<usize> },
    AugPtr { pos: Vec<usize> },
    Baseline { ids: Vec<usize> },
}

/// An example converted to model form: input sequence, gold query, and the
/// kind-specific supervision targets.
pub struct Prepared {
    pub input: InputSequence,
    pub gold: Query,
    pub table_id: String,
}

impl Prepared {
    pub fn targets_for(&self, kind: ModelKind, tvocab: Option<&Vocab>, schema: &[Column]) -> Result<Targets, ModelError> {
        match kind {
            ModelKind::Seq2sql => Ok(Targets::Seq2sql {
                agg: self.gold.agg.code() as usize,
                sel: self.gold.sel,
                where_pos: gold_where_positions(&self.input, &self.gold)?,
            }),
            ModelKind::AugPtr => Ok(Targets::AugPtr {
                pos: gold_full_positions(&self.input, &self.gold)?,
            }),
            ModelKind::Baseline => {
                let tv = tvocab.ok_or(ModelError::MissingTargetVocab)?;
                let ids = gold_tokens_full(&self.gold, schema)
                    .iter()
                    .map(|t| tv.id(t))
                    .collect();
                Ok(Targets::Baseline { ids })
            }
        }
    }
}

/// Build the model-facing view of one example.
pub fn prepare_example(ex: &Example, table: &Table, vocab: &Vocab) -> Result<Prepared, ModelError> {
    let question = tokenize_with_gloss(&ex.question_raw);
    let input = build_input_sequence(table.header(), &question, vocab)?;
    Ok(Prepared { input, gold: ex.gold.clone(), table_id: ex.table_id.clone() })
}

/// Per-component loss nodes; absent heads (non-structured models) report
/// zero.
pub struct LossNodes {
    pub agg: Option<NodeId>,
    pub sel: Option<NodeId>,
    pub whe: NodeId,
}

impl LossNodes {
    pub fn total(&self, tape: &mut Tape) -> Result<NodeId, AdError> {
        let mut total = self.whe;
        if let Some(a) = self.agg {
            total = tape.add(total, a)?;
        }
        if let Some(s) = self.sel {
            total = tape.add(total, s)?;
        }
        Ok(total)
    }

    pub fn values(&self, tape: &Tape) -> (f64, f64, f64) {
        (
            self.agg.map_or(0.0, |n| tape.value(n).item()),
            self.sel.map_or(0.0, |n| tape.value(n).item()),
            tape.value(self.whe).item(),
        )
    }
}

/// A sampled policy-gradient episode: head losses, per-step log-prob
/// carriers, and the assembled prediction awaiting its reward.
pub struct RlSample {
    pub l_agg: NodeId,
    pub l_sel: NodeId,
    pub nlps: Vec<NodeId>,
    pub where_tokens: Vec<String>,
    pub prediction: Prediction,
}

/// Model dispatch: one enum so training and evaluation stay generic.
pub enum AnyModel {
    AugPtr(AugPtrModel),
    Seq2sql(Seq2SqlModel),
    Baseline(BaselineModel),
}

impl AnyModel {
    pub fn build(
        params: &mut Params,
        cfg: &ModelConfig,
        vocab: &Vocab,
        target_vocab: Option<&Vocab>,
        emb_file: Option<&Path>,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<AnyModel, ModelError> {
        let emb = match emb_file {
            Some(path) => Embeddings::init_from_file(params, "emb", vocab, cfg.d_emb, path)?,
            None => Embeddings::init(params, "emb", vocab, cfg.d_emb, rng),
        };
        Ok(match cfg.kind {
            ModelKind::AugPtr => AnyModel::AugPtr(AugPtrModel::new(params, cfg, emb, rng)),
            ModelKind::Seq2sql => AnyModel::Seq2sql(Seq2SqlModel::new(params, cfg, emb, rng)),
            ModelKind::Baseline => {
                let tv = target_vocab.ok_or(ModelError::MissingTargetVocab)?.clone();
                let mut model = BaselineModel::new(params, cfg, emb, tv, rng);
                model.attach_input_vocab(vocab);
                AnyModel::Baseline(model)
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::AugPtr(_) => ModelKind::AugPtr,
            AnyModel::Seq2sql(_) => ModelKind::Seq2sql,
            AnyModel::Baseline(_) => ModelKind::Baseline,
        }
    }

    pub fn target_vocab(&self) -> Option<&Vocab> {
        match self {
            AnyModel::Baseline(m) => Some(&m.target_vocab),
            _ => None,
        }
    }

    pub fn supervised_loss(
        &self,
        tape: &mut Tape,
        params: &Params,
        prep: &Prepared,
        targets: &Targets,
    ) -> Result<LossNodes, ModelError> {
        match (self, targets) {
            (AnyModel::Seq2sql(m), Targets::Seq2sql { agg, sel, where_pos }) => {
                m.supervised_loss(tape, params, &prep.input, *agg, *sel, where_pos)
            }
            (AnyModel::AugPtr(m), Targets::AugPtr { pos }) => {
                m.supervised_loss(tape, params, &prep.input, pos)
            }
            (AnyModel::Baseline(m), Targets::Baseline { ids }) => {
                m.supervised_loss(tape, params, &prep.input, ids)
            }
            _ => Err(ModelError::EmptyInput),
        }
    }

    pub fn rl_sample(
        &self,
        tape: &mut Tape,
        params: &Params,
        prep: &Prepared,
        targets: &Targets,
        schema: &[Column],
    ) -> Result<RlSample, ModelError> {
        match (self, targets) {
            (AnyModel::Seq2sql(m), Targets::Seq2sql { agg, sel, .. }) => {
                m.rl_sample(tape, params, &prep.input, *agg, *sel, schema)
            }
            _ => Err(ModelError::RlUnsupported),
        }
    }

    pub fn predict(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        schema: &[Column],
    ) -> Result<Prediction, ModelError> {
        match self {
            AnyModel::Seq2sql(m) => m.predict(tape, params, input, schema),
            AnyModel::AugPtr(m) => m.predict(tape, params, input, schema),
            AnyModel::Baseline(m) => m.predict(tape, params, input, schema),
        }
    }
}
