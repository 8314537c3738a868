//! The structured model: an aggregation classifier and a column selector
//! over attention-pooled input representations, plus a pointer decoder for
//! the WHERE clause. The two heads make aggregation and selection valid by
//! construction; only the WHERE stream can produce an invalid query.

use rand::Rng;

use crate::autodiff::{argmax, NodeId, ParamId, Params, Tape, Tensor};
use crate::nn::{attention_pool, column_encode, BiLstmParams, Embeddings, LstmParams};
use crate::sql::AggOp;
use crate::table::Column;

use super::{
    assemble_prediction, encode_input, pointer_decode, pointer_teacher_loss, sum_scalars,
    DecodeMode, EncodedInput, InputSequence, LossNodes, ModelConfig, ModelError, PointerDecoder,
    Prediction, RlSample,
};

/// Aggregation head: attention pool, one tanh layer, four logits.
struct AggHead {
    w_inp: ParamId,
    v: ParamId,
    b: ParamId,
    w: ParamId,
    c: ParamId,
}

/// Selection head: its own attention pool (untied from the aggregation
/// head) scored against each column's encoding.
struct SelHead {
    w_inp: ParamId,
    v_inp: ParamId,
    v_col: ParamId,
    w: ParamId,
}

pub struct Seq2SqlModel {
    pub emb: Embeddings,
    encoder: BiLstmParams,
    col_enc: LstmParams,
    agg: AggHead,
    sel: SelHead,
    dec: PointerDecoder,
    cfg: ModelConfig,
}

impl Seq2SqlModel {
    pub fn new(
        params: &mut Params,
        cfg: &ModelConfig,
        emb: Embeddings,
        rng: &mut impl Rng,
    ) -> Self {
        let enc_dim = 2 * cfg.d_hid;
        let a = cfg.attn_dim;
        let s_enc = 1.0 / (enc_dim as f64).sqrt();
        let s_a = 1.0 / (a as f64).sqrt();
        let s_h = 1.0 / (cfg.d_hid as f64).sqrt();
        let encoder = BiLstmParams::init(params, "enc", cfg.d_emb, cfg.d_hid, 2, rng);
        let col_enc = LstmParams::init(params, "col_enc", cfg.d_emb, cfg.d_hid, rng);
        let agg = AggHead {
            w_inp: params.add("agg.w_inp", Tensor::uniform(&[enc_dim], -s_enc, s_enc, rng)),
            v: params.add("agg.v", Tensor::uniform(&[a, enc_dim], -s_enc, s_enc, rng)),
            b: params.add("agg.b", Tensor::zeros(&[a])),
            w: params.add("agg.w", Tensor::uniform(&[4, a], -s_a, s_a, rng)),
            c: params.add("agg.c", Tensor::zeros(&[4])),
        };
        let sel = SelHead {
            w_inp: params.add("sel.w_inp", Tensor::uniform(&[enc_dim], -s_enc, s_enc, rng)),
            v_inp: params.add("sel.v_inp", Tensor::uniform(&[a, enc_dim], -s_enc, s_enc, rng)),
            v_col: params.add("sel.v_col", Tensor::uniform(&[a, cfg.d_hid], -s_h, s_h, rng)),
            w: params.add("sel.w", Tensor::uniform(&[a], -s_a, s_a, rng)),
        };
        let dec = PointerDecoder::init(params, "dec", cfg.d_emb, cfg.d_hid, enc_dim, a, rng);
        Seq2SqlModel { emb, encoder, col_enc, agg, sel, dec, cfg: cfg.clone() }
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
    ) -> Result<EncodedInput, ModelError> {
        encode_input(tape, params, &self.emb, &self.encoder, input, self.cfg.dropout)
    }

    /// Distribution over the four aggregation ops.
    pub fn agg_distribution(
        &self,
        tape: &mut Tape,
        params: &Params,
        encoded: &EncodedInput,
    ) -> Result<NodeId, ModelError> {
        let w_inp = tape.param(params, self.agg.w_inp);
        let (kappa, _) = attention_pool(tape, encoded.hmat, w_inp)?;
        let v = tape.param(params, self.agg.v);
        let b = tape.param(params, self.agg.b);
        let w = tape.param(params, self.agg.w);
        let c = tape.param(params, self.agg.c);
        let vk = tape.matmul(v, kappa)?;
        let pre = tape.add(vk, b)?;
        let th = tape.tanh(pre)?;
        let logits = tape.matmul(w, th)?;
        let logits = tape.add(logits, c)?;
        Ok(tape.softmax(logits, 0)?)
    }

    /// Encode every column name with the column LSTM.
    pub fn column_encodings(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
    ) -> Result<Vec<NodeId>, ModelError> {
        input
            .col_spans
            .iter()
            .map(|&(start, end)| {
                let embeds = self.emb.embed_all(tape, params, &input.ids[start..end])?;
                Ok(column_encode(tape, params, &self.col_enc, &embeds)?)
            })
            .collect()
    }

    /// Distribution over exactly the table's columns.
    pub fn sel_distribution(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        encoded: &EncodedInput,
    ) -> Result<NodeId, ModelError> {
        let cols = self.column_encodings(tape, params, input)?;
        self.sel_distribution_from_cols(tape, params, encoded, &cols)
    }

    /// Score given column encodings against the pooled question
    /// representation. Permuting the encodings permutes the distribution
    /// identically.
    pub fn sel_distribution_from_cols(
        &self,
        tape: &mut Tape,
        params: &Params,
        encoded: &EncodedInput,
        col_encodings: &[NodeId],
    ) -> Result<NodeId, ModelError> {
        let w_inp = tape.param(params, self.sel.w_inp);
        let (kappa, _) = attention_pool(tape, encoded.hmat, w_inp)?;
        let v_inp = tape.param(params, self.sel.v_inp);
        let v_col = tape.param(params, self.sel.v_col);
        let w = tape.param(params, self.sel.w);
        let a = self.cfg.attn_dim;
        let w_row = tape.reshape(w, &[1, a])?;
        let pooled = tape.matmul(v_inp, kappa)?;
        let mut scores = Vec::with_capacity(col_encodings.len());
        for &e_col in col_encodings {
            let ve = tape.matmul(v_col, e_col)?;
            let pre = tape.add(pooled, ve)?;
            let th = tape.tanh(pre)?;
            scores.push(tape.matmul(w_row, th)?);
        }
        let all = tape.concat(&scores, 0)?;
        Ok(tape.softmax(all, 0)?)
    }

    pub fn supervised_loss(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        gold_agg: usize,
        gold_sel: usize,
        gold_where: &[usize],
    ) -> Result<LossNodes, ModelError> {
        let encoded = self.encode(tape, params, input)?;
        let agg_dist = self.agg_distribution(tape, params, &encoded)?;
        let sel_dist = self.sel_distribution(tape, params, input, &encoded)?;
        let l_agg = tape.neg_log_prob(agg_dist, gold_agg)?;
        let l_sel = tape.neg_log_prob(sel_dist, gold_sel)?;
        let l_whe = pointer_teacher_loss(
            tape,
            params,
            &self.dec,
            &self.emb,
            input,
            &encoded,
            gold_where,
            self.cfg.dropout,
        )?;
        Ok(LossNodes { agg: Some(l_agg), sel: Some(l_sel), whe: l_whe })
    }

    /// Sample one WHERE episode for policy-gradient training. Heads stay on
    /// their cross-entropy losses; the caller scores the prediction and
    /// turns the per-step log-probs into the policy loss.
    pub fn rl_sample(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        gold_agg: usize,
        gold_sel: usize,
        schema: &[Column],
    ) -> Result<RlSample, ModelError> {
        let encoded = self.encode(tape, params, input)?;
        let agg_dist = self.agg_distribution(tape, params, &encoded)?;
        let sel_dist = self.sel_distribution(tape, params, input, &encoded)?;
        let l_agg = tape.neg_log_prob(agg_dist, gold_agg)?;
        let l_sel = tape.neg_log_prob(sel_dist, gold_sel)?;
        let decoded = pointer_decode(
            tape,
            params,
            &self.dec,
            &self.emb,
            input,
            &encoded,
            DecodeMode::Sample,
            self.cfg.max_decode_len,
            self.cfg.dropout,
        )?;
        let agg = AggOp::from_code(argmax(tape.value(agg_dist).data()) as u8)
            .expect("distribution has four entries");
        let sel = argmax(tape.value(sel_dist).data());
        let prediction = assemble_prediction(agg, sel, &decoded.tokens, schema);
        Ok(RlSample {
            l_agg,
            l_sel,
            nlps: decoded.nlps,
            where_tokens: decoded.tokens,
            prediction,
        })
    }

    pub fn predict(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        schema: &[Column],
    ) -> Result<Prediction, ModelError> {
        let encoded = self.encode(tape, params, input)?;
        let agg_dist = self.agg_distribution(tape, params, &encoded)?;
        let sel_dist = self.sel_distribution(tape, params, input, &encoded)?;
        let agg = AggOp::from_code(argmax(tape.value(agg_dist).data()) as u8)
            .expect("distribution has four entries");
        let sel = argmax(tape.value(sel_dist).data());
        let decoded = pointer_decode(
            tape,
            params,
            &self.dec,
            &self.emb,
            input,
            &encoded,
            DecodeMode::Greedy,
            self.cfg.max_decode_len,
            self.cfg.dropout,
        )?;
        Ok(assemble_prediction(agg, sel, &decoded.tokens, schema))
    }

    /// The RL loss for an episode: `(reward - baseline) * Σ nlp_t`, whose
    /// gradient is the single-sample policy-gradient estimator.
    pub fn episode_loss(
        tape: &mut Tape,
        nlps: &[NodeId],
        advantage: f64,
    ) -> Result<NodeId, ModelError> {
        let total = sum_scalars(tape, nlps)?;
        Ok(tape.scale(total, advantage)?)
    }
}
