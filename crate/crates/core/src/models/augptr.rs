//! The augmented pointer network: one pointer decoder emits the entire
//! query token-by-token, selecting exclusively from the input sequence.

use rand::Rng;

use crate::autodiff::{Params, Tape};
use crate::nn::{BiLstmParams, Embeddings};
use crate::sql::query_from_tokens;
use crate::table::Column;

use super::{
    encode_input, pointer_decode, pointer_teacher_loss, DecodeMode, InputSequence, LossNodes,
    ModelConfig, ModelError, PointerDecoder, Prediction,
};

pub struct AugPtrModel {
    pub emb: Embeddings,
    encoder: BiLstmParams,
    dec: PointerDecoder,
    cfg: ModelConfig,
}

impl AugPtrModel {
    pub fn new(
        params: &mut Params,
        cfg: &ModelConfig,
        emb: Embeddings,
        rng: &mut impl Rng,
    ) -> Self {
        let enc_dim = 2 * cfg.d_hid;
        let encoder = BiLstmParams::init(params, "enc", cfg.d_emb, cfg.d_hid, 2, rng);
        let dec =
            PointerDecoder::init(params, "dec", cfg.d_emb, cfg.d_hid, enc_dim, cfg.attn_dim, rng);
        AugPtrModel { emb, encoder, dec, cfg: cfg.clone() }
    }

    pub fn supervised_loss(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        gold_positions: &[usize],
    ) -> Result<LossNodes, ModelError> {
        let encoded = encode_input(tape, params, &self.emb, &self.encoder, input, self.cfg.dropout)?;
        let whe = pointer_teacher_loss(
            tape,
            params,
            &self.dec,
            &self.emb,
            input,
            &encoded,
            gold_positions,
            self.cfg.dropout,
        )?;
        Ok(LossNodes { agg: None, sel: None, whe })
    }

    /// Greedy full-query decode; tokens not forming a valid query surface as
    /// a structure error inside the prediction.
    pub fn predict(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        schema: &[Column],
    ) -> Result<Prediction, ModelError> {
        let encoded = encode_input(tape, params, &self.emb, &self.encoder, input, self.cfg.dropout)?;
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
        let assembled = query_from_tokens(&decoded.tokens, schema);
        let (agg, sel) = match &assembled {
            Ok(q) => (Some(q.agg), Some(q.sel)),
            Err(_) => (None, None),
        };
        Ok(Prediction { agg, sel, where_tokens: decoded.tokens, assembled })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Example;
    use crate::models::{build_input_vocab, gold_full_positions, prepare_example};
    use crate::sql::test_fixtures::{count_engine_query, race_table};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example() -> Example {
        Example {
            table_id: "race".into(),
            question: crate::text::tokenize("how many engine are there when driver is val musetti"),
            question_raw: "how many engine are there when driver is val musetti".into(),
            gold: count_engine_query(),
        }
    }

    #[test]
    fn emitted_tokens_come_from_the_input_and_respect_max_len() {
        let t = race_table();
        let ex = example();
        let mut map = std::collections::HashMap::new();
        map.insert("race", &t);
        let vocab = build_input_vocab(std::iter::once(&ex), &map);
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = ModelConfig {
            d_emb: 8,
            d_hid: 8,
            attn_dim: 8,
            dropout: 0.0,
            max_decode_len: 1,
            ..Default::default()
        };
        let emb = Embeddings::init(&mut params, "emb", &vocab, cfg.d_emb, &mut rng);
        let model = AugPtrModel::new(&mut params, &cfg, emb, &mut rng);
        let prep = prepare_example(&ex, &t, &vocab).unwrap();
        let mut tape = Tape::eval();
        let pred = model.predict(&mut tape, &params, &prep.input, t.header()).unwrap();
        assert!(pred.where_tokens.len() <= 1);
        for tok in &pred.where_tokens {
            assert!(prep.input.tokens.contains(tok));
        }
        // an untrained single-token stream cannot be a valid query
        assert!(pred.is_structure_error());
        assert_eq!(pred.agg, None);
    }

    #[test]
    fn supervised_loss_runs_on_gold_positions() {
        let t = race_table();
        let ex = example();
        let mut map = std::collections::HashMap::new();
        map.insert("race", &t);
        let vocab = build_input_vocab(std::iter::once(&ex), &map);
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ModelConfig { d_emb: 8, d_hid: 8, attn_dim: 8, dropout: 0.0, ..Default::default() };
        let emb = Embeddings::init(&mut params, "emb", &vocab, cfg.d_emb, &mut rng);
        let model = AugPtrModel::new(&mut params, &cfg, emb, &mut rng);
        let prep = prepare_example(&ex, &t, &vocab).unwrap();
        let pos = gold_full_positions(&prep.input, &prep.gold).unwrap();
        let mut tape = Tape::eval();
        let losses = model.supervised_loss(&mut tape, &params, &prep.input, &pos).unwrap();
        let (la, ls, lw) = losses.values(&tape);
        assert_eq!(la, 0.0);
        assert_eq!(ls, 0.0);
        assert!(lw.is_finite() && lw > 0.0);
    }
}
