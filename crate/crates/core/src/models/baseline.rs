//! Attentional encoder-decoder baseline: a closed softmax over a fixed
//! target vocabulary, input feeding, beam-search decoding, and replacement
//! of emitted unknown words by the most-attended input word.

use std::collections::HashMap;

use rand::Rng;

use crate::autodiff::{argmax, NodeId, ParamId, Params, Tape, Tensor};
use crate::datagen::Example;
use crate::nn::{lstm_cell, BiLstmParams, Embeddings, LstmParams, Vocab};
use crate::sql::{gold_tokens_full, query_from_tokens};
use crate::table::{Column, Table};

use super::{encode_input, EncodedInput, InputSequence, LossNodes, ModelConfig, ModelError, Prediction, SQL_VOCAB};

/// Target vocabulary: SQL keywords plus the most frequent training-set
/// column/question tokens, capped by frequency.
pub fn build_target_vocab<'a>(
    examples: impl IntoIterator<Item = &'a Example>,
    tables: &HashMap<&str, &Table>,
    cap: usize,
) -> Vocab {
    let mut freq: HashMap<String, usize> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let count = |tok: String, freq: &mut HashMap<String, usize>, order: &mut Vec<String>| {
        if !freq.contains_key(&tok) {
            order.push(tok.clone());
        }
        *freq.entry(tok).or_insert(0) += 1;
    };
    for ex in examples {
        if let Some(t) = tables.get(ex.table_id.as_str()) {
            for col in t.header() {
                for w in crate::text::normalize(&col.name).split(' ') {
                    count(w.to_string(), &mut freq, &mut order);
                }
            }
        }
        for tok in &ex.question {
            count(tok.clone(), &mut freq, &mut order);
        }
    }
    let mut ranked: Vec<&String> = order.iter().filter(|t| !SQL_VOCAB.contains(&t.as_str())).collect();
    let first_seen: HashMap<&String, usize> =
        order.iter().enumerate().map(|(i, t)| (t, i)).collect();
    ranked.sort_by_key(|t| (std::cmp::Reverse(freq[*t]), first_seen[*t]));

    let mut toks: Vec<&str> = SQL_VOCAB.to_vec();
    let budget = cap.saturating_sub(1 + SQL_VOCAB.len());
    toks.extend(ranked.into_iter().take(budget).map(String::as_str));
    Vocab::build(toks)
}

pub struct BaselineModel {
    pub emb: Embeddings,
    encoder: BiLstmParams,
    dec_layers: Vec<LstmParams>,
    init_proj: Vec<ParamId>,
    w_att: ParamId,
    u_out: ParamId,
    start: ParamId,
    pub input_vocab_ids: HashMap<String, usize>,
    pub target_vocab: Vocab,
    cfg: ModelConfig,
}

struct StepOut {
    dist: NodeId,
    kappa: NodeId,
    att_argmax: usize,
}

impl BaselineModel {
    pub fn new(
        params: &mut Params,
        cfg: &ModelConfig,
        emb: Embeddings,
        target_vocab: Vocab,
        rng: &mut impl Rng,
    ) -> Self {
        let enc_dim = 2 * cfg.d_hid;
        let h = cfg.d_hid;
        let encoder = BiLstmParams::init(params, "enc", cfg.d_emb, h, 2, rng);
        // input feeding: the previous attention context rides along with the
        // previous token's embedding
        let dec_layers = vec![
            LstmParams::init(params, "dec.l0", cfg.d_emb + enc_dim, h, rng),
            LstmParams::init(params, "dec.l1", h, h, rng),
        ];
        let s_enc = 1.0 / (enc_dim as f64).sqrt();
        let init_proj = (0..dec_layers.len())
            .map(|l| {
                params.add(
                    &format!("dec.init{}", l),
                    Tensor::uniform(&[h, enc_dim], -s_enc, s_enc, rng),
                )
            })
            .collect();
        let w_att = params.add("dec.w_att", Tensor::uniform(&[enc_dim, h], -s_enc, s_enc, rng));
        let s_out = 1.0 / ((h + enc_dim) as f64).sqrt();
        let u_out = params.add(
            "dec.u_out",
            Tensor::uniform(&[target_vocab.len(), h + enc_dim], -s_out, s_out, rng),
        );
        let start = params.add("dec.start", Tensor::uniform(&[cfg.d_emb], -0.1, 0.1, rng));
        BaselineModel {
            emb,
            encoder,
            dec_layers,
            init_proj,
            w_att,
            u_out,
            start,
            input_vocab_ids: HashMap::new(),
            target_vocab,
            cfg: cfg.clone(),
        }
    }

    /// Remember the input vocabulary mapping so decoder inputs can be
    /// embedded from emitted target tokens.
    pub fn attach_input_vocab(&mut self, vocab: &Vocab) {
        self.input_vocab_ids = vocab
            .tokens()
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    fn input_id_of(&self, token: &str) -> usize {
        self.input_vocab_ids.get(token).copied().unwrap_or(0)
    }

    fn begin(
        &self,
        tape: &mut Tape,
        params: &Params,
        encoded: &EncodedInput,
    ) -> Result<(Vec<(NodeId, NodeId)>, NodeId, NodeId), ModelError> {
        let states = self
            .dec_layers
            .iter()
            .zip(&self.init_proj)
            .map(|(lp, &proj)| {
                let p = tape.param(params, proj);
                let projected = tape.matmul(p, encoded.last)?;
                let h0 = tape.tanh(projected)?;
                let c0 = tape.leaf(Tensor::zeros(&[lp.d_hid]));
                Ok((h0, c0))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let kappa0 = tape.leaf(Tensor::zeros(&[2 * self.cfg.d_hid]));
        // precompute W h_t for every position
        let w = tape.param(params, self.w_att);
        let wh = tape.matmul(encoded.hmat, w)?;
        Ok((states, kappa0, wh))
    }

    fn step(
        &self,
        tape: &mut Tape,
        params: &Params,
        encoded: &EncodedInput,
        wh: NodeId,
        states: &mut [(NodeId, NodeId)],
        x_emb: NodeId,
        kappa_prev: NodeId,
    ) -> Result<StepOut, ModelError> {
        let x = tape.concat(&[x_emb, kappa_prev], 0)?;
        let mut inp = x;
        for (lp, state) in self.dec_layers.iter().zip(states.iter_mut()) {
            let (h, c) = lstm_cell(tape, params, lp, inp, state.0, state.1)?;
            let h = tape.dropout(h, self.cfg.dropout)?;
            *state = (h, c);
            inp = h;
        }
        let h_dec = inp;
        let scores = tape.matmul(wh, h_dec)?;
        let beta = tape.softmax(scores, 0)?;
        let att_argmax = argmax(tape.value(beta).data());
        let t_len = tape.value(beta).len();
        let beta_row = tape.reshape(beta, &[1, t_len])?;
        let kappa_row = tape.matmul(beta_row, encoded.hmat)?;
        let kappa = tape.reshape(kappa_row, &[2 * self.cfg.d_hid])?;
        let u = tape.param(params, self.u_out);
        let hk = tape.concat(&[h_dec, kappa], 0)?;
        let logits = tape.matmul(u, hk)?;
        let dist = tape.softmax(logits, 0)?;
        Ok(StepOut { dist, kappa, att_argmax })
    }

    /// Teacher-forced cross entropy over the gold target-id sequence.
    pub fn supervised_loss(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        gold_ids: &[usize],
    ) -> Result<LossNodes, ModelError> {
        let encoded = encode_input(tape, params, &self.emb, &self.encoder, input, self.cfg.dropout)?;
        let (mut states, mut kappa, wh) = self.begin(tape, params, &encoded)?;
        let mut x_emb = tape.param(params, self.start);
        let mut nlps = Vec::with_capacity(gold_ids.len());
        for &gold in gold_ids {
            let out = self.step(tape, params, &encoded, wh, &mut states, x_emb, kappa)?;
            nlps.push(tape.neg_log_prob(out.dist, gold)?);
            kappa = out.kappa;
            let tok = self.target_vocab.token(gold).to_string();
            x_emb = self.emb.embed(tape, params, self.input_id_of(&tok))?;
        }
        let whe = super::sum_scalars(tape, &nlps)?;
        Ok(LossNodes { agg: None, sel: None, whe })
    }

    /// Beam-search decode; returns the k-best token sequences with their
    /// log-probabilities, best first. Emitted unknown tokens are replaced by
    /// the input token with the highest attention weight at that step.
    pub fn beam_decode(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        beam_width: usize,
    ) -> Result<Vec<(Vec<String>, f64)>, ModelError> {
        assert!(beam_width >= 1);
        let encoded = encode_input(tape, params, &self.emb, &self.encoder, input, self.cfg.dropout)?;
        let (states, kappa, wh) = self.begin(tape, params, &encoded)?;

        struct Beam {
            tokens: Vec<String>,
            prev_input_id: Option<usize>,
            states: Vec<(NodeId, NodeId)>,
            kappa: NodeId,
            logp: f64,
            done: bool,
        }
        let mut beams = vec![Beam {
            tokens: Vec::new(),
            prev_input_id: None,
            states,
            kappa,
            logp: 0.0,
            done: false,
        }];

        for _ in 0..self.cfg.max_decode_len {
            if beams.iter().all(|b| b.done) {
                break;
            }
            let mut pool: Vec<Beam> = Vec::new();
            for beam in beams {
                if beam.done {
                    pool.push(beam);
                    continue;
                }
                let x_emb = match beam.prev_input_id {
                    None => tape.param(params, self.start),
                    Some(id) => self.emb.embed(tape, params, id)?,
                };
                let mut states = beam.states.clone();
                let out =
                    self.step(tape, params, &encoded, wh, &mut states, x_emb, beam.kappa)?;
                let dist = tape.value(out.dist).data().to_vec();
                for tid in top_k_indices(&dist, beam_width) {
                    let p = dist[tid];
                    let mut tokens = beam.tokens.clone();
                    let raw = self.target_vocab.token(tid);
                    let emitted = if tid == 0 {
                        input.tokens[out.att_argmax].clone()
                    } else {
                        raw.to_string()
                    };
                    let done = raw == "end";
                    tokens.push(emitted);
                    pool.push(Beam {
                        tokens,
                        prev_input_id: Some(self.input_id_of(raw)),
                        states: states.clone(),
                        kappa: out.kappa,
                        logp: beam.logp + p.max(f64::MIN_POSITIVE).ln(),
                        done,
                    });
                }
            }
            pool.sort_by(|a, b| b.logp.total_cmp(&a.logp));
            pool.truncate(beam_width);
            beams = pool;
        }
        beams.sort_by(|a, b| b.logp.total_cmp(&a.logp));
        Ok(beams.into_iter().map(|b| (b.tokens, b.logp)).collect())
    }

    /// Plain argmax rollout, for comparison against `beam_decode(.., 1)`.
    pub fn greedy_decode(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
    ) -> Result<Vec<String>, ModelError> {
        let encoded = encode_input(tape, params, &self.emb, &self.encoder, input, self.cfg.dropout)?;
        let (mut states, mut kappa, wh) = self.begin(tape, params, &encoded)?;
        let mut x_emb = tape.param(params, self.start);
        let mut out_tokens = Vec::new();
        for _ in 0..self.cfg.max_decode_len {
            let out = self.step(tape, params, &encoded, wh, &mut states, x_emb, kappa)?;
            let tid = argmax(tape.value(out.dist).data());
            let raw = self.target_vocab.token(tid).to_string();
            let emitted = if tid == 0 {
                input.tokens[out.att_argmax].clone()
            } else {
                raw.clone()
            };
            out_tokens.push(emitted);
            if raw == "end" {
                break;
            }
            kappa = out.kappa;
            x_emb = self.emb.embed(tape, params, self.input_id_of(&raw))?;
        }
        Ok(out_tokens)
    }

    pub fn predict(
        &self,
        tape: &mut Tape,
        params: &Params,
        input: &InputSequence,
        schema: &[Column],
    ) -> Result<Prediction, ModelError> {
        let kbest = self.beam_decode(tape, params, input, self.cfg.beam_width)?;
        let tokens = kbest.first().map(|(t, _)| t.clone()).unwrap_or_default();
        let assembled = query_from_tokens(&tokens, schema);
        let (agg, sel) = match &assembled {
            Ok(q) => (Some(q.agg), Some(q.sel)),
            Err(_) => (None, None),
        };
        Ok(Prediction { agg, sel, where_tokens: tokens, assembled })
    }

    /// Gold target-id sequence for one example.
    pub fn gold_ids(&self, gold: &crate::sql::Query, schema: &[Column]) -> Vec<usize> {
        gold_tokens_full(gold, schema)
            .iter()
            .map(|t| self.target_vocab.id(t))
            .collect()
    }
}

fn top_k_indices(xs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_input_vocab, prepare_example};
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

    fn setup(target_cap: usize) -> (Table, Vocab, Params, BaselineModel) {
        let t = race_table();
        let ex = example();
        let mut map = HashMap::new();
        map.insert("race", &t);
        let vocab = build_input_vocab(std::iter::once(&ex), &map);
        let tvocab = build_target_vocab(std::iter::once(&ex), &map, target_cap);
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = ModelConfig {
            d_emb: 8,
            d_hid: 8,
            attn_dim: 8,
            dropout: 0.0,
            max_decode_len: 12,
            ..Default::default()
        };
        let emb = Embeddings::init(&mut params, "emb", &vocab, cfg.d_emb, &mut rng);
        let mut model = BaselineModel::new(&mut params, &cfg, emb, tvocab, &mut rng);
        model.attach_input_vocab(&vocab);
        (race_table(), vocab, params, model)
    }

    #[test]
    fn target_vocab_contains_sql_tokens_and_respects_cap() {
        let t = race_table();
        let ex = example();
        let mut map = HashMap::new();
        map.insert("race", &t);
        let tv = build_target_vocab(std::iter::once(&ex), &map, 15);
        assert_eq!(tv.len(), 15);
        for kw in SQL_VOCAB {
            assert!(tv.contains(kw), "missing keyword {}", kw);
        }
        // frequent question tokens beat rare ones under a tight cap
        let big = build_target_vocab(std::iter::once(&ex), &map, 10_000);
        assert!(big.len() > tv.len());
        assert!(big.contains("musetti"));
    }

    #[test]
    fn beam_one_equals_greedy() {
        let (t, vocab, params, model) = setup(10_000);
        let prep = prepare_example(&example(), &t, &vocab).unwrap();
        let mut tape = Tape::eval();
        let greedy = model.greedy_decode(&mut tape, &params, &prep.input).unwrap();
        let mut tape2 = Tape::eval();
        let beam = model.beam_decode(&mut tape2, &params, &prep.input, 1).unwrap();
        assert_eq!(greedy, beam[0].0);
    }

    #[test]
    fn beam_scores_are_non_increasing() {
        let (t, vocab, params, model) = setup(10_000);
        let prep = prepare_example(&example(), &t, &vocab).unwrap();
        let mut tape = Tape::eval();
        let kbest = model.beam_decode(&mut tape, &params, &prep.input, 5).unwrap();
        assert_eq!(kbest.len(), 5);
        for pair in kbest.windows(2) {
            assert!(pair[0].1 >= pair[1].1, "scores out of order");
        }
    }

    #[test]
    fn unknown_tokens_never_reach_the_output() {
        // a tiny target vocabulary forces unknown emissions
        let (t, vocab, params, model) = setup(11);
        let prep = prepare_example(&example(), &t, &vocab).unwrap();
        let mut tape = Tape::eval();
        let kbest = model.beam_decode(&mut tape, &params, &prep.input, 5).unwrap();
        for (tokens, _) in &kbest {
            for tok in tokens {
                assert_ne!(tok, crate::nn::UNK, "unk leaked into the output");
            }
        }
    }

    #[test]
    fn supervised_loss_covers_the_gold_stream() {
        let (t, vocab, params, model) = setup(10_000);
        let prep = prepare_example(&example(), &t, &vocab).unwrap();
        let ids = model.gold_ids(&prep.gold, t.header());
        assert_eq!(ids.last(), Some(&model.target_vocab.id("end")));
        let mut tape = Tape::eval();
        let losses = model.supervised_loss(&mut tape, &params, &prep.input, &ids).unwrap();
        let (_, _, lw) = losses.values(&tape);
        assert!(lw > 0.0 && lw.is_finite());
    }
}
