//! Recurrent building blocks: the gated cell, stacked bidirectional
//! encoding, and single-vector column encoding.

use rand::Rng;

use crate::autodiff::{NodeId, ParamId, Params, Tape, Tensor};

use super::NnError;

const GATE_NAMES: [&str; 4] = ["i", "f", "g", "o"];

/// Weights for one LSTM direction: per-gate input and recurrent matrices
/// plus biases, gate order `[input, forget, cell, output]`. The forget-gate
/// bias starts at 1.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub wx: [ParamId; 4],
    pub wh: [ParamId; 4],
    pub b: [ParamId; 4],
    pub d_in: usize,
    pub d_hid: usize,
}

impl LstmParams {
    pub fn init(
        params: &mut Params,
        prefix: &str,
        d_in: usize,
        d_hid: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let sx = 1.0 / (d_in as f64).sqrt();
        let sh = 1.0 / (d_hid as f64).sqrt();
        let mut wx = Vec::with_capacity(4);
        let mut wh = Vec::with_capacity(4);
        let mut b = Vec::with_capacity(4);
        for gate in GATE_NAMES {
            wx.push(params.add(
                &format!("{}.wx_{}", prefix, gate),
                Tensor::uniform(&[d_hid, d_in], -sx, sx, rng),
            ));
            wh.push(params.add(
                &format!("{}.wh_{}", prefix, gate),
                Tensor::uniform(&[d_hid, d_hid], -sh, sh, rng),
            ));
            let bias = if gate == "f" {
                Tensor::from_vec(&[d_hid], vec![1.0; d_hid])
            } else {
                Tensor::zeros(&[d_hid])
            };
            b.push(params.add(&format!("{}.b_{}", prefix, gate), bias));
        }
        LstmParams {
            wx: [wx[0], wx[1], wx[2], wx[3]],
            wh: [wh[0], wh[1], wh[2], wh[3]],
            b: [b[0], b[1], b[2], b[3]],
            d_in,
            d_hid,
        }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> (NodeId, NodeId) {
        let h = tape.leaf(Tensor::zeros(&[self.d_hid]));
        let c = tape.leaf(Tensor::zeros(&[self.d_hid]));
        (h, c)
    }
}

/// One gated update: returns `(h_t, c_t)`.
pub fn lstm_cell(
    tape: &mut Tape,
    params: &Params,
    lp: &LstmParams,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId), NnError> {
    let mut pre = [None; 4];
    for k in 0..4 {
        let wx = tape.param(params, lp.wx[k]);
        let wh = tape.param(params, lp.wh[k]);
        let b = tape.param(params, lp.b[k]);
        let xx = tape.matmul(wx, x)?;
        let hh = tape.matmul(wh, h_prev)?;
        let s = tape.add(xx, hh)?;
        pre[k] = Some(tape.add(s, b)?);
    }
    let i = tape.sigmoid(pre[0].unwrap())?;
    let f = tape.sigmoid(pre[1].unwrap())?;
    let g = tape.tanh(pre[2].unwrap())?;
    let o = tape.sigmoid(pre[3].unwrap())?;
    let fc = tape.mul(f, c_prev)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Run a direction over a sequence, returning every hidden state.
pub fn lstm_sequence(
    tape: &mut Tape,
    params: &Params,
    lp: &LstmParams,
    inputs: &[NodeId],
    init: Option<(NodeId, NodeId)>,
) -> Result<Vec<NodeId>, NnError> {
    if inputs.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let (mut h, mut c) = init.unwrap_or_else(|| lp.zero_state(tape));
    let mut out = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let (nh, nc) = lstm_cell(tape, params, lp, x, h, c)?;
        h = nh;
        c = nc;
        out.push(h);
    }
    Ok(out)
}

/// A stack of bidirectional layers; layer inputs after the first are the
/// concatenated forward/backward states of the layer below.
#[derive(Debug, Clone)]
pub struct BiLstmParams {
    pub layers: Vec<(LstmParams, LstmParams)>,
    pub d_hid: usize,
}

impl BiLstmParams {
    pub fn init(
        params: &mut Params,
        prefix: &str,
        d_in: usize,
        d_hid: usize,
        n_layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let input = if l == 0 { d_in } else { 2 * d_hid };
            let fwd = LstmParams::init(params, &format!("{}.l{}.fwd", prefix, l), input, d_hid, rng);
            let bwd = LstmParams::init(params, &format!("{}.l{}.bwd", prefix, l), input, d_hid, rng);
            layers.push((fwd, bwd));
        }
        BiLstmParams { layers, d_hid }
    }

    /// Output width per position.
    pub fn out_dim(&self) -> usize {
        2 * self.d_hid
    }
}

/// Encode a sequence with the bidirectional stack. Each position's output is
/// `[forward; backward]` of the top layer; dropout follows every layer on
/// training tapes.
pub fn bilstm_encode(
    tape: &mut Tape,
    params: &Params,
    enc: &BiLstmParams,
    inputs: &[NodeId],
    dropout_p: f64,
) -> Result<Vec<NodeId>, NnError> {
    if inputs.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let mut layer_in: Vec<NodeId> = inputs.to_vec();
    for (fwd, bwd) in &enc.layers {
        let h_fwd = lstm_sequence(tape, params, fwd, &layer_in, None)?;
        let reversed: Vec<NodeId> = layer_in.iter().rev().copied().collect();
        let mut h_bwd = lstm_sequence(tape, params, bwd, &reversed, None)?;
        h_bwd.reverse();
        let mut next = Vec::with_capacity(layer_in.len());
        for (hf, hb) in h_fwd.into_iter().zip(h_bwd) {
            let cat = tape.concat(&[hf, hb], 0)?;
            next.push(tape.dropout(cat, dropout_p)?);
        }
        layer_in = next;
    }
    Ok(layer_in)
}

/// Encode a column name: run its token embeddings through an LSTM and keep
/// the final hidden state.
pub fn column_encode(
    tape: &mut Tape,
    params: &Params,
    lp: &LstmParams,
    token_embeds: &[NodeId],
) -> Result<NodeId, NnError> {
    let states = lstm_sequence(tape, params, lp, token_embeds, None)?;
    Ok(*states.last().expect("nonempty sequence has a last state"))
}

/// Stack per-position vectors into a `[T, d]` matrix for attention and
/// pointer scoring.
pub fn stack_rows(tape: &mut Tape, rows: &[NodeId]) -> Result<NodeId, NnError> {
    if rows.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let d = tape.value(rows[0]).len();
    let mut as_rows = Vec::with_capacity(rows.len());
    for &r in rows {
        as_rows.push(tape.reshape(r, &[1, d])?);
    }
    Ok(tape.concat(&as_rows, 0)?)
}
