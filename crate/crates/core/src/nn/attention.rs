//! Attention pooling over encoder states and the pointer scoring head.

use rand::Rng;

use crate::autodiff::{NodeId, ParamId, Params, Tape, Tensor};

use super::NnError;

/// Score every encoder state with a learned vector, normalize, and take the
/// weighted sum: returns `(pooled, weights)`.
pub fn attention_pool(
    tape: &mut Tape,
    hmat: NodeId,
    w_inp: NodeId,
) -> Result<(NodeId, NodeId), NnError> {
    let scores = tape.matmul(hmat, w_inp)?;
    let beta = tape.softmax(scores, 0)?;
    let t = tape.value(beta).len();
    let beta_row = tape.reshape(beta, &[1, t])?;
    let pooled_row = tape.matmul(beta_row, hmat)?;
    let d = tape.value(pooled_row).len();
    let pooled = tape.reshape(pooled_row, &[d])?;
    Ok((pooled, beta))
}

/// Pointer-head weights: one scalar score per input position from
/// `w · tanh(U g + V h_t)`.
#[derive(Debug, Clone)]
pub struct PointerParams {
    pub u: ParamId,
    pub v: ParamId,
    pub w: ParamId,
    pub attn_dim: usize,
}

impl PointerParams {
    pub fn init(
        params: &mut Params,
        prefix: &str,
        state_dim: usize,
        enc_dim: usize,
        attn_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let su = 1.0 / (state_dim as f64).sqrt();
        let sv = 1.0 / (enc_dim as f64).sqrt();
        let sw = 1.0 / (attn_dim as f64).sqrt();
        PointerParams {
            u: params.add(&format!("{}.u", prefix), Tensor::uniform(&[attn_dim, state_dim], -su, su, rng)),
            v: params.add(&format!("{}.v", prefix), Tensor::uniform(&[enc_dim, attn_dim], -sv, sv, rng)),
            w: params.add(&format!("{}.w", prefix), Tensor::uniform(&[attn_dim], -sw, sw, rng)),
            attn_dim,
        }
    }

    /// Precompute `V h_t` for every position of one example's encoding; the
    /// per-step score then only touches the decoder state.
    pub fn precompute(
        &self,
        tape: &mut Tape,
        params: &Params,
        hmat: NodeId,
    ) -> Result<PointerScorer, NnError> {
        let v = tape.param(params, self.v);
        let vh = tape.matmul(hmat, v)?;
        Ok(PointerScorer { vh })
    }
}

/// Per-example cached half of the pointer computation.
#[derive(Debug, Clone, Copy)]
pub struct PointerScorer {
    vh: NodeId,
}

/// Scores over all input positions for one decoder state.
pub fn pointer_scores(
    tape: &mut Tape,
    params: &Params,
    ptr: &PointerParams,
    scorer: PointerScorer,
    g_state: NodeId,
) -> Result<NodeId, NnError> {
    let u = tape.param(params, ptr.u);
    let w = tape.param(params, ptr.w);
    let ug = tape.matmul(u, g_state)?;
    let pre = tape.add_bias(scorer.vh, ug)?;
    let th = tape.tanh(pre)?;
    Ok(tape.matmul(th, w)?)
}
