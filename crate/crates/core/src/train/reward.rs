//! The executor-backed reward environment and the single-sample
//! policy-gradient loss.

use crate::autodiff::{NodeId, Tape};
use crate::models::Prediction;
use crate::sql::{execute, Query};
use crate::table::Table;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardCause {
    Invalid,
    WrongResult,
    Correct,
}

/// Reward values are fixed at -2 (invalid query), -1 (valid but wrong
/// result), +1 (correct result).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    pub value: f64,
    pub cause: RewardCause,
}

impl Reward {
    fn invalid() -> Self {
        Reward { value: -2.0, cause: RewardCause::Invalid }
    }

    fn wrong() -> Self {
        Reward { value: -1.0, cause: RewardCause::WrongResult }
    }

    fn correct() -> Self {
        Reward { value: 1.0, cause: RewardCause::Correct }
    }
}

/// Score a prediction by executing the full assembled query against the
/// table and comparing with the gold query's result. Structure errors and
/// executor-rejected queries are invalid; an empty aggregate is a valid
/// query with a wrong result.
pub fn reward(pred: &Prediction, gold: &Query, table: &Table) -> Reward {
    let gold_result = execute(gold, table)
        .expect("gold queries are validated against their table before training");
    match &pred.assembled {
        Err(_) => Reward::invalid(),
        Ok(q) => match execute(q, table) {
            Ok(result) if result.matches(&gold_result) => Reward::correct(),
            Ok(_) => Reward::wrong(),
            Err(e) if e.is_invalid_query() => Reward::invalid(),
            Err(_) => Reward::wrong(),
        },
    }
}

/// Single-Monte-Carlo-sample policy loss: `(R - baseline) * Σ_t -log p(y_t)`.
/// Its gradient is the sampled policy-gradient estimator; the baseline
/// defaults to zero.
pub fn reinforce_loss(
    tape: &mut Tape,
    tokens: &[String],
    step_nlps: &[NodeId],
    reward_value: f64,
    baseline: f64,
) -> Result<NodeId, TrainError> {
    if tokens.len() != step_nlps.len() {
        return Err(TrainError::LengthMismatch { tokens: tokens.len(), log_probs: step_nlps.len() });
    }
    if step_nlps.is_empty() {
        return Err(TrainError::LengthMismatch { tokens: 0, log_probs: 0 });
    }
    let total = tape.concat(step_nlps, 0).map_err(crate::models::ModelError::from)?;
    let total = tape.sum_all(total).map_err(crate::models::ModelError::from)?;
    Ok(tape.scale(total, reward_value - baseline).map_err(crate::models::ModelError::from)?)
}
