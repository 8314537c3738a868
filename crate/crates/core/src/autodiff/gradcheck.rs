//! Central finite-difference verification of analytic gradients.

use super::params::{ParamId, Params};
use super::tape::{AdError, NodeId, Tape};

/// Compare the analytic gradient of a scalar function against central
/// finite differences, coordinate by coordinate over `targets`. Returns the
/// worst relative error, with the denominator floored at 1e-8.
///
/// `f` must be deterministic; tapes are created in eval mode so dropout is
/// disabled.
pub fn grad_check<F>(
    params: &mut Params,
    targets: &[ParamId],
    eps: f64,
    f: F,
) -> Result<f64, AdError>
where
    F: Fn(&Params, &mut Tape) -> Result<NodeId, AdError>,
{
    let eval_value = |params: &Params| -> Result<f64, AdError> {
        let mut tape = Tape::eval();
        let loss = f(params, &mut tape)?;
        if !tape.value(loss).is_scalar() {
            return Err(AdError::NonScalarLoss { len: tape.value(loss).len() });
        }
        Ok(tape.value(loss).item())
    };

    // analytic pass; a parameter absent from the graph has zero gradient
    let mut tape = Tape::eval();
    let loss = f(params, &mut tape)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = targets
        .iter()
        .map(|&id| {
            tape.param_node(id)
                .and_then(|node| tape.grad(node))
                .map(|g| g.data().to_vec())
                .unwrap_or_else(|| vec![0.0; params.value(id).len()])
        })
        .collect();

    let mut worst = 0.0f64;
    for (t, &id) in targets.iter().enumerate() {
        for k in 0..params.value(id).len() {
            let orig = params.value(id).data()[k];
            params.value_mut(id).data_mut()[k] = orig + eps;
            let plus = eval_value(params)?;
            params.value_mut(id).data_mut()[k] = orig - eps;
            let minus = eval_value(params)?;
            params.value_mut(id).data_mut()[k] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let ga = analytic[t][k];
            let denom = (fd.abs() + ga.abs()).max(1e-8);
            worst = worst.max((fd - ga).abs() / denom);
        }
    }
    Ok(worst)
}
