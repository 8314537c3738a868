//! Query execution over in-memory tables.

use crate::table::{Table, Value};

use super::{AggOp, CondOp, Condition, Query, SqlError};

/// Result of executing a query: the multiset of selected values for plain
/// selects, or a single scalar for aggregations.
#[derive(Debug, Clone, PartialEq)]
pub enum ExecResult {
    Rows(Vec<Value>),
    Scalar(Value),
}

impl ExecResult {
    /// Result equality: scalars compare semantically, row sets compare as
    /// multisets (SQL row order is unspecified).
    pub fn matches(&self, other: &ExecResult) -> bool {
        match (self, other) {
            (ExecResult::Scalar(a), ExecResult::Scalar(b)) => a.same_as(b),
            (ExecResult::Rows(a), ExecResult::Rows(b)) => {
                if a.len() != b.len() {
                    return false;
                }
                let mut ka: Vec<_> = a.iter().map(|v| v.sort_key()).collect();
                let mut kb: Vec<_> = b.iter().map(|v| v.sort_key()).collect();
                ka.sort();
                kb.sort();
                ka == kb
            }
            _ => false,
        }
    }

    /// Number of rows behind the result, when that is meaningful.
    pub fn row_count(&self) -> Option<usize> {
        match self {
            ExecResult::Rows(r) => Some(r.len()),
            ExecResult::Scalar(Value::Number(n)) => Some(*n as usize),
            ExecResult::Scalar(_) => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let cell = |v: &Value| match v {
            Value::Text(s) => serde_json::Value::String(s.clone()),
            Value::Number(n) => serde_json::json!(n),
        };
        match self {
            ExecResult::Rows(rows) => serde_json::json!({
                "type": "rows",
                "values": rows.iter().map(cell).collect::<Vec<_>>(),
            }),
            ExecResult::Scalar(v) => serde_json::json!({
                "type": "scalar",
                "value": cell(v),
            }),
        }
    }
}

fn condition_holds(cond: &Condition, row: &[Value]) -> bool {
    let cell = &row[cond.col];
    match cond.op {
        CondOp::Eq => cell.same_as(&cond.value),
        CondOp::Gt | CondOp::Lt => {
            let (a, b) = match (cell.as_number(), cond.value.as_number()) {
                (Some(a), Some(b)) => (a, b),
                _ => return false,
            };
            if cond.op == CondOp::Gt {
                a > b
            } else {
                a < b
            }
        }
    }
}

/// Execute a query: keep rows satisfying every condition, then select or
/// aggregate. MIN/MAX over zero kept rows is an [`SqlError::EmptyAggregate`],
/// distinct from a valid empty `Rows` result.
pub fn execute(q: &Query, t: &Table) -> Result<ExecResult, SqlError> {
    q.validate_against(t.header())?;
    let kept: Vec<&Vec<Value>> = t
        .rows()
        .iter()
        .filter(|row| q.conds.iter().all(|c| condition_holds(c, row)))
        .collect();
    match q.agg {
        AggOp::NullAgg => Ok(ExecResult::Rows(
            kept.iter().map(|row| row[q.sel].clone()).collect(),
        )),
        AggOp::Count => Ok(ExecResult::Scalar(Value::Number(kept.len() as f64))),
        AggOp::Min | AggOp::Max => {
            let mut best: Option<f64> = None;
            for row in &kept {
                let v = row[q.sel]
                    .as_number()
                    .expect("validated MIN/MAX column is numeric");
                best = Some(match best {
                    None => v,
                    Some(b) if q.agg == AggOp::Min => b.min(v),
                    Some(b) => b.max(v),
                });
            }
            best.map(|v| ExecResult::Scalar(Value::Number(v)))
                .ok_or(SqlError::EmptyAggregate)
        }
    }
}

/// True when the query executes without error and keeps at least one row.
pub fn executes_nonempty(q: &Query, t: &Table) -> bool {
    match execute(q, t) {
        Ok(res) => res.row_count().map_or(true, |n| n > 0),
        Err(_) => false,
    }
}
