//! The SQL-subset query language: AST, executor, canonical text form, and
//! the flat token grammar used by pointer decoders.
//!
//! Queries are single-table `SELECT`s with an optional aggregation
//! (COUNT/MIN/MAX), one selected column, and a conjunction of
//! `column op value` conditions. No OR, no joins, no GROUP BY.

mod exec;
mod text_form;
mod tokens;

pub use exec::{execute, executes_nonempty, ExecResult};
pub use text_form::{parse_query, serialize_query};
pub use tokens::{conds_from_tokens, gold_tokens_full, gold_tokens_where, query_from_tokens};

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{Column, ColumnType, Value};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SqlError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("aggregate over empty row set")]
    EmptyAggregate,
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("malformed token stream: {0}")]
    Structure(String),
}

impl SqlError {
    /// True for the "not a valid SQL query" class of errors (structure or
    /// schema violations), as opposed to valid queries with degenerate
    /// results such as an empty aggregate.
    pub fn is_invalid_query(&self) -> bool {
        !matches!(self, SqlError::EmptyAggregate)
    }
}

/// Aggregation over the selected column. JSON codes 0..=3 in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggOp {
    NullAgg,
    Count,
    Min,
    Max,
}

impl AggOp {
    pub fn code(self) -> u8 {
        match self {
            AggOp::NullAgg => 0,
            AggOp::Count => 1,
            AggOp::Min => 2,
            AggOp::Max => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(AggOp::NullAgg),
            1 => Some(AggOp::Count),
            2 => Some(AggOp::Min),
            3 => Some(AggOp::Max),
            _ => None,
        }
    }

    /// Keyword in the canonical surface form; `None` for no aggregation.
    pub fn keyword(self) -> Option<&'static str> {
        match self {
            AggOp::NullAgg => None,
            AggOp::Count => Some("COUNT"),
            AggOp::Min => Some("MIN"),
            AggOp::Max => Some("MAX"),
        }
    }

    pub const ALL: [AggOp; 4] = [AggOp::NullAgg, AggOp::Count, AggOp::Min, AggOp::Max];
}

/// Condition operator. JSON codes: 0 `=`, 1 `>`, 2 `<`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CondOp {
    Eq,
    Gt,
    Lt,
}

impl CondOp {
    pub fn code(self) -> u8 {
        match self {
            CondOp::Eq => 0,
            CondOp::Gt => 1,
            CondOp::Lt => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CondOp::Eq),
            1 => Some(CondOp::Gt),
            2 => Some(CondOp::Lt),
            _ => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CondOp::Eq => "=",
            CondOp::Gt => ">",
            CondOp::Lt => "<",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "=" => Some(CondOp::Eq),
            ">" => Some(CondOp::Gt),
            "<" => Some(CondOp::Lt),
            _ => None,
        }
    }
}

/// One `column op value` filter.
#[derive(Debug, Clone)]
pub struct Condition {
    pub col: usize,
    pub op: CondOp,
    pub value: Value,
}

impl Condition {
    /// Semantic equality: same column/op, values compared normalized (text)
    /// or exactly (numbers).
    pub fn same_as(&self, other: &Condition) -> bool {
        self.col == other.col && self.op == other.op && self.value.same_as(&other.value)
    }
}

impl PartialEq for Condition {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

/// Structured query AST. Field order in conditions is significant for the
/// string-match metric, not for execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub agg: AggOp,
    pub sel: usize,
    pub conds: Vec<Condition>,
}

impl Query {
    /// Construct and validate against a schema in one step.
    pub fn validated(
        agg: AggOp,
        sel: usize,
        conds: Vec<Condition>,
        schema: &[Column],
    ) -> Result<Self, SqlError> {
        let q = Query { agg, sel, conds };
        q.validate_against(schema)?;
        Ok(q)
    }

    /// Check every schema invariant: bounds, aggregation/condition type
    /// compatibility, value/column type agreement, no duplicate conditions.
    pub fn validate_against(&self, schema: &[Column]) -> Result<(), SqlError> {
        if self.sel >= schema.len() {
            return Err(SqlError::InvalidQuery(format!(
                "selected column {} out of range ({} columns)",
                self.sel,
                schema.len()
            )));
        }
        if matches!(self.agg, AggOp::Min | AggOp::Max)
            && schema[self.sel].ctype != ColumnType::Real
        {
            return Err(SqlError::InvalidQuery(format!(
                "{} over text column '{}'",
                self.agg.keyword().unwrap_or("?"),
                schema[self.sel].name
            )));
        }
        for (i, cond) in self.conds.iter().enumerate() {
            if cond.col >= schema.len() {
                return Err(SqlError::InvalidQuery(format!(
                    "condition {} references column {} out of range",
                    i, cond.col
                )));
            }
            let ctype = schema[cond.col].ctype;
            if matches!(cond.op, CondOp::Gt | CondOp::Lt) && ctype != ColumnType::Real {
                return Err(SqlError::InvalidQuery(format!(
                    "condition {} uses '{}' on text column '{}'",
                    i,
                    cond.op.symbol(),
                    schema[cond.col].name
                )));
            }
            let matches_type = matches!(
                (&cond.value, ctype),
                (Value::Text(_), ColumnType::Text) | (Value::Number(_), ColumnType::Real)
            );
            if !matches_type {
                return Err(SqlError::InvalidQuery(format!(
                    "condition {} value type does not match column '{}'",
                    i, schema[cond.col].name
                )));
            }
        }
        for i in 0..self.conds.len() {
            for j in (i + 1)..self.conds.len() {
                if self.conds[i].same_as(&self.conds[j]) {
                    return Err(SqlError::InvalidQuery(format!(
                        "duplicate condition at positions {} and {}",
                        i, j
                    )));
                }
            }
        }
        Ok(())
    }

    /// Structured JSON form: `{"agg": 0-3, "sel": n, "conds": [[col, op, value]]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "agg": self.agg.code(),
            "sel": self.sel,
            "conds": self.conds.iter().map(|c| {
                let v = match &c.value {
                    Value::Text(s) => serde_json::Value::String(s.clone()),
                    Value::Number(n) => serde_json::json!(n),
                };
                serde_json::json!([c.col, c.op.code(), v])
            }).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, SqlError> {
        let bad = |msg: &str| SqlError::InvalidQuery(format!("structured query json: {}", msg));
        let agg_code = v
            .get("agg")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| bad("missing agg"))?;
        let agg = AggOp::from_code(agg_code as u8).ok_or_else(|| bad("agg code out of range"))?;
        let sel = v
            .get("sel")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| bad("missing sel"))? as usize;
        let mut conds = Vec::new();
        let raw_conds = v
            .get("conds")
            .and_then(|x| x.as_array())
            .ok_or_else(|| bad("missing conds"))?;
        for rc in raw_conds {
            let triple = rc.as_array().filter(|a| a.len() == 3).ok_or_else(|| bad("condition is not a [col, op, value] triple"))?;
            let col = triple[0].as_u64().ok_or_else(|| bad("condition column"))? as usize;
            let op_code = triple[1].as_u64().ok_or_else(|| bad("condition op"))?;
            let op = CondOp::from_code(op_code as u8).ok_or_else(|| bad("op code out of range"))?;
            let value = match &triple[2] {
                serde_json::Value::String(s) => Value::Text(s.clone()),
                serde_json::Value::Number(n) => {
                    Value::Number(n.as_f64().ok_or_else(|| bad("condition number"))?)
                }
                _ => return Err(bad("condition value must be string or number")),
            };
            conds.push(Condition { col, op, value });
        }
        Ok(Query { agg, sel, conds })
    }
}

impl Serialize for Query {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Query {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        Query::from_json(&v).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(3))?;
        seq.serialize_element(&self.col)?;
        seq.serialize_element(&self.op.code())?;
        match &self.value {
            Value::Text(s) => seq.serialize_element(s)?,
            Value::Number(n) => seq.serialize_element(n)?,
        }
        seq.end()
    }
}

/// Logical-form equality: exact canonical-string match, order-sensitive in
/// conditions.
pub fn lf_equal(a: &Query, b: &Query, schema: &[Column]) -> bool {
    serialize_query(a, schema) == serialize_query(b, schema)
}
