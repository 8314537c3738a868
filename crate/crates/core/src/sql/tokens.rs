//! Flat token grammar for pointer decoders.
//!
//! Decoders emit one input token per step; this module turns those streams
//! back into structured queries and, inversely, renders gold queries as the
//! token streams used for teacher forcing.
//!
//! Grammar (all tokens normalized):
//!   where_stream := END | WHERE cond (AND cond)* END
//!   full_stream  := SELECT [COUNT|MIN|MAX] col-tokens where_stream
//!   cond         := col-tokens op value-tokens
//!
//! Column spans are matched greedily (longest schema name first); value
//! tokens run up to the next AND/END.

use crate::table::{Column, ColumnType, Value};
use crate::text::{normalize, parse_number};

use super::{AggOp, CondOp, Condition, Query, SqlError};

fn structure(msg: impl Into<String>) -> SqlError {
    SqlError::Structure(msg.into())
}

struct TokCursor<'a> {
    toks: Vec<String>,
    pos: usize,
    schema: &'a [Column],
}

impl<'a> TokCursor<'a> {
    fn new(tokens: &[String], schema: &'a [Column]) -> Self {
        TokCursor {
            toks: tokens.iter().map(|t| normalize(t)).collect(),
            pos: 0,
            schema,
        }
    }

    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn next_is(&self, kw: &str) -> bool {
        self.peek() == Some(kw)
    }

    /// Greedy longest-match of a schema column name at the cursor.
    fn match_column(&mut self) -> Result<usize, SqlError> {
        let mut best: Option<(usize, usize)> = None;
        for (ci, col) in self.schema.iter().enumerate() {
            let norm = normalize(&col.name);
            if norm.is_empty() {
                continue;
            }
            let parts: Vec<&str> = norm.split(' ').collect();
            let fits = parts
                .iter()
                .enumerate()
                .all(|(k, part)| self.toks.get(self.pos + k).map(String::as_str) == Some(*part));
            if fits && best.map_or(true, |(_, n)| parts.len() > n) {
                best = Some((ci, parts.len()));
            }
        }
        match best {
            Some((ci, n)) => {
                self.pos += n;
                Ok(ci)
            }
            None => Err(structure(format!(
                "expected a column name at token {} ('{}')",
                self.pos,
                self.peek().unwrap_or("<end>")
            ))),
        }
    }

    fn match_op(&mut self) -> Result<CondOp, SqlError> {
        let op = self
            .peek()
            .and_then(CondOp::from_symbol)
            .ok_or_else(|| structure(format!("expected an operator at token {}", self.pos)))?;
        self.pos += 1;
        Ok(op)
    }

    /// Value tokens up to AND/END, typed by the condition column.
    fn match_value(&mut self, col: usize) -> Result<Value, SqlError> {
        let start = self.pos;
        while let Some(tok) = self.peek() {
            if tok == "and" || tok == "end" {
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            return Err(structure("empty condition value"));
        }
        let joined = self.toks[start..self.pos].join(" ");
        match self.schema[col].ctype {
            ColumnType::Text => Ok(Value::Text(joined)),
            ColumnType::Real => parse_number(&joined)
                .map(Value::Number)
                .ok_or_else(|| structure(format!("'{}' is not numeric", joined))),
        }
    }

    fn match_conds(&mut self) -> Result<Vec<Condition>, SqlError> {
        if self.next_is("end") {
            self.pos += 1;
            return self.finish(vec![]);
        }
        if !self.next_is("where") {
            return Err(structure(format!(
                "expected WHERE or END, got '{}'",
                self.peek().unwrap_or("<end>")
            )));
        }
        self.pos += 1;
        let mut conds = Vec::new();
        loop {
            let col = self.match_column()?;
            let op = self.match_op()?;
            let value = self.match_value(col)?;
            conds.push(Condition { col, op, value });
            match self.peek() {
                Some("and") => {
                    self.pos += 1;
                }
                Some("end") => {
                    self.pos += 1;
                    break;
                }
                _ => return Err(structure("stream missing END")),
            }
        }
        self.finish(conds)
    }

    fn finish<T>(&self, out: T) -> Result<T, SqlError> {
        if self.pos != self.toks.len() {
            return Err(structure("tokens after END"));
        }
        Ok(out)
    }
}

/// Parse a WHERE-clause token stream (`END` alone means no conditions).
pub fn conds_from_tokens(tokens: &[String], schema: &[Column]) -> Result<Vec<Condition>, SqlError> {
    let mut cur = TokCursor::new(tokens, schema);
    cur.match_conds()
}

/// Parse a full-query token stream as emitted by the augmented pointer
/// decoder, and validate it against the schema.
pub fn query_from_tokens(tokens: &[String], schema: &[Column]) -> Result<Query, SqlError> {
    let mut cur = TokCursor::new(tokens, schema);
    if !cur.next_is("select") {
        return Err(structure(format!(
            "expected SELECT, got '{}'",
            cur.peek().unwrap_or("<end>")
        )));
    }
    cur.pos += 1;
    let agg = match cur.peek() {
        Some("count") => {
            cur.pos += 1;
            AggOp::Count
        }
        Some("min") => {
            cur.pos += 1;
            AggOp::Min
        }
        Some("max") => {
            cur.pos += 1;
            AggOp::Max
        }
        _ => AggOp::NullAgg,
    };
    let sel = cur.match_column()?;
    let conds = cur.match_conds()?;
    Query::validated(agg, sel, conds, schema)
}

fn value_tokens(v: &Value) -> Vec<String> {
    match v {
        Value::Text(s) => normalize(s).split(' ').map(str::to_string).collect(),
        Value::Number(n) => vec![crate::text::format_number(*n)],
    }
}

fn column_tokens(schema: &[Column], col: usize) -> Vec<String> {
    normalize(&schema[col].name)
        .split(' ')
        .map(str::to_string)
        .collect()
}

/// The gold WHERE-clause token stream for teacher forcing: inverse of
/// [`conds_from_tokens`] on valid queries.
pub fn gold_tokens_where(q: &Query, schema: &[Column]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, cond) in q.conds.iter().enumerate() {
        out.push(if i == 0 { "where" } else { "and" }.to_string());
        out.extend(column_tokens(schema, cond.col));
        out.push(cond.op.symbol().to_string());
        out.extend(value_tokens(&cond.value));
    }
    out.push("end".to_string());
    out
}

/// The gold full-query token stream: inverse of [`query_from_tokens`].
pub fn gold_tokens_full(q: &Query, schema: &[Column]) -> Vec<String> {
    let mut out = vec!["select".to_string()];
    if let Some(kw) = q.agg.keyword() {
        out.push(kw.to_lowercase());
    }
    out.extend(column_tokens(schema, q.sel));
    out.extend(gold_tokens_where(q, schema));
    out
}
