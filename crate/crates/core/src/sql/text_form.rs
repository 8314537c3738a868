//! Canonical query surface form: serialization and parsing.
//!
//! The canonical string is the comparison key for logical-form equality, so
//! serialization must be deterministic: keywords upper-case, column names
//! verbatim, text values normalized and single-quoted (with `''` escaping),
//! numbers in minimal decimal form.

use crate::table::{Column, ColumnType, Value};
use crate::text::{normalize, parse_number};

use super::{AggOp, CondOp, Condition, Query, SqlError};

/// Render the canonical surface form:
/// `SELECT [AGG ]col FROM table[ WHERE col op value [AND ...]]`.
pub fn serialize_query(q: &Query, schema: &[Column]) -> String {
    let mut out = String::from("SELECT ");
    if let Some(kw) = q.agg.keyword() {
        out.push_str(kw);
        out.push(' ');
    }
    out.push_str(&schema[q.sel].name);
    out.push_str(" FROM table");
    for (i, cond) in q.conds.iter().enumerate() {
        out.push_str(if i == 0 { " WHERE " } else { " AND " });
        out.push_str(&schema[cond.col].name);
        out.push(' ');
        out.push_str(cond.op.symbol());
        out.push(' ');
        match &cond.value {
            Value::Text(s) => {
                out.push('\'');
                out.push_str(&normalize(s).replace('\'', "''"));
                out.push('\'');
            }
            Value::Number(n) => out.push_str(&crate::text::format_number(*n)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
}

struct Lexed {
    tok: Tok,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Lexed>, SqlError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if bytes[i] == b'\'' {
            let start = i;
            i += 1;
            let mut content = String::new();
            loop {
                if i >= bytes.len() {
                    return Err(SqlError::Parse {
                        offset: start,
                        msg: "unterminated quoted value".into(),
                    });
                }
                if bytes[i] == b'\'' {
                    if i + 1 < bytes.len() && bytes[i + 1] == b'\'' {
                        content.push('\'');
                        i += 2;
                        continue;
                    }
                    i += 1;
                    break;
                }
                let ch_start = i;
                let mut ch_end = i + 1;
                while ch_end < bytes.len() && (bytes[ch_end] & 0xC0) == 0x80 {
                    ch_end += 1;
                }
                content.push_str(&text[ch_start..ch_end]);
                i = ch_end;
            }
            toks.push(Lexed { tok: Tok::Quoted(content), offset: start });
        } else {
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'\'' {
                i += 1;
            }
            toks.push(Lexed {
                tok: Tok::Word(text[start..i].to_string()),
                offset: start,
            });
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<Lexed>,
    pos: usize,
    schema: &'a [Column],
    end_offset: usize,
}

impl<'a> Parser<'a> {
    fn peek_word(&self) -> Option<String> {
        match self.toks.get(self.pos) {
            Some(Lexed { tok: Tok::Word(w), .. }) => Some(normalize(w)),
            _ => None,
        }
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_offset, |t| t.offset)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SqlError> {
        match self.peek_word() {
            Some(w) if w == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(SqlError::Parse {
                offset: self.offset(),
                msg: format!("expected '{}'", kw.to_uppercase()),
            }),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    /// Longest-match a column name against the upcoming word tokens.
    fn match_column(&mut self) -> Result<usize, SqlError> {
        let mut best: Option<(usize, usize)> = None; // (col index, token count)
        for (ci, col) in self.schema.iter().enumerate() {
            let name_toks: Vec<String> =
                normalize(&col.name).split(' ').map(str::to_string).collect();
            if name_toks.is_empty() {
                continue;
            }
            let matches = name_toks.iter().enumerate().all(|(k, nt)| {
                matches!(
                    self.toks.get(self.pos + k),
                    Some(Lexed { tok: Tok::Word(w), .. }) if &normalize(w) == nt
                )
            });
            if matches && best.map_or(true, |(_, n)| name_toks.len() > n) {
                best = Some((ci, name_toks.len()));
            }
        }
        match best {
            Some((ci, n)) => {
                self.pos += n;
                Ok(ci)
            }
            None => {
                let shown = match self.toks.get(self.pos) {
                    Some(Lexed { tok: Tok::Word(w), .. }) => w.clone(),
                    Some(Lexed { tok: Tok::Quoted(q), .. }) => format!("'{}'", q),
                    None => "<end of input>".into(),
                };
                Err(SqlError::UnknownColumn(shown))
            }
        }
    }

    fn parse_value(&mut self, col: usize) -> Result<Value, SqlError> {
        let ctype = self.schema[col].ctype;
        match self.toks.get(self.pos) {
            Some(Lexed { tok: Tok::Quoted(content), .. }) => {
                if ctype != ColumnType::Text {
                    return Err(SqlError::TypeMismatch(format!(
                        "quoted value for numeric column '{}'",
                        self.schema[col].name
                    )));
                }
                let v = Value::Text(content.clone());
                self.pos += 1;
                Ok(v)
            }
            Some(Lexed { tok: Tok::Word(w), .. }) => {
                if ctype != ColumnType::Real {
                    return Err(SqlError::TypeMismatch(format!(
                        "unquoted value for text column '{}'",
                        self.schema[col].name
                    )));
                }
                match parse_number(w) {
                    Some(n) => {
                        self.pos += 1;
                        Ok(Value::Number(n))
                    }
                    None => Err(SqlError::TypeMismatch(format!(
                        "'{}' is not numeric for column '{}'",
                        w, self.schema[col].name
                    ))),
                }
            }
            None => Err(SqlError::Parse {
                offset: self.end_offset,
                msg: "expected a condition value".into(),
            }),
        }
    }
}

/// Parse the canonical grammar back into a query, matching column names by
/// normalized form with longest-match.
pub fn parse_query(text: &str, schema: &[Column]) -> Result<Query, SqlError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, schema, end_offset: text.len() };

    p.expect_keyword("select")?;
    let agg = match p.peek_word().as_deref() {
        Some("count") => {
            p.pos += 1;
            AggOp::Count
        }
        Some("min") => {
            p.pos += 1;
            AggOp::Min
        }
        Some("max") => {
            p.pos += 1;
            AggOp::Max
        }
        _ => AggOp::NullAgg,
    };
    let sel = p.match_column()?;
    p.expect_keyword("from")?;
    p.expect_keyword("table")?;

    let mut conds = Vec::new();
    if !p.at_end() {
        p.expect_keyword("where")?;
        loop {
            let col = p.match_column()?;
            let op = match p.peek_word().as_deref().and_then(CondOp::from_symbol) {
                Some(op) => {
                    p.pos += 1;
                    op
                }
                None => {
                    return Err(SqlError::Parse {
                        offset: p.offset(),
                        msg: "expected one of '=', '>', '<'".into(),
                    })
                }
            };
            let value = p.parse_value(col)?;
            conds.push(Condition { col, op, value });
            if p.at_end() {
                break;
            }
            p.expect_keyword("and")?;
        }
    }
    if !p.at_end() {
        return Err(SqlError::Parse {
            offset: p.offset(),
            msg: "trailing input after query".into(),
        });
    }
    Query::validated(agg, sel, conds, schema)
}
