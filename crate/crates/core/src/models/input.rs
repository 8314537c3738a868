//! The augmented input sequence every model reads: column names, the SQL
//! vocabulary, and the question, demarcated by sentinel tokens.

use std::collections::HashMap;

use crate::nn::Vocab;
use crate::table::Column;
use crate::text::normalize;

use super::ModelError;

/// The closed SQL vocabulary available to pointer decoders. `end` is the
/// stop token.
pub const SQL_VOCAB: [&str; 10] =
    ["select", "where", "and", "count", "min", "max", "=", ">", "<", "end"];

pub const SENT_COL: &str = "<col>";
pub const SENT_SQL: &str = "<sql>";
pub const SENT_QUESTION: &str = "<question>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Sentinel,
    Column,
    Sql,
    Question,
}

/// One example's model input: normalized tokens with vocabulary ids, segment
/// tags, the span of each column name, and a map back to original surface
/// forms.
#[derive(Debug, Clone)]
pub struct InputSequence {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub segments: Vec<Segment>,
    /// Half-open `[start, end)` token range of each column name.
    pub col_spans: Vec<(usize, usize)>,
    /// Normalized token -> original gloss, first occurrence wins.
    pub gloss: HashMap<String, String>,
}

/// Assemble the input layout
/// `<col> col tokens… <sql> sql vocab <question> question tokens`.
///
/// `question` pairs each normalized token with its original gloss.
pub fn build_input_sequence(
    columns: &[Column],
    question: &[(String, String)],
    vocab: &Vocab,
) -> Result<InputSequence, ModelError> {
    if columns.is_empty() || question.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let mut seq = InputSequence {
        tokens: Vec::new(),
        ids: Vec::new(),
        segments: Vec::new(),
        col_spans: Vec::with_capacity(columns.len()),
        gloss: HashMap::new(),
    };
    let push = |seq: &mut InputSequence, tok: String, gloss: String, seg: Segment| {
        seq.gloss.entry(tok.clone()).or_insert(gloss);
        seq.ids.push(vocab.id(&tok));
        seq.tokens.push(tok);
        seq.segments.push(seg);
    };

    push(&mut seq, SENT_COL.into(), SENT_COL.into(), Segment::Sentinel);
    for col in columns {
        let start = seq.tokens.len();
        for word in col.name.split_whitespace() {
            push(&mut seq, normalize(word), word.to_string(), Segment::Column);
        }
        seq.col_spans.push((start, seq.tokens.len()));
    }
    push(&mut seq, SENT_SQL.into(), SENT_SQL.into(), Segment::Sentinel);
    for kw in SQL_VOCAB {
        push(&mut seq, kw.into(), kw.into(), Segment::Sql);
    }
    push(&mut seq, SENT_QUESTION.into(), SENT_QUESTION.into(), Segment::Sentinel);
    for (tok, gloss) in question {
        push(&mut seq, tok.clone(), gloss.clone(), Segment::Question);
    }
    Ok(seq)
}

impl InputSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Position of a keyword inside the SQL segment.
    pub fn sql_pos(&self, tok: &str) -> Option<usize> {
        self.positions(tok).find(|&i| self.segments[i] == Segment::Sql)
    }

    fn positions<'a>(&'a self, tok: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.tokens
            .iter()
            .enumerate()
            .filter_map(move |(i, t)| (t == tok).then_some(i))
    }

    fn first_in_segment(&self, tok: &str, seg: Segment) -> Option<usize> {
        self.positions(tok).find(|&i| self.segments[i] == seg)
    }

    /// Positions to point at for a multi-token value: the first contiguous
    /// run inside the question, else per-token first occurrences (question
    /// preferred, then anywhere).
    pub fn value_positions(&self, value_tokens: &[String]) -> Result<Vec<usize>, ModelError> {
        if value_tokens.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let n = self.len();
        let k = value_tokens.len();
        'starts: for start in 0..n.saturating_sub(k - 1) {
            for (off, want) in value_tokens.iter().enumerate() {
                let at = start + off;
                if self.segments[at] != Segment::Question || &self.tokens[at] != want {
                    continue 'starts;
                }
            }
            return Ok((start..start + k).collect());
        }
        value_tokens
            .iter()
            .map(|tok| {
                self.first_in_segment(tok, Segment::Question)
                    .or_else(|| self.positions(tok).next())
                    .ok_or_else(|| ModelError::TokenNotInInput(tok.clone()))
            })
            .collect()
    }

    /// Recover the original surface form of a normalized token.
    pub fn gloss_of(&self, tok: &str) -> Option<&str> {
        self.gloss.get(tok).map(String::as_str)
    }
}
