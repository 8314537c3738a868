//! Text normalization, tokenization, and numeric parsing shared across the pipeline.
//!
//! Normalization is the single definition of "the same text" used everywhere:
//! executor equality, column-name matching, and question/token alignment all
//! go through [`normalize`]. The tokenizer is rule-based (lowercase,
//! whitespace split, quote stripping) rather than a full NLP pipeline.

/// Lowercase, trim, and collapse internal whitespace runs to single spaces.
///
/// Pure: callers keep the original string and derive the normalized form on
/// demand.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for c in word.chars() {
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Tokenize into normalized tokens: whitespace split, lowercased, with
/// enclosing single quotes stripped so serialized query text re-tokenizes
/// into pointable value tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    tokenize_with_gloss(s).into_iter().map(|(tok, _)| tok).collect()
}

/// Tokenize keeping, for each normalized token, the original surface form
/// ("gloss") it came from.
pub fn tokenize_with_gloss(s: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for word in s.split_whitespace() {
        let trimmed = word.trim_matches('\'');
        if trimmed.is_empty() {
            continue;
        }
        out.push((normalize(trimmed), trimmed.to_string()));
    }
    out
}

/// Parse a decimal number: optional sign, digits, at most one decimal point,
/// thousands-separator commas stripped. Rejects scientific notation and
/// non-finite values. Returns `None` when the text is not numeric.
pub fn parse_number(s: &str) -> Option<f64> {
    let cleaned: String = s.trim().chars().filter(|&c| c != ',').collect();
    let digits = cleaned.strip_prefix(['+', '-']).unwrap_or(&cleaned);
    if digits.is_empty() {
        return None;
    }
    let mut seen_dot = false;
    let mut seen_digit = false;
    for c in digits.chars() {
        match c {
            '0'..='9' => seen_digit = true,
            '.' if !seen_dot => seen_dot = true,
            _ => return None,
        }
    }
    if !seen_digit {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Render a float in its minimal round-trippable decimal form
/// (`5` rather than `5.0`, `39.5` as-is).
pub fn format_number(v: f64) -> String {
    format!("{}", v)
}
