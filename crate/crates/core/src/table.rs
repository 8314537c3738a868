//! Typed in-memory tables: the execution substrate.
//!
//! Tables are immutable after construction and validated on every
//! construction path, so the rest of the pipeline can rely on the schema
//! invariants (rectangular rows, cell/column type agreement, unique
//! normalized column names) without re-checking them.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{format_number, normalize, parse_number};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed table record: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("table {id}: {violation}")]
    Invalid { id: String, violation: String },
}

/// A table cell: verbatim text or a finite 64-bit float.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Number(f64),
}

impl Value {
    /// Comparison form: normalized text, or the minimal decimal rendering.
    pub fn normalized(&self) -> String {
        match self {
            Value::Text(s) => normalize(s),
            Value::Number(n) => format_number(*n),
        }
    }

    /// Display form with the original text casing preserved.
    pub fn render(&self) -> String {
        match self {
            Value::Text(s) => s.clone(),
            Value::Number(n) => format_number(*n),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Text(_) => None,
        }
    }

    /// Semantic equality: normalized for text, exact for numbers.
    pub fn same_as(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => normalize(a) == normalize(b),
            (Value::Number(a), Value::Number(b)) => a == b,
            _ => false,
        }
    }

    /// Total order used for multiset comparisons; never exposed as semantics.
    pub(crate) fn sort_key(&self) -> (u8, String) {
        match self {
            Value::Number(n) => (0, format!("{:024.8}", n)),
            Value::Text(s) => (1, normalize(s)),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub ctype: ColumnType,
}

impl Column {
    pub fn text(name: &str) -> Self {
        Column { name: name.to_string(), ctype: ColumnType::Text }
    }

    pub fn real(name: &str) -> Self {
        Column { name: name.to_string(), ctype: ColumnType::Real }
    }
}

/// Immutable typed table: id, header, rows. Constructed only through
/// [`Table::new`], which enforces every invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    id: String,
    header: Vec<Column>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(id: String, header: Vec<Column>, rows: Vec<Vec<Value>>) -> Result<Self, TableError> {
        let t = Table { id, header, rows };
        let violations = t.violations();
        if let Some(first) = violations.first() {
            let msg = if violations.len() == 1 {
                first.clone()
            } else {
                violations.join("; ")
            };
            return Err(TableError::Invalid { id: t.id, violation: msg });
        }
        Ok(t)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn header(&self) -> &[Column] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.header.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// All invariant violations, one message per violation, naming the
    /// offending row/column.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.header.is_empty() {
            out.push("empty header".to_string());
        }
        for (j, col) in self.header.iter().enumerate() {
            if col.name.trim().is_empty() {
                out.push(format!("empty header cell at column {}", j));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for col in &self.header {
            let norm = normalize(&col.name);
            if !norm.is_empty() && !seen.insert(norm.clone()) {
                out.push(format!("duplicate normalized column name '{}'", norm));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                out.push(format!(
                    "row {} has {} cells, header has {}",
                    i,
                    row.len(),
                    self.header.len()
                ));
                continue;
            }
            for (j, cell) in row.iter().enumerate() {
                match (cell, self.header[j].ctype) {
                    (Value::Text(_), ColumnType::Text) => {}
                    (Value::Number(n), ColumnType::Real) => {
                        if !n.is_finite() {
                            out.push(format!("non-finite number at row {}, column {}", i, j));
                        }
                    }
                    _ => out.push(format!(
                        "cell type mismatch at row {}, column {} ({})",
                        i, j, self.header[j].name
                    )),
                }
            }
        }
        out
    }

    /// Index of the column whose normalized name equals the normalized query
    /// name, if any.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let want = normalize(name);
        self.header.iter().position(|c| normalize(&c.name) == want)
    }
}

/// Re-validate a table and hand it back unchanged.
pub fn validate_table(candidate: Table) -> Result<Table, TableError> {
    Table::new(candidate.id, candidate.header, candidate.rows)
}

/// Column typing: REAL iff every cell parses as a finite decimal number,
/// TEXT otherwise. TEXT is the universal fallback, so this never fails.
pub fn infer_column_types(raw_rows: &[Vec<String>]) -> Vec<ColumnType> {
    let n_cols = raw_rows.first().map_or(0, |r| r.len());
    (0..n_cols)
        .map(|j| {
            let all_numeric = raw_rows
                .iter()
                .all(|row| row.get(j).map_or(false, |cell| parse_number(cell).is_some()));
            if all_numeric {
                ColumnType::Real
            } else {
                ColumnType::Text
            }
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TableRecord {
    id: String,
    header: Vec<String>,
    types: Vec<ColumnType>,
    rows: Vec<Vec<serde_json::Value>>,
}

/// Load tables from a JSON-lines file, one table per line, validating each.
pub fn load_tables(path: &Path) -> Result<Vec<Table>, TableError> {
    let file = File::open(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut tables = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        tables.push(table_from_json_line(&line, line_no)?);
    }
    Ok(tables)
}

fn table_from_json_line(line: &str, line_no: usize) -> Result<Table, TableError> {
    let rec: TableRecord = serde_json::from_str(line).map_err(|e| TableError::Malformed {
        line: line_no,
        msg: e.to_string(),
    })?;
    if rec.header.len() != rec.types.len() {
        return Err(TableError::Malformed {
            line: line_no,
            msg: format!(
                "table {}: header has {} names but {} types",
                rec.id,
                rec.header.len(),
                rec.types.len()
            ),
        });
    }
    let header: Vec<Column> = rec
        .header
        .into_iter()
        .zip(rec.types.iter().copied())
        .map(|(name, ctype)| Column { name, ctype })
        .collect();
    let mut rows = Vec::with_capacity(rec.rows.len());
    for (i, raw_row) in rec.rows.into_iter().enumerate() {
        let mut row = Vec::with_capacity(raw_row.len());
        for (j, cell) in raw_row.into_iter().enumerate() {
            let value = match cell {
                serde_json::Value::String(s) => Value::Text(s),
                serde_json::Value::Number(n) => {
                    let v = n.as_f64().ok_or_else(|| TableError::Malformed {
                        line: line_no,
                        msg: format!("table {}: row {} col {}: unrepresentable number", rec.id, i, j),
                    })?;
                    Value::Number(v)
                }
                other => {
                    return Err(TableError::Malformed {
                        line: line_no,
                        msg: format!(
                            "table {}: row {} col {}: expected string or number, got {}",
                            rec.id, i, j, other
                        ),
                    })
                }
            };
            row.push(value);
        }
        rows.push(row);
    }
    Table::new(rec.id, header, rows)
}

/// Write tables as JSON-lines, the inverse of [`load_tables`].
pub fn save_tables(tables: &[Table], path: &Path) -> Result<(), TableError> {
    let mut file = File::create(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    for t in tables {
        let rec = TableRecord {
            id: t.id.clone(),
            header: t.header.iter().map(|c| c.name.clone()).collect(),
            types: t.header.iter().map(|c| c.ctype).collect(),
            rows: t
                .rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|v| match v {
                            Value::Text(s) => serde_json::Value::String(s.clone()),
                            Value::Number(n) => serde_json::json!(n),
                        })
                        .collect()
                })
                .collect(),
        };
        let line = serde_json::to_string(&rec).expect("table record serializes");
        writeln!(file, "{}", line).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_table() -> Table {
        Table::new(
            "t1".into(),
            vec![Column::text("Name"), Column::real("Score")],
            vec![
                vec![Value::Text("Alpha".into()), Value::Number(3.5)],
                vec![Value::Text("Bravo".into()), Value::Number(4.0)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn accepts_consistent_table() {
        let t = small_table();
        assert_eq!(t.n_cols(), 2);
        assert_eq!(t.n_rows(), 2);
        assert!(validate_table(t).is_ok());
    }

    #[test]
    fn rejects_empty_header_cell() {
        let err = Table::new(
            "t".into(),
            vec![Column::text("  "), Column::text("b")],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("empty header"), "{err}");
    }

    #[test]
    fn rejects_duplicate_normalized_names() {
        let err = Table::new(
            "t".into(),
            vec![Column::text("Team"), Column::text("  team ")],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn rejects_wrong_arity_row_naming_row_index() {
        let err = Table::new(
            "widgets".into(),
            vec![Column::text("a"), Column::text("b")],
            vec![vec![Value::Text("x".into())]],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("widgets") && msg.contains("row 0"), "{msg}");
    }

    #[test]
    fn rejects_type_mismatch_and_nonfinite() {
        let err = Table::new(
            "t".into(),
            vec![Column::real("x")],
            vec![vec![Value::Text("oops".into())]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("type mismatch"), "{err}");

        let err = Table::new(
            "t".into(),
            vec![Column::real("x")],
            vec![vec![Value::Number(f64::NAN)]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn infer_types_basic() {
        let rows = vec![
            vec!["1".to_string(), "1".to_string()],
            vec!["2.5".to_string(), "n/a".to_string()],
            vec!["-3".to_string(), "7".to_string()],
        ];
        assert_eq!(infer_column_types(&rows), vec![ColumnType::Real, ColumnType::Text]);
    }

    #[test]
    fn infer_types_matches_per_cell_parse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let word_pool = ["alpha", "beta", "n/a", "x1", "-", "12b"];
        for _ in 0..500 {
            let n_rows = rng.gen_range(1..6);
            let n_cols = rng.gen_range(1..5);
            let rows: Vec<Vec<String>> = (0..n_rows)
                .map(|_| {
                    (0..n_cols)
                        .map(|_| {
                            if rng.gen_bool(0.6) {
                                format!("{:.2}", rng.gen_range(-100.0..100.0))
                            } else {
                                word_pool[rng.gen_range(0..word_pool.len())].to_string()
                            }
                        })
                        .collect()
                })
                .collect();
            let got = infer_column_types(&rows);
            // independent oracle: try-parse every cell with the stdlib after
            // manual comma removal, demanding full numeric syntax
            let oracle: Vec<ColumnType> = (0..n_cols)
                .map(|j| {
                    let ok = rows.iter().all(|r| {
                        let s: String = r[j].chars().filter(|&c| c != ',').collect();
                        let t = s.trim();
                        !t.is_empty()
                            && t.parse::<f64>().map_or(false, |v| v.is_finite())
                            && !t.contains(['e', 'E', 'n', 'N', 'i', 'I'])
                    });
                    if ok {
                        ColumnType::Real
                    } else {
                        ColumnType::Text
                    }
                })
                .collect();
            assert_eq!(got, oracle, "rows: {:?}", rows);
        }
    }

    #[test]
    fn infer_types_idempotent_on_typed_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n_rows = rng.gen_range(1..6);
            let n_cols = rng.gen_range(1..5);
            let raw: Vec<Vec<String>> = (0..n_rows)
                .map(|_| {
                    (0..n_cols)
                        .map(|_| {
                            if rng.gen_bool(0.5) {
                                format!("{}", rng.gen_range(-50..50))
                            } else {
                                "word".to_string()
                            }
                        })
                        .collect()
                })
                .collect();
            let types = infer_column_types(&raw);
            // build typed cells, stringify them, re-infer
            let rendered: Vec<Vec<String>> = raw
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(&types)
                        .map(|(cell, ty)| match ty {
                            ColumnType::Real => format_number(parse_number(cell).unwrap()),
                            ColumnType::Text => cell.clone(),
                        })
                        .collect()
                })
                .collect();
            assert_eq!(infer_column_types(&rendered), types);
        }
    }

    fn random_table(rng: &mut ChaCha8Rng, idx: usize) -> Table {
        let n_cols = rng.gen_range(1..6);
        let n_rows = rng.gen_range(0..8);
        let header: Vec<Column> = (0..n_cols)
            .map(|j| {
                if rng.gen_bool(0.5) {
                    Column::text(&format!("col {}", j))
                } else {
                    Column::real(&format!("col {}", j))
                }
            })
            .collect();
        let words = ["red", "Blue", "green isle", "délta", "#", "x's"];
        let rows: Vec<Vec<Value>> = (0..n_rows)
            .map(|_| {
                header
                    .iter()
                    .map(|c| match c.ctype {
                        ColumnType::Text => {
                            Value::Text(words[rng.gen_range(0..words.len())].to_string())
                        }
                        ColumnType::Real => {
                            Value::Number((rng.gen_range(-1000.0..1000.0f64) * 4.0).round() / 4.0)
                        }
                    })
                    .collect()
            })
            .collect();
        Table::new(format!("rt-{}", idx), header, rows).unwrap()
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tables: Vec<Table> = (0..100).map(|i| random_table(&mut rng, i)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tables.jsonl");
        save_tables(&tables, &path).unwrap();
        let loaded = load_tables(&path).unwrap();
        assert_eq!(tables, loaded);
    }

    #[test]
    fn load_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\": \"a\", \"header\": [\"x\"], \"types\": [\"text\"], \"rows\": []}\nnot json\n").unwrap();
        let err = load_tables(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
