//! Synthetic dataset generation: table filtering, query sampling, condition
//! minimization, template questions, table-disjoint splits, and summary
//! statistics.

mod editdist;
mod io;
mod synth;
mod templates;

pub use editdist::char_edit_distance;
pub use io::{read_dataset, write_dataset, write_stats};
pub use synth::synth_tables;
pub use templates::{render_template_question, TEMPLATE_BANK_VERSION};

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::sql::{execute, executes_nonempty, serialize_query, AggOp, CondOp, Condition, Query, SqlError};
use crate::table::{ColumnType, Table, TableError, Value};
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("sampling exhausted after {budget} attempts on table {table_id}")]
    SamplingExhausted { table_id: String, budget: usize },
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {msg}")]
    Record { path: String, line: usize, msg: String },
}

/// One dataset record: a question over a table with its gold query.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub table_id: String,
    pub question: Vec<String>,
    pub question_raw: String,
    pub gold: Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn suffix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Split> {
        match name {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A generated corpus: tables plus table-disjoint train/dev/test examples.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub tables: Vec<Table>,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub seed: u64,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn table_index(&self) -> HashMap<&str, &Table> {
        self.tables.iter().map(|t| (t.id(), t)).collect()
    }

    pub fn examples(&self) -> impl Iterator<Item = (&Example, Split)> {
        Split::ALL
            .iter()
            .flat_map(move |&s| self.split(s).iter().map(move |e| (e, s)))
    }
}

/// Drop tables unsuited for query generation, then remove each survivor's
/// last row (summary rows in web tables tend to break the schema).
///
/// Rejection rules: a cell longer than 50 characters, an empty header cell,
/// fewer than 5 rows or 5 columns, or any row where one value fills more
/// than 40% of the cells.
pub fn filter_tables(tables: Vec<Table>) -> Vec<Table> {
    tables
        .into_iter()
        .filter(table_passes)
        .map(|t| {
            let mut rows = t.rows().to_vec();
            rows.pop();
            Table::new(t.id().to_string(), t.header().to_vec(), rows)
                .expect("dropping a row preserves validity")
        })
        .collect()
}

fn table_passes(t: &Table) -> bool {
    if t.n_rows() < 5 || t.n_cols() < 5 {
        return false;
    }
    if t.header().iter().any(|c| c.name.trim().is_empty()) {
        return false;
    }
    for row in t.rows() {
        if row.iter().any(|cell| cell.render().chars().count() > 50) {
            return false;
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for cell in row {
            *counts.entry(cell.normalized()).or_insert(0) += 1;
        }
        let max_dup = counts.values().copied().max().unwrap_or(0);
        if (max_dup as f64) / (row.len() as f64) > 0.4 {
            return false;
        }
    }
    true
}

/// Decimal places in a value's minimal rendering.
fn decimals_of(v: f64) -> usize {
    let s = crate::text::format_number(v);
    s.split_once('.').map_or(0, |(_, frac)| frac.len())
}

/// Most precise cell of a numeric column, in decimal places.
fn column_precision(t: &Table, col: usize) -> usize {
    t.rows()
        .iter()
        .filter_map(|row| row[col].as_number())
        .map(decimals_of)
        .max()
        .unwrap_or(0)
}

fn column_range(t: &Table, col: usize) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in t.rows() {
        let v = row[col].as_number()?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo.is_finite() && hi.is_finite() {
        Some((lo, hi))
    } else {
        None
    }
}

fn sample_condition(t: &Table, rng: &mut impl Rng) -> Option<Condition> {
    let col = rng.gen_range(0..t.n_cols());
    let numeric = t.header()[col].ctype == ColumnType::Real;
    let op = if numeric {
        [CondOp::Eq, CondOp::Gt, CondOp::Lt][rng.gen_range(0..3)]
    } else {
        CondOp::Eq
    };
    let value = match op {
        CondOp::Eq => {
            if t.n_rows() == 0 {
                return None;
            }
            t.rows()[rng.gen_range(0..t.n_rows())][col].clone()
        }
        CondOp::Gt | CondOp::Lt => {
            let (lo, hi) = column_range(t, col)?;
            let raw = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let scale = 10f64.powi(column_precision(t, col) as i32);
            Value::Number((raw * scale).round() / scale)
        }
    };
    Some(Condition { col, op, value })
}

pub const DEFAULT_RETRY_BUDGET: usize = 100;

/// Sample one query for a table: aggregation restricted by the selected
/// column's type, equality values drawn from cells, range comparisons drawn
/// from the column's span, resampled until execution keeps at least one row.
pub fn sample_query(t: &Table, rng: &mut impl Rng) -> Result<Query, DatagenError> {
    sample_query_with_budget(t, rng, DEFAULT_RETRY_BUDGET)
}

pub fn sample_query_with_budget(
    t: &Table,
    rng: &mut impl Rng,
    budget: usize,
) -> Result<Query, DatagenError> {
    for _ in 0..budget {
        let sel = rng.gen_range(0..t.n_cols());
        let agg = if t.header()[sel].ctype == ColumnType::Real {
            AggOp::ALL[rng.gen_range(0..4)]
        } else {
            [AggOp::NullAgg, AggOp::Count][rng.gen_range(0..2)]
        };
        let n_conds = rng.gen_range(0..=2);
        let mut conds: Vec<Condition> = Vec::with_capacity(n_conds);
        let mut ok = true;
        for _ in 0..n_conds {
            let mut placed = false;
            for _ in 0..10 {
                match sample_condition(t, rng) {
                    Some(c) if !conds.iter().any(|p| p.same_as(&c)) => {
                        conds.push(c);
                        placed = true;
                        break;
                    }
                    Some(_) => continue,
                    None => break,
                }
            }
            if !placed {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let q = match Query::validated(agg, sel, conds, t.header()) {
            Ok(q) => q,
            Err(_) => continue,
        };
        if executes_nonempty(&q, t) {
            return Ok(q);
        }
    }
    Err(DatagenError::SamplingExhausted { table_id: t.id().to_string(), budget })
}

/// Greedily drop conditions whose removal leaves the execution result
/// unchanged, repeating until no single remaining condition is droppable.
pub fn minimize_conditions(q: &Query, t: &Table) -> Result<Query, SqlError> {
    let target = execute(q, t)?;
    let mut conds = q.conds.clone();
    loop {
        let mut dropped = false;
        let mut i = 0;
        while i < conds.len() {
            let mut candidate = conds.clone();
            candidate.remove(i);
            let trial = Query { agg: q.agg, sel: q.sel, conds: candidate };
            if execute(&trial, t)?.matches(&target) {
                conds.remove(i);
                dropped = true;
            } else {
                i += 1;
            }
        }
        if !dropped {
            break;
        }
    }
    Ok(Query { agg: q.agg, sel: q.sel, conds })
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub per_table: usize,
    pub split_ratio: (f64, f64, f64),
    pub seed: u64,
    pub retry_budget: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            per_table: 6,
            split_ratio: (0.7, 0.1, 0.2),
            seed: 1,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generate a full dataset: filter tables, assign each table whole to one
/// split by seeded shuffle, then sample/minimize/render `per_table` examples
/// per table. Deterministic for a fixed seed; tables that exhaust their
/// retry budget are skipped with a warning.
pub fn build_dataset(tables: Vec<Table>, opts: &BuildOptions) -> Dataset {
    let filtered = filter_tables(tables);
    let n = filtered.len();

    let mut order: Vec<usize> = (0..n).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for i in (1..order.len()).rev() {
        let j = split_rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = ((n as f64) * opts.split_ratio.0).round() as usize;
    let n_dev = (((n as f64) * opts.split_ratio.1).round() as usize).min(n - n_train.min(n));
    let mut assignment: HashMap<usize, Split> = HashMap::new();
    for (rank, &ti) in order.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        assignment.insert(ti, split);
    }

    let mut dataset = Dataset {
        tables: Vec::with_capacity(n),
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        seed: opts.seed,
    };

    for (ti, table) in filtered.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ fnv1a64(table.id()));
        let mut examples = Vec::with_capacity(opts.per_table);
        let mut failed = false;
        for _ in 0..opts.per_table {
            let sampled = match sample_query_with_budget(&table, &mut rng, opts.retry_budget) {
                Ok(q) => q,
                Err(e) => {
                    log::warn!("skipping table {}: {}", table.id(), e);
                    failed = true;
                    break;
                }
            };
            let gold = minimize_conditions(&sampled, &table)
                .expect("sampled query executes, so minimization cannot fail");
            let question_raw = render_template_question(&gold, &table, &mut rng);
            examples.push(Example {
                table_id: table.id().to_string(),
                question: tokenize(&question_raw),
                question_raw,
                gold,
            });
        }
        if failed {
            continue;
        }
        let split = assignment[&ti];
        match split {
            Split::Train => dataset.train.extend(examples),
            Split::Dev => dataset.dev.extend(examples),
            Split::Test => dataset.test.extend(examples),
        }
        dataset.tables.push(table);
    }
    dataset
}

/// Histograms over the dataset plus question-type prefix counts, the
/// numeric side of the size/type distribution figures.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub examples: usize,
    pub tables: usize,
    pub split_sizes: BTreeMap<String, usize>,
    pub column_count_hist: BTreeMap<usize, usize>,
    pub question_len_hist: BTreeMap<usize, usize>,
    pub query_len_hist: BTreeMap<usize, usize>,
    pub question_prefix_counts: BTreeMap<String, usize>,
}

pub fn dataset_stats(d: &Dataset) -> DatasetStats {
    let index = d.table_index();
    let mut stats = DatasetStats {
        examples: 0,
        tables: d.tables.len(),
        split_sizes: BTreeMap::new(),
        column_count_hist: BTreeMap::new(),
        question_len_hist: BTreeMap::new(),
        query_len_hist: BTreeMap::new(),
        question_prefix_counts: BTreeMap::new(),
    };
    for &split in &Split::ALL {
        stats
            .split_sizes
            .insert(split.suffix().to_string(), d.split(split).len());
    }
    for (ex, _) in d.examples() {
        stats.examples += 1;
        if let Some(t) = index.get(ex.table_id.as_str()) {
            *stats.column_count_hist.entry(t.n_cols()).or_insert(0) += 1;
            let query_len = tokenize(&serialize_query(&ex.gold, t.header())).len();
            *stats.query_len_hist.entry(query_len).or_insert(0) += 1;
        }
        *stats.question_len_hist.entry(ex.question.len()).or_insert(0) += 1;
        let prefix = ex.question.iter().take(2).cloned().collect::<Vec<_>>().join(" ");
        *stats.question_prefix_counts.entry(prefix).or_insert(0) += 1;
    }
    stats
}

/// Check the generated-dataset invariants for one example. Returns a list of
/// violations (empty means the example is sound).
pub fn example_violations(ex: &Example, t: &Table) -> Vec<String> {
    let mut out = Vec::new();
    if let Err(e) = ex.gold.validate_against(t.header()) {
        out.push(format!("gold invalid: {}", e));
        return out;
    }
    if !executes_nonempty(&ex.gold, t) {
        out.push("gold executes empty".into());
    }
    match minimize_conditions(&ex.gold, t) {
        Ok(min) => {
            if min.conds.len() != ex.gold.conds.len() {
                out.push("gold not condition-minimal".into());
            }
        }
        Err(e) => out.push(format!("gold does not execute: {}", e)),
    }
    let question = ex.question.join(" ");
    for cond in &ex.gold.conds {
        if !question.contains(&cond.value.normalized()) {
            out.push(format!("value '{}' missing from question", cond.value.normalized()));
        }
    }
    out
}

/// Table-id sets of the three splits must be pairwise disjoint.
pub fn splits_are_table_disjoint(d: &Dataset) -> bool {
    let mut seen: HashMap<&str, Split> = HashMap::new();
    for (ex, split) in d.examples() {
        match seen.get(ex.table_id.as_str()) {
            Some(&prev) if prev != split => return false,
            _ => {
                seen.insert(ex.table_id.as_str(), split);
            }
        }
    }
    true
}
