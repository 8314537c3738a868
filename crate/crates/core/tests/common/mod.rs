//! Shared random generators for integration tests.

use nl2sql_core::sql::{AggOp, CondOp, Condition, Query};
use nl2sql_core::table::{Column, ColumnType, Table, Value};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 12] = [
    "alpha", "bravo", "delta", "echo", "lima", "oslo", "rome", "kyoto", "york", "turin",
    "green isle", "Blue Sky",
];

/// A random typed table: 1-6 columns, 0-10 rows, values drawn from small
/// pools so equality conditions sometimes match.
pub fn random_table(rng: &mut ChaCha8Rng, id: &str) -> Table {
    let n_cols = rng.gen_range(1..=6);
    let n_rows = rng.gen_range(0..=10);
    let header: Vec<Column> = (0..n_cols)
        .map(|j| {
            let name = format!("col {}", j);
            if rng.gen_bool(0.5) {
                Column::text(&name)
            } else {
                Column::real(&name)
            }
        })
        .collect();
    let rows: Vec<Vec<Value>> = (0..n_rows)
        .map(|_| {
            header
                .iter()
                .map(|c| match c.ctype {
                    ColumnType::Text => {
                        Value::Text(WORDS[rng.gen_range(0..WORDS.len())].to_string())
                    }
                    ColumnType::Real => {
                        Value::Number((rng.gen_range(-40.0..40.0f64) * 2.0).round() / 2.0)
                    }
                })
                .collect()
        })
        .collect();
    Table::new(id.to_string(), header, rows).expect("generated table is valid")
}

/// A random query that satisfies every schema invariant (it may still
/// filter to nothing or hit an empty aggregate).
pub fn random_valid_query(rng: &mut ChaCha8Rng, t: &Table) -> Query {
    loop {
        let sel = rng.gen_range(0..t.n_cols());
        let agg = if t.header()[sel].ctype == ColumnType::Real {
            AggOp::ALL[rng.gen_range(0..4)]
        } else {
            [AggOp::NullAgg, AggOp::Count][rng.gen_range(0..2)]
        };
        let n_conds = rng.gen_range(0..=3);
        let mut conds: Vec<Condition> = Vec::new();
        for _ in 0..n_conds {
            let col = rng.gen_range(0..t.n_cols());
            let numeric = t.header()[col].ctype == ColumnType::Real;
            let op = if numeric {
                [CondOp::Eq, CondOp::Gt, CondOp::Lt][rng.gen_range(0..3)]
            } else {
                CondOp::Eq
            };
            let value = if numeric {
                Value::Number((rng.gen_range(-45.0..45.0f64) * 2.0).round() / 2.0)
            } else if t.n_rows() > 0 && rng.gen_bool(0.7) {
                t.rows()[rng.gen_range(0..t.n_rows())][col].clone()
            } else {
                Value::Text(WORDS[rng.gen_range(0..WORDS.len())].to_string())
            };
            let cand = Condition { col, op, value };
            if !conds.iter().any(|c| c.same_as(&cand)) {
                conds.push(cand);
            }
        }
        if let Ok(q) = Query::validated(agg, sel, conds, t.header()) {
            return q;
        }
    }
}
