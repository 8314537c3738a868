//! Executor correctness against an independent brute-force row scan, plus
//! the algebraic properties of conjunctive filtering and the canonical text
//! form.

mod common;

use std::collections::HashMap;

use common::{random_table, random_valid_query};
use nl2sql_core::sql::{
    conds_from_tokens, execute, lf_equal, parse_query, serialize_query, AggOp, CondOp, ExecResult,
    Query, SqlError,
};
use nl2sql_core::table::{ColumnType, Table, Value};
use nl2sql_core::text::tokenize;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// the oracle: a separately written row scan with its own normalization,
// comparison, and aggregation code

#[derive(Debug, PartialEq)]
enum OracleOutcome {
    Invalid,
    EmptyAggregate,
    Rows(HashMap<String, usize>),
    Scalar(String),
}

fn oracle_norm_text(s: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    for w in s.split_whitespace() {
        words.push(w.to_lowercase());
    }
    words.join(" ")
}

fn oracle_value_key(v: &Value) -> String {
    match v {
        Value::Text(s) => format!("t:{}", oracle_norm_text(s)),
        Value::Number(n) => format!("n:{}", n),
    }
}

fn oracle_execute(q: &Query, t: &Table) -> OracleOutcome {
    // schema checks, written out longhand
    if q.sel >= t.n_cols() {
        return OracleOutcome::Invalid;
    }
    if matches!(q.agg, AggOp::Min | AggOp::Max) && t.header()[q.sel].ctype != ColumnType::Real {
        return OracleOutcome::Invalid;
    }
    for c in &q.conds {
        if c.col >= t.n_cols() {
            return OracleOutcome::Invalid;
        }
        let numeric = t.header()[c.col].ctype == ColumnType::Real;
        if matches!(c.op, CondOp::Gt | CondOp::Lt) && !numeric {
            return OracleOutcome::Invalid;
        }
        match (&c.value, numeric) {
            (Value::Number(_), true) | (Value::Text(_), false) => {}
            _ => return OracleOutcome::Invalid,
        }
    }
    for i in 0..q.conds.len() {
        for j in (i + 1)..q.conds.len() {
            let (a, b) = (&q.conds[i], &q.conds[j]);
            let same_value = match (&a.value, &b.value) {
                (Value::Text(x), Value::Text(y)) => oracle_norm_text(x) == oracle_norm_text(y),
                (Value::Number(x), Value::Number(y)) => x == y,
                _ => false,
            };
            if a.col == b.col && a.op == b.op && same_value {
                return OracleOutcome::Invalid;
            }
        }
    }

    let mut kept: Vec<&Vec<Value>> = Vec::new();
    'rows: for row in t.rows() {
        for c in &q.conds {
            let cell = &row[c.col];
            let holds = match c.op {
                CondOp::Eq => match (cell, &c.value) {
                    (Value::Text(a), Value::Text(b)) => oracle_norm_text(a) == oracle_norm_text(b),
                    (Value::Number(a), Value::Number(b)) => a == b,
                    _ => false,
                },
                CondOp::Gt => match (cell, &c.value) {
                    (Value::Number(a), Value::Number(b)) => a > b,
                    _ => false,
                },
                CondOp::Lt => match (cell, &c.value) {
                    (Value::Number(a), Value::Number(b)) => a < b,
                    _ => false,
                },
            };
            if !holds {
                continue 'rows;
            }
        }
        kept.push(row);
    }

    match q.agg {
        AggOp::NullAgg => {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for row in kept {
                *counts.entry(oracle_value_key(&row[q.sel])).or_insert(0) += 1;
            }
            OracleOutcome::Rows(counts)
        }
        AggOp::Count => OracleOutcome::Scalar(format!("n:{}", kept.len() as f64)),
        AggOp::Min | AggOp::Max => {
            let mut best: Option<f64> = None;
            for row in kept {
                if let Value::Number(v) = &row[q.sel] {
                    best = Some(match (best, q.agg) {
                        (None, _) => *v,
                        (Some(b), AggOp::Min) => if *v < b { *v } else { b },
                        (Some(b), _) => if *v > b { *v } else { b },
                    });
                }
            }
            match best {
                Some(v) => OracleOutcome::Scalar(format!("n:{}", v)),
                None => OracleOutcome::EmptyAggregate,
            }
        }
    }
}

fn engine_outcome(q: &Query, t: &Table) -> OracleOutcome {
    match execute(q, t) {
        Err(SqlError::EmptyAggregate) => OracleOutcome::EmptyAggregate,
        Err(_) => OracleOutcome::Invalid,
        Ok(ExecResult::Scalar(v)) => OracleOutcome::Scalar(oracle_value_key(&v)),
        Ok(ExecResult::Rows(rows)) => {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for v in rows {
                *counts.entry(oracle_value_key(&v)).or_insert(0) += 1;
            }
            OracleOutcome::Rows(counts)
        }
    }
}

#[test]
fn executor_matches_brute_force_oracle_on_1000_pairs() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE0E0);
    for i in 0..1000 {
        let t = random_table(&mut rng, &format!("t{}", i));
        let q = random_valid_query(&mut rng, &t);
        let want = oracle_execute(&q, &t);
        let got = engine_outcome(&q, &t);
        assert_eq!(got, want, "query {:?} on table {:?}", q, t);
    }
    assert!(start.elapsed().as_secs() < 10, "oracle comparison exceeded 10 s");
}

#[test]
fn executor_agrees_with_oracle_on_invalid_queries() {
    // hand-rolled schema violations must be rejected identically
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let t = random_table(&mut rng, "inv");
    let oob = Query { agg: AggOp::Count, sel: t.n_cols() + 1, conds: vec![] };
    assert_eq!(engine_outcome(&oob, &t), OracleOutcome::Invalid);
    assert_eq!(oracle_execute(&oob, &t), OracleOutcome::Invalid);
}

#[test]
fn conjunction_is_commutative() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut exercised = 0;
    let mut i = 0;
    while exercised < 500 {
        i += 1;
        let t = random_table(&mut rng, &format!("c{}", i));
        let q = random_valid_query(&mut rng, &t);
        if q.conds.len() < 2 {
            continue;
        }
        exercised += 1;
        let mut permuted = q.clone();
        permuted.conds.reverse();
        match (execute(&q, &t), execute(&permuted, &t)) {
            (Ok(a), Ok(b)) => assert!(a.matches(&b), "{:?}", q),
            (Err(a), Err(b)) => assert_eq!(a, b),
            (a, b) => panic!("disagreement: {:?} vs {:?} for {:?}", a, b, q),
        }
    }
}

#[test]
fn adding_a_condition_never_enlarges_the_kept_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    for i in 0..500 {
        let t = random_table(&mut rng, &format!("m{}", i));
        let q = random_valid_query(&mut rng, &t);
        let counting = Query { agg: AggOp::Count, sel: 0, conds: q.conds.clone() };
        let base = match execute(&counting, &t) {
            Ok(ExecResult::Scalar(Value::Number(n))) => n,
            other => panic!("count query cannot fail: {:?}", other),
        };
        let mut extended = counting.clone();
        let extra = random_valid_query(&mut rng, &t);
        if let Some(c) = extra.conds.into_iter().next() {
            if extended.conds.iter().any(|p| p.same_as(&c)) {
                continue;
            }
            extended.conds.push(c);
            let narrowed = match execute(&extended, &t) {
                Ok(ExecResult::Scalar(Value::Number(n))) => n,
                other => panic!("count query cannot fail: {:?}", other),
            };
            assert!(narrowed <= base, "filter grew: {} -> {}", base, narrowed);
        }
    }
}

#[test]
fn string_equality_implies_execution_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..200 {
        let t = random_table(&mut rng, &format!("lf{}", i));
        let a = random_valid_query(&mut rng, &t);
        let b = parse_query(&serialize_query(&a, t.header()), t.header()).unwrap();
        assert!(lf_equal(&a, &b, t.header()));
        match (execute(&a, &t), execute(&b, &t)) {
            (Ok(ra), Ok(rb)) => assert!(ra.matches(&rb)),
            (Err(ea), Err(eb)) => assert_eq!(ea, eb),
            (ra, rb) => panic!("disagreement: {:?} vs {:?}", ra, rb),
        }
    }
}

#[test]
fn lf_equal_agrees_with_direct_string_comparison() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..200 {
        let t = random_table(&mut rng, &format!("s{}", i));
        let a = random_valid_query(&mut rng, &t);
        let b = random_valid_query(&mut rng, &t);
        let by_strings = serialize_query(&a, t.header()) == serialize_query(&b, t.header());
        assert_eq!(lf_equal(&a, &b, t.header()), by_strings);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// serialize -> parse is the identity on valid queries.
    #[test]
    fn serialize_parse_round_trip(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_table(&mut rng, "rt");
        let q = random_valid_query(&mut rng, &t);
        let text = serialize_query(&q, t.header());
        let back = parse_query(&text, t.header()).unwrap();
        prop_assert_eq!(&back, &q);
        // and parsing is a fixed point of re-serialization
        prop_assert_eq!(serialize_query(&back, t.header()), text);
    }

    /// tokenizing a serialized WHERE clause and re-parsing the stream
    /// recovers the original conditions.
    #[test]
    fn where_token_stream_round_trip(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_table(&mut rng, "tok");
        let q = random_valid_query(&mut rng, &t);
        let text = serialize_query(&q, t.header());
        let mut stream = match text.find(" WHERE ") {
            Some(at) => tokenize(&text[at..]),
            None => vec![],
        };
        stream.push("end".to_string());
        let conds = conds_from_tokens(&stream, t.header()).unwrap();
        prop_assert_eq!(conds, q.conds);
    }
}
