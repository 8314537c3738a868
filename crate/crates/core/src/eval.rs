//! Execution and logical-form accuracy, invalid-query rate, and the
//! COUNT-operator precision/recall/F1 analysis.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::datagen::Example;
use crate::models::Prediction;
use crate::sql::{execute, lf_equal, AggOp, SqlError};
use crate::table::Table;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("expected {expected} predictions, got {got}")]
    MissingPrediction { expected: usize, got: usize },
    #[error("prediction references unknown table '{0}'")]
    UnknownTable(String),
    #[error("gold query failed to execute: {0}")]
    Gold(#[from] SqlError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any denominator was zero and the component was reported as 0.
    pub degenerate: bool,
}

/// Reward-style cause code for error analysis.
#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Correct,
    WrongResult,
    Invalid,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleScore {
    pub table_id: String,
    pub correct_ex: bool,
    pub correct_lf: bool,
    pub invalid: bool,
    pub cause: Cause,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub n_ex: usize,
    pub n_lf: usize,
    pub acc_ex: f64,
    pub acc_lf: f64,
    pub invalid_rate: f64,
    pub count_prf1: Prf1,
    pub per_example: Vec<ExampleScore>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Score one prediction per example. Predictions that fail to assemble or
/// whose query is rejected by the executor count as invalid and contribute
/// to neither accuracy; an empty aggregate is a valid query with a wrong
/// result.
pub fn evaluate(
    preds: &[Prediction],
    examples: &[Example],
    tables: &HashMap<&str, &Table>,
) -> Result<EvalReport, EvalError> {
    if preds.len() != examples.len() {
        return Err(EvalError::MissingPrediction { expected: examples.len(), got: preds.len() });
    }
    let mut per_example = Vec::with_capacity(examples.len());
    for (pred, ex) in preds.iter().zip(examples) {
        let table = tables
            .get(ex.table_id.as_str())
            .ok_or_else(|| EvalError::UnknownTable(ex.table_id.clone()))?;
        let gold_result = execute(&ex.gold, table)?;
        let score = match &pred.assembled {
            Err(_) => ExampleScore {
                table_id: ex.table_id.clone(),
                correct_ex: false,
                correct_lf: false,
                invalid: true,
                cause: Cause::Invalid,
            },
            Ok(q) => match execute(q, table) {
                Ok(result) => {
                    let correct_ex = result.matches(&gold_result);
                    let correct_lf = lf_equal(q, &ex.gold, table.header());
                    ExampleScore {
                        table_id: ex.table_id.clone(),
                        correct_ex,
                        correct_lf,
                        invalid: false,
                        cause: if correct_ex { Cause::Correct } else { Cause::WrongResult },
                    }
                }
                Err(e) if e.is_invalid_query() => ExampleScore {
                    table_id: ex.table_id.clone(),
                    correct_ex: false,
                    correct_lf: false,
                    invalid: true,
                    cause: Cause::Invalid,
                },
                Err(_) => ExampleScore {
                    table_id: ex.table_id.clone(),
                    correct_ex: false,
                    correct_lf: false,
                    invalid: false,
                    cause: Cause::WrongResult,
                },
            },
        };
        per_example.push(score);
    }
    let n = per_example.len();
    let n_ex = per_example.iter().filter(|s| s.correct_ex).count();
    let n_lf = per_example.iter().filter(|s| s.correct_lf).count();
    let n_invalid = per_example.iter().filter(|s| s.invalid).count();
    let report = EvalReport {
        n,
        n_ex,
        n_lf,
        acc_ex: ratio(n_ex, n),
        acc_lf: ratio(n_lf, n),
        invalid_rate: ratio(n_invalid, n),
        count_prf1: count_prf1(preds, examples),
        per_example,
    };
    debug_assert!(report.acc_lf <= report.acc_ex + 1e-12);
    Ok(report)
}

/// Binary precision/recall/F1 with "predicted aggregation is COUNT" as the
/// positive class. Predictions without an aggregation (invalid streams)
/// count as negative. Zero denominators report 0 with the degenerate flag.
pub fn count_prf1(preds: &[Prediction], examples: &[Example]) -> Prf1 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (pred, ex) in preds.iter().zip(examples) {
        let predicted = pred.agg == Some(AggOp::Count);
        let actual = ex.gold.agg == AggOp::Count;
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let mut degenerate = false;
    let precision = if tp + fp == 0 {
        degenerate = true;
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        degenerate = true;
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf1 { precision, recall, f1, degenerate }
}

/// Dump predictions next to their golds, one JSON object per line.
pub fn write_predictions(
    path: &Path,
    preds: &[Prediction],
    examples: &[Example],
) -> Result<(), EvalError> {
    let io_err = |source| EvalError::Io { path: path.display().to_string(), source };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    for (pred, ex) in preds.iter().zip(examples) {
        let line = serde_json::json!({
            "table_id": ex.table_id,
            "pred": pred.to_json(),
            "gold": ex.gold.to_json(),
        });
        writeln!(file, "{}", line).map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::assemble_prediction;
    use crate::sql::test_fixtures::{count_engine_query, race_table};
    use crate::sql::{CondOp, Condition, Query};
    use crate::table::Value;

    fn gold_examples(queries: Vec<Query>) -> Vec<Example> {
        queries
            .into_iter()
            .map(|gold| Example {
                table_id: "race".into(),
                question: vec!["q".into()],
                question_raw: "q".into(),
                gold,
            })
            .collect()
    }

    fn pred_of(q: &Query) -> Prediction {
        Prediction {
            agg: Some(q.agg),
            sel: Some(q.sel),
            where_tokens: vec![],
            assembled: Ok(q.clone()),
        }
    }

    fn structure_error_pred() -> Prediction {
        Prediction {
            agg: None,
            sel: None,
            where_tokens: vec![],
            assembled: Err(SqlError::Structure("no column".into())),
        }
    }

    #[test]
    fn perfect_predictions_score_ones() {
        let t = race_table();
        let tables: HashMap<&str, &Table> = [("race", &t)].into();
        let examples = gold_examples(vec![
            count_engine_query(),
            Query { agg: AggOp::NullAgg, sel: 0, conds: vec![] },
        ]);
        let preds: Vec<Prediction> = examples.iter().map(|e| pred_of(&e.gold)).collect();
        let report = evaluate(&preds, &examples, &tables).unwrap();
        assert_eq!(report.acc_ex, 1.0);
        assert_eq!(report.acc_lf, 1.0);
        assert_eq!(report.invalid_rate, 0.0);
        assert!(report.per_example.iter().all(|s| s.cause == Cause::Correct));
    }

    #[test]
    fn swapped_conditions_credit_execution_not_logical_form() {
        let t = race_table();
        let tables: HashMap<&str, &Table> = [("race", &t)].into();
        let c1 = Condition { col: 3, op: CondOp::Eq, value: Value::Text("Ford V8".into()) };
        let c2 = Condition { col: 1, op: CondOp::Eq, value: Value::Text("Lotus".into()) };
        let gold = Query { agg: AggOp::NullAgg, sel: 5, conds: vec![c1.clone(), c2.clone()] };
        let swapped = Query { agg: AggOp::NullAgg, sel: 5, conds: vec![c2, c1] };
        let examples = gold_examples(vec![gold]);
        let report = evaluate(&[pred_of(&swapped)], &examples, &tables).unwrap();
        assert_eq!(report.n_ex, 1);
        assert_eq!(report.n_lf, 0);
    }

    #[test]
    fn coincidental_result_match_counts_execution_only() {
        // two different selected columns that count the same rows
        let t = race_table();
        let tables: HashMap<&str, &Table> = [("race", &t)].into();
        let cond = Condition { col: 5, op: CondOp::Eq, value: Value::Text("Val Musetti".into()) };
        let gold = Query { agg: AggOp::Count, sel: 3, conds: vec![cond.clone()] };
        let other = Query { agg: AggOp::Count, sel: 0, conds: vec![cond] };
        let examples = gold_examples(vec![gold]);
        let report = evaluate(&[pred_of(&other)], &examples, &tables).unwrap();
        assert_eq!(report.n_ex, 1, "same count, execution credit");
        assert_eq!(report.n_lf, 0, "different column, no string credit");
    }

    #[test]
    fn invalid_predictions_count_toward_neither_accuracy() {
        let t = race_table();
        let tables: HashMap<&str, &Table> = [("race", &t)].into();
        let examples = gold_examples(vec![count_engine_query()]);
        let report = evaluate(&[structure_error_pred()], &examples, &tables).unwrap();
        assert_eq!(report.n_ex, 0);
        assert_eq!(report.n_lf, 0);
        assert_eq!(report.invalid_rate, 1.0);
        assert!(report.acc_lf <= report.acc_ex);
    }

    #[test]
    fn empty_aggregate_is_wrong_result_not_invalid() {
        let t = race_table();
        let tables: HashMap<&str, &Table> = [("race", &t)].into();
        let examples = gold_examples(vec![count_engine_query()]);
        let pred_q = Query {
            agg: AggOp::Min,
            sel: 4,
            conds: vec![Condition { col: 5, op: CondOp::Eq, value: Value::Text("nobody".into()) }],
        };
        let report = evaluate(&[pred_of(&pred_q)], &examples, &tables).unwrap();
        assert_eq!(report.invalid_rate, 0.0);
        assert_eq!(report.per_example[0].cause, Cause::WrongResult);
    }

    #[test]
    fn semantically_invalid_assembled_query_counts_invalid() {
        let t = race_table();
        let tables: HashMap<&str, &Table> = [("race", &t)].into();
        let examples = gold_examples(vec![count_engine_query()]);
        // MIN over a text column assembles but the executor rejects it
        let pred = assemble_prediction(AggOp::Min, 5, &["end".into()], t.header());
        let report = evaluate(&[pred], &examples, &tables).unwrap();
        assert_eq!(report.invalid_rate, 1.0);
    }

    #[test]
    fn prf1_arithmetic() {
        let golds = vec![
            Query { agg: AggOp::Count, sel: 0, conds: vec![] },
            Query { agg: AggOp::NullAgg, sel: 0, conds: vec![] },
        ];
        let examples = gold_examples(golds);
        // both predicted COUNT: precision 1/2, recall 1/1
        let preds: Vec<Prediction> = examples
            .iter()
            .map(|_| pred_of(&Query { agg: AggOp::Count, sel: 0, conds: vec![] }))
            .collect();
        let prf = count_prf1(&preds, &examples);
        assert_eq!(prf.precision, 0.5);
        assert_eq!(prf.recall, 1.0);
        assert!((prf.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!(!prf.degenerate);
    }

    #[test]
    fn prf1_degenerate_cases_flag_and_zero() {
        let examples = gold_examples(vec![Query { agg: AggOp::NullAgg, sel: 0, conds: vec![] }]);
        let preds = vec![pred_of(&Query { agg: AggOp::NullAgg, sel: 0, conds: vec![] })];
        let prf = count_prf1(&preds, &examples);
        assert_eq!((prf.precision, prf.recall, prf.f1), (0.0, 0.0, 0.0));
        assert!(prf.degenerate);
    }

    #[test]
    fn prf1_matches_confusion_matrix_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let n = rng.gen_range(1..20);
            let golds: Vec<Query> = (0..n)
                .map(|_| Query {
                    agg: AggOp::from_code(rng.gen_range(0..4)).unwrap(),
                    sel: 0,
                    conds: vec![],
                })
                .collect();
            let examples = gold_examples(golds);
            let preds: Vec<Prediction> = (0..n)
                .map(|_| pred_of(&Query {
                    agg: AggOp::from_code(rng.gen_range(0..4)).unwrap(),
                    sel: 0,
                    conds: vec![],
                }))
                .collect();
            let prf = count_prf1(&preds, &examples);
            // independent confusion-matrix computation
            let mut cm = [[0usize; 2]; 2];
            for (p, e) in preds.iter().zip(&examples) {
                let pi = usize::from(p.agg == Some(AggOp::Count));
                let gi = usize::from(e.gold.agg == AggOp::Count);
                cm[pi][gi] += 1;
            }
            let (tp, fp, fn_) = (cm[1][1] as f64, cm[1][0] as f64, cm[0][1] as f64);
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            assert!((prf.precision - p).abs() < 1e-12);
            assert!((prf.recall - r).abs() < 1e-12);
            assert!((prf.f1 - f).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let t = race_table();
        let tables: HashMap<&str, &Table> = [("race", &t)].into();
        let examples = gold_examples(vec![
            count_engine_query(),
            Query { agg: AggOp::NullAgg, sel: 0, conds: vec![] },
            Query { agg: AggOp::Max, sel: 4, conds: vec![] },
        ]);
        let preds: Vec<Prediction> = vec![
            pred_of(&examples[0].gold),
            structure_error_pred(),
            pred_of(&Query { agg: AggOp::Min, sel: 4, conds: vec![] }),
        ];
        let base = evaluate(&preds, &examples, &tables).unwrap();
        let perm = [2usize, 0, 1];
        let p2: Vec<Prediction> = perm.iter().map(|&i| preds[i].clone()).collect();
        let e2: Vec<Example> = perm.iter().map(|&i| examples[i].clone()).collect();
        let shuffled = evaluate(&p2, &e2, &tables).unwrap();
        assert_eq!(base.acc_ex, shuffled.acc_ex);
        assert_eq!(base.acc_lf, shuffled.acc_lf);
        assert_eq!(base.invalid_rate, shuffled.invalid_rate);
    }

    #[test]
    fn unknown_table_is_an_error() {
        let t = race_table();
        let tables: HashMap<&str, &Table> = [("race", &t)].into();
        let mut examples = gold_examples(vec![count_engine_query()]);
        examples[0].table_id = "missing".into();
        let err = evaluate(&[pred_of(&count_engine_query())], &examples, &tables).unwrap_err();
        assert!(matches!(err, EvalError::UnknownTable(_)));
    }
}
