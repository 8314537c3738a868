//! Crude question templates, keyed by aggregation operator.
//!
//! The bank is fixed and versioned so regenerating a dataset with the same
//! seed is a byte-identical operation. Every condition value is interpolated
//! verbatim (in normalized form) so a pointer decoder can copy it back out
//! of the question.

use rand::Rng;

use crate::sql::{AggOp, CondOp, Query};
use crate::table::Table;
use crate::text::normalize;

pub const TEMPLATE_BANK_VERSION: u32 = 1;

const NULL_AGG_STEMS: [&str; 2] = ["what is the {sel}", "tell me the {sel}"];
const COUNT_STEMS: [&str; 2] = ["how many {sel} are there", "what is the number of {sel}"];
const MIN_STEMS: [&str; 2] = ["what is the smallest {sel}", "what is the minimum {sel}"];
const MAX_STEMS: [&str; 2] = ["what is the largest {sel}", "what is the maximum {sel}"];

fn stem_bank(agg: AggOp) -> &'static [&'static str; 2] {
    match agg {
        AggOp::NullAgg => &NULL_AGG_STEMS,
        AggOp::Count => &COUNT_STEMS,
        AggOp::Min => &MIN_STEMS,
        AggOp::Max => &MAX_STEMS,
    }
}

/// Render a crude English question for a query. Deterministic given the rng
/// state; the output is already normalized (lowercase, single spaces).
pub fn render_template_question(q: &Query, t: &Table, rng: &mut impl Rng) -> String {
    let schema = t.header();
    let stems = stem_bank(q.agg);
    let stem = stems[rng.gen_range(0..stems.len())];
    let mut question = stem.replace("{sel}", &normalize(&schema[q.sel].name));
    for (i, cond) in q.conds.iter().enumerate() {
        question.push_str(if i == 0 { " when " } else { " and " });
        question.push_str(&normalize(&schema[cond.col].name));
        question.push_str(match cond.op {
            CondOp::Eq => " is ",
            CondOp::Gt => " is greater than ",
            CondOp::Lt => " is less than ",
        });
        question.push_str(&cond.value.normalized());
    }
    question
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::test_fixtures::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn count_question_mentions_column_and_value() {
        let t = race_table();
        let q = count_engine_query();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let question = render_template_question(&q, &t, &mut rng);
        assert!(question.starts_with("how many engine") || question.contains("number of engine"),
            "{question}");
        assert!(question.contains("driver is val musetti"), "{question}");
    }

    #[test]
    fn minimal_template_for_bare_select() {
        let t = race_table();
        let q = crate::sql::Query { agg: AggOp::NullAgg, sel: 3, conds: vec![] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let question = render_template_question(&q, &t, &mut rng);
        assert!(question == "what is the engine" || question == "tell me the engine", "{question}");
    }

    #[test]
    fn every_condition_value_appears_verbatim() {
        use crate::sql::{Condition, SqlError};
        use rand::Rng;
        let t = race_table();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let sel = rng.gen_range(0..t.n_cols());
            let n_conds = rng.gen_range(0..3);
            let conds: Result<Vec<Condition>, SqlError> = (0..n_conds)
                .map(|_| {
                    let col = rng.gen_range(0..t.n_cols());
                    let row = rng.gen_range(0..t.n_rows());
                    Ok(Condition {
                        col,
                        op: crate::sql::CondOp::Eq,
                        value: t.rows()[row][col].clone(),
                    })
                })
                .collect();
            let q = Query { agg: AggOp::NullAgg, sel, conds: conds.unwrap() };
            let question = render_template_question(&q, &t, &mut rng);
            for cond in &q.conds {
                assert!(
                    question.contains(&cond.value.normalized()),
                    "question '{}' lacks value '{}'",
                    question,
                    cond.value.normalized()
                );
            }
        }
    }
}
