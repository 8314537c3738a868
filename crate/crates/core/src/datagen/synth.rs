//! Seeded synthetic table generator: random schemas with mixed text/numeric
//! columns, sized to survive the table filter.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::table::{Column, ColumnType, Table, Value};

const NAME_WORDS: [&str; 24] = [
    "team", "driver", "engine", "city", "coach", "venue", "player", "season", "round", "race",
    "score", "year", "wins", "points", "rank", "laps", "speed", "goals", "draws", "losses",
    "budget", "capacity", "attendance", "frequency",
];

const NAME_PREFIXES: [&str; 6] = ["home", "away", "final", "first", "total", "best"];

const TEXT_WORDS: [&str; 28] = [
    "alpha", "bravo", "delta", "echo", "foxtrot", "sierra", "tango", "victor", "zulu", "oslo",
    "york", "rome", "lima", "kyoto", "miami", "perth", "cairo", "quebec", "lagos", "zurich",
    "vienna", "osaka", "dover", "leeds", "turin", "bergen", "malmo", "porto",
];

/// Generate `count` validated tables from a seed. Most survive
/// [`super::filter_tables`]; sizes are sampled above its thresholds.
pub fn synth_tables(count: usize, seed: u64) -> Vec<Table> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
        out.push(synth_table(&format!("synth-{}-{:04}", seed, i), &mut rng));
    }
    out
}

fn synth_table(id: &str, rng: &mut ChaCha8Rng) -> Table {
    let n_cols = rng.gen_range(5..=7);
    let n_rows = rng.gen_range(6..=12);

    let mut names: Vec<String> = Vec::new();
    while names.len() < n_cols {
        let base = NAME_WORDS[rng.gen_range(0..NAME_WORDS.len())];
        let name = if rng.gen_bool(0.3) {
            format!("{} {}", NAME_PREFIXES[rng.gen_range(0..NAME_PREFIXES.len())], base)
        } else {
            base.to_string()
        };
        if !names.contains(&name) {
            names.push(name);
        }
    }

    // at least one text and one numeric column so every query shape is
    // sampleable
    let mut kinds: Vec<ColumnType> = (0..n_cols)
        .map(|_| if rng.gen_bool(0.5) { ColumnType::Text } else { ColumnType::Real })
        .collect();
    kinds[0] = ColumnType::Text;
    kinds[1] = ColumnType::Real;

    let header: Vec<Column> = names
        .iter()
        .zip(&kinds)
        .map(|(name, &ctype)| Column { name: name.clone(), ctype })
        .collect();

    // per-column value pools: small enough that equality conditions match
    // several rows, offset per column so rows rarely repeat one value
    let mut pools: Vec<Vec<Value>> = Vec::with_capacity(n_cols);
    for (j, kind) in kinds.iter().enumerate() {
        let pool_size = rng.gen_range(3..=5);
        let pool = match kind {
            ColumnType::Text => {
                let mut words: Vec<Value> = Vec::new();
                while words.len() < pool_size {
                    let w = TEXT_WORDS[rng.gen_range(0..TEXT_WORDS.len())];
                    let phrase = if rng.gen_bool(0.25) {
                        format!("{} {}", w, TEXT_WORDS[rng.gen_range(0..TEXT_WORDS.len())])
                    } else {
                        w.to_string()
                    };
                    let v = Value::Text(phrase);
                    if !words.contains(&v) {
                        words.push(v);
                    }
                }
                words
            }
            ColumnType::Real => {
                let decimals = rng.gen_range(0..=1);
                let base = (j as f64) * 25.0;
                let mut nums: Vec<Value> = Vec::new();
                while nums.len() < pool_size {
                    let raw = base + rng.gen_range(0.0..20.0);
                    let scale = 10f64.powi(decimals);
                    let v = Value::Number((raw * scale).round() / scale);
                    if !nums.contains(&v) {
                        nums.push(v);
                    }
                }
                nums
            }
        };
        pools.push(pool);
    }

    let rows: Vec<Vec<Value>> = (0..n_rows)
        .map(|_| {
            (0..n_cols)
                .map(|j| pools[j][rng.gen_range(0..pools[j].len())].clone())
                .collect()
        })
        .collect();

    Table::new(id.to_string(), header, rows).expect("synthetic table is valid by construction")
}
