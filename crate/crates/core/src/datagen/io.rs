//! Dataset files: JSON-lines examples per split next to a tables file and a
//! stats document.
//!
//! Layout under a dataset directory:
//!   tables.jsonl            one table per line
//!   examples.train.jsonl    {"table_id", "question", "sql"} per line
//!   examples.dev.jsonl
//!   examples.test.jsonl
//!   stats.json

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{dataset_stats, Dataset, DatagenError, Example, Split};
use crate::sql::executes_nonempty;
use crate::table::{load_tables, save_tables};
use crate::text::tokenize;

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    table_id: String,
    question: String,
    sql: serde_json::Value,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatagenError + '_ {
    move |source| DatagenError::Io { path: path.display().to_string(), source }
}

fn examples_path(dir: &Path, split: Split) -> std::path::PathBuf {
    dir.join(format!("examples.{}.jsonl", split.suffix()))
}

/// Write tables, one examples file per split, and stats.json.
pub fn write_dataset(d: &Dataset, dir: &Path) -> Result<(), DatagenError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_tables(&d.tables, &dir.join("tables.jsonl"))?;
    for &split in &Split::ALL {
        let path = examples_path(dir, split);
        let mut file = File::create(&path).map_err(io_err(&path))?;
        for ex in d.split(split) {
            let rec = ExampleRecord {
                table_id: ex.table_id.clone(),
                question: ex.question_raw.clone(),
                sql: ex.gold.to_json(),
            };
            let line = serde_json::to_string(&rec).expect("example record serializes");
            writeln!(file, "{}", line).map_err(io_err(&path))?;
        }
    }
    write_stats(d, &dir.join("stats.json"))?;
    Ok(())
}

pub fn write_stats(d: &Dataset, path: &Path) -> Result<(), DatagenError> {
    let stats = dataset_stats(d);
    let body = serde_json::to_string_pretty(&stats).expect("stats serialize");
    std::fs::write(path, body + "\n").map_err(io_err(path))
}

fn read_examples(path: &Path) -> Result<Vec<Example>, DatagenError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord =
            serde_json::from_str(&line).map_err(|e| DatagenError::Record {
                path: path.display().to_string(),
                line: line_no,
                msg: e.to_string(),
            })?;
        let gold = crate::sql::Query::from_json(&rec.sql).map_err(|e| DatagenError::Record {
            path: path.display().to_string(),
            line: line_no,
            msg: e.to_string(),
        })?;
        out.push(Example {
            table_id: rec.table_id,
            question: tokenize(&rec.question),
            question_raw: rec.question,
            gold,
        });
    }
    Ok(out)
}

/// Read a dataset directory back, validating every gold query against its
/// table (existence, schema validity, non-empty execution).
pub fn read_dataset(dir: &Path, seed: u64) -> Result<Dataset, DatagenError> {
    let tables = load_tables(&dir.join("tables.jsonl"))?;
    let mut d = Dataset { tables, train: vec![], dev: vec![], test: vec![], seed };
    for &split in &Split::ALL {
        let path = examples_path(dir, split);
        let examples = read_examples(&path)?;
        match split {
            Split::Train => d.train = examples,
            Split::Dev => d.dev = examples,
            Split::Test => d.test = examples,
        }
    }
    let index = d.table_index();
    for (ex, _) in d.examples() {
        let t = index.get(ex.table_id.as_str()).ok_or_else(|| DatagenError::Record {
            path: dir.display().to_string(),
            line: 0,
            msg: format!("example references unknown table '{}'", ex.table_id),
        })?;
        ex.gold
            .validate_against(t.header())
            .map_err(|e| DatagenError::Record {
                path: dir.display().to_string(),
                line: 0,
                msg: format!("gold query invalid for table '{}': {}", ex.table_id, e),
            })?;
        if !executes_nonempty(&ex.gold, t) {
            return Err(DatagenError::Record {
                path: dir.display().to_string(),
                line: 0,
                msg: format!("gold query executes empty on table '{}'", ex.table_id),
            });
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::super::{build_dataset, synth_tables, BuildOptions};
    use super::*;

    #[test]
    fn dataset_round_trips_through_files() {
        let d = build_dataset(synth_tables(6, 4), &BuildOptions { seed: 4, ..Default::default() });
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        let back = read_dataset(dir.path(), d.seed).unwrap();
        assert_eq!(d.tables, back.tables);
        assert_eq!(d.train, back.train);
        assert_eq!(d.dev, back.dev);
        assert_eq!(d.test, back.test);
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let opts = BuildOptions { seed: 8, ..Default::default() };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_dataset(&build_dataset(synth_tables(5, 8), &opts), dir_a.path()).unwrap();
        write_dataset(&build_dataset(synth_tables(5, 8), &opts), dir_b.path()).unwrap();
        for name in ["tables.jsonl", "examples.train.jsonl", "examples.dev.jsonl", "examples.test.jsonl", "stats.json"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "file {} differs between identical runs", name);
        }
    }

    #[test]
    fn read_rejects_examples_for_missing_tables() {
        let d = build_dataset(synth_tables(5, 12), &BuildOptions { seed: 12, ..Default::default() });
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        // corrupt: point one example at a nonexistent table
        let path = dir.path().join("examples.train.jsonl");
        let body = std::fs::read_to_string(&path).unwrap();
        let corrupted = body.replacen(&d.train[0].table_id, "no-such-table", 1);
        std::fs::write(&path, corrupted).unwrap();
        assert!(read_dataset(dir.path(), 0).is_err());
    }
}
