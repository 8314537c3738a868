//! Natural-language-to-SQL laboratory: typed tables, a SQL-subset execution
//! engine, synthetic dataset generation, a small reverse-mode autodiff
//! substrate, pointer-network models, executor-rewarded policy-gradient
//! training, and execution/logical-form metrics.

pub mod autodiff;
pub mod datagen;
pub mod eval;
pub mod models;
pub mod nn;
pub mod sql;
pub mod table;
pub mod text;
pub mod train;
