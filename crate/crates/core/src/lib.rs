//! Random loop-nest programs, legality-checked schedule transformations, an
//! analytical cost model, schedule search, and statistics over the resulting
//! datasets.

pub mod cli;
pub mod cost;
pub mod dataset;
pub mod dependence;
pub mod ir;
pub mod matrix;
pub mod search;
pub mod stats;
pub mod transforms;
