//! File formats, run configuration, report rendering and the command-line
//! surface for `trendlag`.

pub mod cli;
pub mod config;
pub mod ingest;
pub mod reference;
pub mod report;
pub mod run;
pub mod selftest;

pub use config::RunConfig;
pub use ingest::{parse_incidents, parse_trends, TrendTable};
pub use report::{emit_grid, load_report};
