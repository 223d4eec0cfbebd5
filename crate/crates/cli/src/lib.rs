//! Command-line front end for private permutation tests.
//!
//! `two-sample` and `independence` run one test on CSV data and print a JSON
//! object. `experiment` runs a grid of level or power studies from a JSON
//! spec and writes a CSV table, optionally with an SVG chart.

pub mod error;
pub mod experiment;
pub mod input;
pub mod plot;
pub mod single;
pub mod spec;
pub mod table;

pub use error::{CliError, CliResult};
pub use experiment::{run_experiment, ExperimentOutput};
pub use spec::ExperimentSpec;
pub use table::{csv_string, wilson_interval, write_csv, ResultRow, Status};
