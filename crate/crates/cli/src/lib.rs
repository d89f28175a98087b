//! Library side of the `wgsef` command: configuration, runs, evaluation,
//! self-tests, benchmarks and plots.

pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod plot;
pub mod run;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use run::{cmd_train, RunReport, Summary, TrainOptions};
