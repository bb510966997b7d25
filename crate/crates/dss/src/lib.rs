//! File formats, the experiment harness and the `dss` command line built on [`dss_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model_file;
pub mod svg;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use experiment::{run_experiment, ExperimentReport, ExperimentRun};
