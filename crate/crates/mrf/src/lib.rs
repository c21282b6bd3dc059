//! File formats, configuration and the command-line front end for
//! [`mrf_core`].

pub mod cli;
pub mod config;
pub mod dict_io;
pub mod error;
pub mod provenance;
pub mod schedule_io;

pub use cli::{run, Cli};
pub use config::RunConfig;
pub use error::CliError;
