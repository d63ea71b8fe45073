//! Dataset formats, binary artifacts and the `graphacl` command line on top
//! of `graphacl-core`.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod report;

pub use cli::run;
pub use dataset::{load_dataset, Dataset};
pub use error::{CliError, CliResult};
