//! Command-line pipeline around `surfmap-core`: configuration files, the
//! shipped sink and rule tables, artifact output, and IR extraction.
//!
//! ```no_run
//! use surfmap::config::RunConfig;
//! use surfmap::pipeline::{run_pipeline, RunOptions};
//!
//! let cfg = RunConfig::load("data/wasmtime.toml".as_ref()).unwrap();
//! let report = run_pipeline(&cfg, &RunOptions::default()).unwrap();
//! println!("{}", report.summary_row());
//! ```

pub mod config;
pub mod extract;
pub mod inputs;
pub mod pipeline;
pub mod render;

pub use pipeline::{run_pipeline, PipelineError, RunOptions};
