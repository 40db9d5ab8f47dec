//! Experiment runner for the vecadvect toolkit: JSON configs in, manifests, results, fields and plots out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod suite;
pub mod svg;
pub mod vaf;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};

use std::path::{Path, PathBuf};

pub const OUT_ENV: &str = "VECADVECT_OUT";
const DEFAULT_OUT: &str = "vecadvect-out";

/// `--out`, then the config's `output_dir`, then `VECADVECT_OUT`, then `./vecadvect-out`.
pub fn resolve_out(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.or(config)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}
