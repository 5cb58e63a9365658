//! Command-line front end for `parity-forge`: CSV dataset I/O, debiasing
//! jobs, evaluation sweeps and convergence-curve export.

pub mod commands;
pub mod error;
pub mod io;

pub use commands::{run, Cli};
pub use error::{exit_code, CliError, CliResult};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "PARITY_FORGE_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`] when it is set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Parse(format!(
                "{THREADS_ENV} must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Parse(format!("cannot size the worker pool: {e}")))
}
