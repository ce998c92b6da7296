//! Batch front end: each subcommand reads a [`RunConfig`], runs one
//! computation and writes JSON and CSV files into the output directory.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{
    cmd_cell, cmd_convergence, cmd_convergence_with, cmd_correct, cmd_expand, cmd_mc, cmd_oned, Command,
};
pub use config::{builtin_material, resolve_material, Overrides, RunConfig, VERSION};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] weakhom::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{failed} of {total} requested computations failed")]
    Partial { failed: usize, total: usize },
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Config(format!("cannot build a pool of {t} threads: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
