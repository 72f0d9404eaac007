//! Command-line pipeline around `apc-core`: synthetic data, challenge split,
//! training, proximity, submissions, evaluation and Borda ranking.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod submission;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};

/// Builds the global rayon pool for `threads` workers (`0` keeps the rayon
/// default) and returns the matching execution mode.
pub fn init_threads(threads: usize) -> CliResult<apc_core::Execution> {
    let exec = apc_core::Execution::from_threads(threads);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(exec)
}
