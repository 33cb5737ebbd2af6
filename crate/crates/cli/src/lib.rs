//! Commands behind the `dynamask` binary: `extract`, `eval` and `synth`.
//!
//! Each command is a plain function returning a [`CliError`] on failure so
//! it can be driven from tests without spawning a process. Exit codes:
//! 1 for configuration errors, 2 for I/O errors or unmatched evaluation
//! frames, 3 when some clips failed during extraction.

pub mod config;
pub mod eval;
pub mod extract;
pub mod manifest;
pub mod synth;

use thiserror::Error;

pub use config::{load_config, ConfigOverrides};
pub use eval::{cmd_eval, EvalArgs, TruthKind};
pub use extract::{cmd_extract, ExtractArgs, ExtractSummary};
pub use manifest::ExportManifest;
pub use synth::{cmd_synth, SynthArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Unmatched(String),
    #[error("{failed} of {total} clips failed")]
    ClipFailures { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) | CliError::Unmatched(_) => 2,
            CliError::ClipFailures { .. } => 3,
        }
    }
}

impl From<dynamask::Error> for CliError {
    fn from(e: dynamask::Error) -> Self {
        use dynamask::Error as E;
        match e {
            E::Config(_) | E::Spec(_) | E::Count { .. } => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

/// Runs `f` on a dedicated pool of `jobs` threads (`None` = one per core).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
