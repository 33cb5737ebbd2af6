//! `synth`: render a scene description into the clip layout `extract`
//! reads, with ground truth under `<clip>/truth/`.

use std::fs;
use std::path::PathBuf;

use dynamask::synthgen::{generate, SceneSpec};

use crate::CliError;

#[derive(Clone, Debug, Default)]
pub struct SynthArgs {
    pub spec: PathBuf,
    pub output_root: PathBuf,
    /// Replaces the scene's noise seed.
    pub seed: Option<u64>,
}

/// Returns the written clip directory.
pub fn cmd_synth(args: &SynthArgs) -> Result<PathBuf, CliError> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.spec.display())))?;
    let mut spec = SceneSpec::from_toml(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let clip = generate(&spec)?;
    Ok(clip.write(&args.output_root)?)
}
