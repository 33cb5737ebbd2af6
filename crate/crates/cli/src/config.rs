//! Pipeline configuration: built-in defaults, overridden by a TOML file,
//! overridden by command-line flags.

use std::fs;
use std::path::Path;

use dynamask::PipelineConfig;

use crate::CliError;

/// Values given on the command line; `None` leaves the lower layer alone.
#[derive(Clone, Debug, Default)]
pub struct ConfigOverrides {
    pub tau_c: Option<f64>,
    pub superpixel_size: Option<usize>,
    pub min_component_fraction: Option<f64>,
    pub dump_intermediates: bool,
    pub seed: Option<u64>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(t) = self.tau_c {
            cfg.vote.tau_c = t;
        }
        if let Some(s) = self.superpixel_size {
            cfg.superpixel.target_region_size = s;
        }
        if let Some(f) = self.min_component_fraction {
            cfg.morph.min_component_fraction = f;
        }
        if self.dump_intermediates {
            cfg.dump_intermediates = true;
        }
        if self.seed.is_some() {
            cfg.tfs_seed = self.seed;
        }
    }
}

pub fn load_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<PipelineConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            PipelineConfig::from_toml(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "tfs_count = 4\n[vote]\ntau_c = 0.5\n[morph]\nkernel_size = 7\n").unwrap();

        let cfg = load_config(Some(&path), &ConfigOverrides::default()).unwrap();
        assert_eq!(cfg.vote.tau_c, 0.5);
        assert_eq!(cfg.tfs_count, 4);
        assert_eq!(cfg.morph.kernel_size, 7);
        assert_eq!(cfg.superpixel.target_region_size, 32);

        let flags = ConfigOverrides {
            tau_c: Some(0.8),
            superpixel_size: Some(24),
            seed: Some(3),
            ..Default::default()
        };
        let cfg = load_config(Some(&path), &flags).unwrap();
        assert_eq!(cfg.vote.tau_c, 0.8);
        assert_eq!(cfg.superpixel.target_region_size, 24);
        assert_eq!(cfg.tfs_seed, Some(3));
        assert_eq!(cfg.morph.kernel_size, 7);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let flags = ConfigOverrides {
            tau_c: Some(2.0),
            ..Default::default()
        };
        let err = load_config(None, &flags).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("tau_c"));
    }
}
