use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynamask::LabelFusionSpec;
use dynamask_cli::eval::{DEFAULT_PRED_PATTERN, DEFAULT_TRUTH_PATTERN};
use dynamask_cli::{
    cmd_eval, cmd_extract, cmd_synth, with_jobs, CliError, ConfigOverrides, EvalArgs, ExtractArgs, SynthArgs,
    TruthKind,
};
use log::{error, info};

/// Extract dynamic-object masks from static-camera frame sets.
#[derive(Parser, Debug)]
#[command(name = "dynamask", version)]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract masks for every clip directory under INPUT.
    Extract(ExtractCmd),
    /// Score predicted masks against ground truth.
    Eval(EvalCmd),
    /// Render a synthetic clip with ground truth from a scene file.
    Synth(SynthCmd),
}

#[derive(Args, Debug)]
struct ExtractCmd {
    input: PathBuf,
    output: PathBuf,
    /// TOML pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write every intermediate stage.
    #[arg(long)]
    dump_intermediates: bool,
    #[arg(long)]
    tau_c: Option<f64>,
    /// Target superpixel side in pixels.
    #[arg(long)]
    superpixel_size: Option<usize>,
    /// Components at or below this fraction of the image area are dropped.
    #[arg(long)]
    min_component_fraction: Option<f64>,
    /// Draw query frames at random with this seed instead of evenly.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalCmd {
    /// Root holding predicted masks (an `extract` output root).
    predictions: PathBuf,
    /// Root holding ground truth.
    truth: PathBuf,
    /// Ground truth is binary masks rather than label ids.
    #[arg(long, conflicts_with = "dynamic_ids")]
    binary_truth: bool,
    /// Label ids fused into the dynamic class (default: Cityscapes movable classes).
    #[arg(long, value_delimiter = ',')]
    dynamic_ids: Option<Vec<u32>>,
    /// Regex over prediction paths with `group` and `frame` captures.
    #[arg(long, default_value = DEFAULT_PRED_PATTERN)]
    pred_pattern: String,
    /// Regex over truth paths with `group` and `frame` captures.
    #[arg(long, default_value = DEFAULT_TRUTH_PATTERN)]
    truth_pattern: String,
    /// JSON report path (default: PREDICTIONS/eval_report.json).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Score matched frames even if some are unmatched.
    #[arg(long)]
    allow_partial: bool,
}

#[derive(Args, Debug)]
struct SynthCmd {
    /// TOML scene description.
    spec: PathBuf,
    output: PathBuf,
    /// Override the scene's noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Extract(c) => {
            let args = ExtractArgs {
                input_root: c.input,
                output_root: c.output,
                config: c.config,
                overrides: ConfigOverrides {
                    tau_c: c.tau_c,
                    superpixel_size: c.superpixel_size,
                    min_component_fraction: c.min_component_fraction,
                    dump_intermediates: c.dump_intermediates,
                    seed: c.seed,
                },
            };
            let s = with_jobs(cli.jobs, || cmd_extract(&args))??;
            info!("{} clips, {} frames, {} instances", s.clips, s.frames, s.instances);
        }
        Command::Eval(c) => {
            let truth = if c.binary_truth {
                TruthKind::Binary
            } else {
                match c.dynamic_ids {
                    Some(ids) => TruthKind::Labels(LabelFusionSpec::new(ids)?),
                    None => TruthKind::Labels(LabelFusionSpec::default()),
                }
            };
            let args = EvalArgs {
                pred_root: c.predictions,
                truth_root: c.truth,
                truth,
                pred_pattern: c.pred_pattern,
                truth_pattern: c.truth_pattern,
                report: c.report,
                allow_partial: c.allow_partial,
            };
            with_jobs(cli.jobs, || cmd_eval(&args))??;
        }
        Command::Synth(c) => {
            let args = SynthArgs {
                spec: c.spec,
                output_root: c.output,
                seed: c.seed,
            };
            let dir = cmd_synth(&args)?;
            info!("wrote {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DYNAMASK_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
