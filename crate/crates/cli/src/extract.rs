//! `extract`: run the pipeline over every clip directory under an input
//! root and write masks, instance masks, optional stage dumps and the
//! manifest.
//!
//! Output layout, per clip:
//!
//! ```text
//! <out>/<clip>/masks/<frame>.png
//! <out>/<clip>/instances/<clip>_<frame_index>_<instance>.png
//! <out>/<clip>/intermediates/<frame>/{adf,bdf}_<other>.png, votes.png, ...
//! <out>/manifest.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use dynamask::pipeline::{extract_clip, load_clip, ClipFrameSet, QueryExtraction, StageDump};
use dynamask::raster::{save_gray16, save_gray8, save_mask};
use dynamask::synthgen::frame_file_name;
use dynamask::PipelineConfig;
use log::{error, info};
use rayon::prelude::*;

use crate::config::{load_config, ConfigOverrides};
use crate::manifest::{Annotation, ExportManifest, ImageEntry, DYNAMIC_CATEGORY_ID, MANIFEST_FILE};
use crate::CliError;

pub const MASKS_DIR: &str = "masks";
pub const INSTANCES_DIR: &str = "instances";
pub const INTERMEDIATES_DIR: &str = "intermediates";

#[derive(Clone, Debug, Default)]
pub struct ExtractArgs {
    pub input_root: PathBuf,
    pub output_root: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: ConfigOverrides,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExtractSummary {
    pub clips: usize,
    pub failed_clips: usize,
    pub frames: usize,
    pub instances: usize,
}

struct ClipOutput {
    clip: ClipFrameSet,
    results: Vec<QueryExtraction>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn clip_dirs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(root).map_err(|e| io_err(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(root, e))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn process_clip(dir: &Path, cfg: &PipelineConfig) -> dynamask::Result<ClipOutput> {
    let clip = cfg.sample(load_clip(dir)?)?;
    let results = extract_clip(&clip, cfg)?;
    Ok(ClipOutput { clip, results })
}

fn frame_stem(clip: &ClipFrameSet, frame_index: u32) -> String {
    clip.ofs
        .iter()
        .find(|f| f.frame_index() == frame_index)
        .and_then(|f| f.source())
        .and_then(|p| p.file_stem())
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .unwrap_or_else(|| {
            frame_file_name(frame_index)
                .trim_end_matches(".png")
                .to_string()
        })
}

fn dump_stages(dir: &Path, stages: &StageDump) -> dynamask::Result<()> {
    for (other, adf, bdf) in &stages.differences {
        save_gray8(adf.width, adf.height, &adf.values, dir.join(format!("adf_{other:06}.png")))?;
        save_mask(bdf, dir.join(format!("bdf_{other:06}.png")))?;
    }
    let v = &stages.votes;
    save_gray16(v.width, v.height, v.counts.iter().copied(), dir.join("votes.png"))?;
    save_mask(&stages.voted, dir.join("voted.png"))?;
    let l = &stages.labeling;
    save_gray16(l.width, l.height, l.labels.iter().copied(), dir.join("superpixels.png"))?;
    save_mask(&stages.promoted, dir.join("promoted.png"))?;
    save_mask(&stages.filled, dir.join("filled.png"))
}

fn write_clip(out_root: &Path, output: &ClipOutput, manifest: &mut ExportManifest) -> Result<usize, CliError> {
    let clip = &output.clip;
    let clip_root = out_root.join(&clip.clip_id);
    let (w, h) = clip.dims();
    let mut instances = 0;
    for r in &output.results {
        let stem = frame_stem(clip, r.frame_index);
        let mask_rel = format!("{}/{MASKS_DIR}/{stem}.png", clip.clip_id);
        save_mask(&r.mask, out_root.join(&mask_rel))?;

        let image_id = manifest.images.len() as u64;
        let source = clip
            .ofs
            .iter()
            .find(|f| f.frame_index() == r.frame_index)
            .and_then(|f| f.source())
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        manifest.images.push(ImageEntry {
            id: image_id,
            file_name: source,
            clip_id: clip.clip_id.clone(),
            frame_index: r.frame_index,
            width: w,
            height: h,
            mask_file: mask_rel,
        });

        for inst in &r.instances.instances {
            let rel = format!(
                "{clip}/{INSTANCES_DIR}/{clip}_{frame:06}_{id:03}.png",
                clip = clip.clip_id,
                frame = r.frame_index,
                id = inst.id
            );
            save_mask(&inst.mask, out_root.join(&rel))?;
            manifest.annotations.push(Annotation {
                id: manifest.annotations.len() as u64,
                image_id,
                instance_id: inst.id,
                category_id: DYNAMIC_CATEGORY_ID,
                mask_file: rel,
                bbox: [inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h],
                area: inst.area,
            });
            instances += 1;
        }

        if let Some(stages) = &r.stages {
            dump_stages(&clip_root.join(INTERMEDIATES_DIR).join(&stem), stages)?;
        }
    }
    Ok(instances)
}

/// Extracts every clip under `input_root`. Clips that fail to load or
/// process are logged and skipped; if any did, the error is
/// [`CliError::ClipFailures`] after all outputs are written.
pub fn cmd_extract(args: &ExtractArgs) -> Result<ExtractSummary, CliError> {
    let cfg = load_config(args.config.as_deref(), &args.overrides)?;
    if !args.input_root.is_dir() {
        return Err(io_err(&args.input_root, "input root is not a directory"));
    }
    let dirs = clip_dirs(&args.input_root)?;
    if dirs.is_empty() {
        return Err(io_err(&args.input_root, "no clip directories found"));
    }
    fs::create_dir_all(&args.output_root).map_err(|e| io_err(&args.output_root, e))?;

    let outputs: Vec<(PathBuf, dynamask::Result<ClipOutput>)> = dirs
        .par_iter()
        .map(|d| (d.clone(), process_clip(d, &cfg)))
        .collect();

    let mut manifest = ExportManifest::default();
    let mut summary = ExtractSummary {
        clips: dirs.len(),
        ..Default::default()
    };
    for (dir, out) in outputs {
        match out {
            Ok(out) => {
                let n = write_clip(&args.output_root, &out, &mut manifest)?;
                info!(
                    "clip {}: {} frames, {} instances",
                    out.clip.clip_id,
                    out.results.len(),
                    n
                );
                summary.frames += out.results.len();
                summary.instances += n;
            }
            Err(e) => {
                error!("clip {} skipped: {e}", dir.display());
                summary.failed_clips += 1;
            }
        }
    }
    manifest.write(&args.output_root.join(MANIFEST_FILE))?;

    if summary.failed_clips > 0 {
        return Err(CliError::ClipFailures {
            failed: summary.failed_clips,
            total: summary.clips,
        });
    }
    Ok(summary)
}
