//! `eval`: pair predicted masks with ground truth by path pattern, score
//! each pair and report per-group mean F1.
//!
//! Both trees are walked and every file's path relative to its root (with
//! `/` separators) is matched against a regex with named captures `group`
//! and `frame`. Files that do not match are ignored; matches are paired on
//! `(group, frame)`. A prediction without ground truth is an error unless
//! partial scoring is allowed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dynamask::evaluation::{aggregate, fuse_ground_truth, score_frame, EvalReport, LabelFusionSpec};
use dynamask::raster::{load_label_image, load_mask};
use dynamask::BinaryMask;
use log::{debug, warn};
use rayon::prelude::*;
use regex::Regex;
use walkdir::WalkDir;

use crate::CliError;

/// Masks written by `extract`.
pub const DEFAULT_PRED_PATTERN: &str = r"^(?P<group>[^/]+)/masks/(?P<frame>[^/]+)\.png$";
/// Ground truth written by `synth`.
pub const DEFAULT_TRUTH_PATTERN: &str = r"^(?P<group>[^/]+)/truth/(?P<frame>[^/]+)\.png$";
/// Cityscapes `gtFine/<split>` layout, for use with `--truth-pattern`.
pub const CITYSCAPES_TRUTH_PATTERN: &str = r"^(?P<group>[^/]+)/(?P<frame>[^/]+)_gtFine_labelIds\.png$";

#[derive(Clone, Debug)]
pub enum TruthKind {
    /// Label-id rasters fused into one dynamic class.
    Labels(LabelFusionSpec),
    /// Binary masks, nonzero = dynamic.
    Binary,
}

#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub pred_root: PathBuf,
    pub truth_root: PathBuf,
    pub truth: TruthKind,
    pub pred_pattern: String,
    pub truth_pattern: String,
    /// Defaults to `<pred_root>/eval_report.json`.
    pub report: Option<PathBuf>,
    pub allow_partial: bool,
}

impl EvalArgs {
    pub fn new(pred_root: impl Into<PathBuf>, truth_root: impl Into<PathBuf>) -> EvalArgs {
        EvalArgs {
            pred_root: pred_root.into(),
            truth_root: truth_root.into(),
            truth: TruthKind::Labels(LabelFusionSpec::default()),
            pred_pattern: DEFAULT_PRED_PATTERN.into(),
            truth_pattern: DEFAULT_TRUTH_PATTERN.into(),
            report: None,
            allow_partial: false,
        }
    }
}

type Key = (String, String);

fn compile(pattern: &str, what: &str) -> Result<Regex, CliError> {
    let re = Regex::new(pattern).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
    for name in ["group", "frame"] {
        if !re.capture_names().flatten().any(|n| n == name) {
            return Err(CliError::Config(format!("{what} lacks a `{name}` capture group")));
        }
    }
    Ok(re)
}

fn index_tree(root: &Path, re: &Regex) -> Result<BTreeMap<Key, PathBuf>, CliError> {
    if !root.is_dir() {
        return Err(CliError::Io(format!("{} is not a directory", root.display())));
    }
    let mut out = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Io(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walk stays under root");
        let rel: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
        let rel = rel.join("/");
        if let Some(c) = re.captures(&rel) {
            out.insert((c["group"].to_string(), c["frame"].to_string()), entry.into_path());
        }
    }
    Ok(out)
}

fn load_truth(path: &Path, kind: &TruthKind) -> dynamask::Result<BinaryMask> {
    match kind {
        TruthKind::Binary => load_mask(path),
        TruthKind::Labels(spec) => Ok(fuse_ground_truth(&load_label_image(path)?, spec)),
    }
}

/// Scores every matched pair, prints the table and writes the JSON report.
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let pred_re = compile(&args.pred_pattern, "prediction pattern")?;
    let truth_re = compile(&args.truth_pattern, "truth pattern")?;
    let preds = index_tree(&args.pred_root, &pred_re)?;
    let truths = index_tree(&args.truth_root, &truth_re)?;

    // Only predictions need a partner: extraction scores a subset of each
    // clip, so spare ground-truth frames are expected.
    let unmatched: Vec<&Key> = preds.keys().filter(|k| !truths.contains_key(*k)).collect();
    debug!(
        "{} ground-truth frames have no prediction",
        truths.keys().filter(|k| !preds.contains_key(*k)).count()
    );
    let pairs: Vec<(&Key, &PathBuf, &PathBuf)> = preds
        .iter()
        .filter_map(|(k, p)| truths.get(k).map(|t| (k, p, t)))
        .collect();
    if pairs.is_empty() {
        return Err(CliError::Unmatched(format!(
            "no prediction matches any ground-truth frame ({} predictions, {} truths)",
            preds.len(),
            truths.len()
        )));
    }
    if !unmatched.is_empty() {
        if !args.allow_partial {
            return Err(CliError::Unmatched(format!(
                "{} predictions have no ground truth, first: {}/{} (use --allow-partial to skip them)",
                unmatched.len(),
                unmatched[0].0,
                unmatched[0].1
            )));
        }
        warn!("skipping {} predictions without ground truth", unmatched.len());
    }

    let records = pairs
        .par_iter()
        .map(|((group, frame), pred, truth)| {
            let p = load_mask(pred)?;
            let t = load_truth(truth, &args.truth)?;
            let mut r = score_frame(&p, &t)?;
            r.frame = format!("{group}/{frame}");
            Ok(r)
        })
        .collect::<dynamask::Result<Vec<_>>>()?;

    let report = aggregate(records, |r| {
        r.frame.split_once('/').map_or("", |(g, _)| g).to_string()
    });
    print!("{}", report.table());

    let path = args
        .report
        .clone()
        .unwrap_or_else(|| args.pred_root.join("eval_report.json"));
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    fs::write(&path, json + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(report)
}
