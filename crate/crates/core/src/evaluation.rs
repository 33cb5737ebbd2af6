//! Pixel-level F1 scoring of predicted dynamic masks.
//!
//! Ground-truth semantic labels are fused into one binary dynamic class,
//! each frame is scored with dynamic as the positive class, and per-frame
//! F1 values are averaged per group (macro). Pooled-count (micro) F1 is
//! reported alongside.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_dims, BinaryMask, LabelImage};

/// Cityscapes ids fused into the dynamic class by default: dynamic (5),
/// person, rider, car, truck, bus, caravan, trailer, train, motorcycle and
/// bicycle (24-33).
pub const CITYSCAPES_DYNAMIC_IDS: [u32; 11] = [5, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFusionSpec {
    pub dynamic_label_ids: BTreeSet<u32>,
}

impl Default for LabelFusionSpec {
    fn default() -> Self {
        LabelFusionSpec {
            dynamic_label_ids: CITYSCAPES_DYNAMIC_IDS.into_iter().collect(),
        }
    }
}

impl LabelFusionSpec {
    pub fn new(ids: impl IntoIterator<Item = u32>) -> Result<LabelFusionSpec> {
        let dynamic_label_ids: BTreeSet<u32> = ids.into_iter().collect();
        if dynamic_label_ids.is_empty() {
            return Err(Error::Config("label fusion needs at least one id".into()));
        }
        Ok(LabelFusionSpec { dynamic_label_ids })
    }
}

pub fn fuse_ground_truth(labels: &LabelImage, spec: &LabelFusionSpec) -> BinaryMask {
    let bits = labels
        .ids
        .iter()
        .map(|id| spec.dynamic_label_ids.contains(id))
        .collect();
    BinaryMask::from_bits(labels.width, labels.height, bits).expect("label buffer matches dimensions")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Frame key, e.g. `group/frame_stem`.
    pub frame: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    /// `None` when prediction and truth are both entirely static.
    pub f1: Option<f64>,
}

impl EvalRecord {
    pub fn from_counts(frame: impl Into<String>, tp: u64, fp: u64, fn_: u64, tn: u64) -> EvalRecord {
        let denom = 2 * tp + fp + fn_;
        EvalRecord {
            frame: frame.into(),
            tp,
            fp,
            fn_,
            tn,
            f1: (denom > 0).then(|| 2.0 * tp as f64 / denom as f64),
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Confusion counts and F1 with dynamic as the positive class.
pub fn score_frame(pred: &BinaryMask, truth: &BinaryMask) -> Result<EvalRecord> {
    ensure_dims(truth.dims(), pred.dims())?;
    let mut c = [0u64; 4];
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        // index: pred*2 + truth -> [tn, fn, fp, tp]
        c[usize::from(p) * 2 + usize::from(t)] += 1;
    }
    Ok(EvalRecord::from_counts(String::new(), c[3], c[2], c[1], c[0]))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    /// Mean of defined per-frame F1 values; `None` if there are none.
    pub mean_f1: Option<f64>,
    /// Frames with a defined F1.
    pub frames: usize,
    /// Frames where both masks were all-static.
    pub undefined: usize,
    /// F1 from counts pooled over the group.
    pub micro_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub groups: BTreeMap<String, GroupStats>,
    pub overall: GroupStats,
}

fn stats<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> GroupStats {
    let mut sum = 0.0;
    let mut frames = 0;
    let mut undefined = 0;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for r in records {
        tp += r.tp;
        fp += r.fp;
        fn_ += r.fn_;
        match r.f1 {
            Some(f) => {
                sum += f;
                frames += 1;
            }
            None => undefined += 1,
        }
    }
    GroupStats {
        mean_f1: (frames > 0).then(|| sum / frames as f64),
        frames,
        undefined,
        micro_f1: EvalRecord::from_counts("", tp, fp, fn_, 0).f1,
    }
}

/// Per-group and overall means of defined per-frame F1 values.
pub fn aggregate(records: Vec<EvalRecord>, grouping: impl Fn(&EvalRecord) -> String) -> EvalReport {
    let mut members: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
    for r in &records {
        members.entry(grouping(r)).or_default().push(r);
    }
    let groups = members
        .into_iter()
        .map(|(g, rs)| (g, stats(rs)))
        .collect();
    let overall = stats(&records);
    EvalReport {
        records,
        groups,
        overall,
    }
}

impl EvalReport {
    /// Fixed-width text table of group means.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"));
        let width = self
            .groups
            .keys()
            .map(String::len)
            .chain(["overall".len(), "group".len()])
            .max()
            .unwrap_or(7);
        let mut out = format!(
            "{:<width$}  {:>7}  {:>9}  {:>8}  {:>8}\n",
            "group", "frames", "undefined", "mean_f1", "micro_f1"
        );
        let rows = self
            .groups
            .iter()
            .map(|(g, s)| (g.as_str(), s))
            .chain(std::iter::once(("overall", &self.overall)));
        for (name, s) in rows {
            out.push_str(&format!(
                "{:<width$}  {:>7}  {:>9}  {:>8}  {:>8}\n",
                name,
                s.frames,
                s.undefined,
                fmt(s.mean_f1),
                fmt(s.micro_f1)
            ));
        }
        out
    }
}
