//! End-to-end mask extraction for the sampled query frames of a clip.
//!
//! For a query frame every other frame of the clip is differenced against
//! it, thresholded and voted on; the voted mask is promoted to superpixels,
//! hole-filled and finally closed per connected component.

use std::fs;
use std::path::{Path, PathBuf};

use log::debug;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffvote::{abs_diff, threshold_adf, vote_threshold, AbsDiffFrame, VoteConfig, VoteMap};
use crate::error::{Error, Result};
use crate::morphology::{refine, FrameRef, InstanceSet, MorphConfig};
use crate::raster::{load_frame, BinaryMask, Frame};
use crate::superpixel::{fill_holes, promote_regions, segment, SuperpixelConfig, SuperpixelLabeling};

/// Query frames sampled per clip by default.
pub const DEFAULT_TFS_COUNT: usize = 5;
/// Smallest usable clip: the default query count plus one frame to
/// difference against.
pub const MIN_CLIP_FRAMES: usize = DEFAULT_TFS_COUNT + 1;

const FRAME_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// All frames of one static-camera clip plus the indices (into `ofs`) of the
/// query frames masks are extracted for.
#[derive(Clone, Debug)]
pub struct ClipFrameSet {
    pub clip_id: String,
    pub ofs: Vec<Frame>,
    pub tfs_indices: Vec<usize>,
}

impl ClipFrameSet {
    /// Validates the frames and samples the default number of query frames
    /// with even spacing.
    pub fn new(clip_id: impl Into<String>, ofs: Vec<Frame>) -> Result<ClipFrameSet> {
        let clip_id = clip_id.into();
        if ofs.len() < MIN_CLIP_FRAMES {
            return Err(Error::Count {
                requested: DEFAULT_TFS_COUNT,
                available: ofs.len(),
            });
        }
        let dims = ofs[0].dims();
        for f in &ofs {
            if f.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: f.dims(),
                });
            }
            if f.clip_id() != clip_id {
                return Err(Error::ClipMismatch(clip_id, f.clip_id().to_string()));
            }
        }
        let tfs_indices = even_indices(ofs.len(), DEFAULT_TFS_COUNT);
        Ok(ClipFrameSet {
            clip_id,
            ofs,
            tfs_indices,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.ofs[0].dims()
    }
}

fn even_indices(n: usize, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..count).map(|k| (k * n / count).min(n - 1)).collect();
    idx.dedup();
    idx
}

fn check_count(n: usize, count: usize) -> Result<()> {
    if count == 0 || count + 1 > n {
        return Err(Error::Count {
            requested: count,
            available: n,
        });
    }
    Ok(())
}

/// Even spacing: `floor(k * |ofs| / count)` for `k = 0..count`.
pub fn sample_tfs(mut clip: ClipFrameSet, count: usize) -> Result<ClipFrameSet> {
    check_count(clip.ofs.len(), count)?;
    clip.tfs_indices = even_indices(clip.ofs.len(), count);
    Ok(clip)
}

/// Seeded uniform sampling without replacement, sorted.
pub fn sample_tfs_seeded(mut clip: ClipFrameSet, count: usize, seed: u64) -> Result<ClipFrameSet> {
    check_count(clip.ofs.len(), count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, clip.ofs.len(), count).into_vec();
    idx.sort_unstable();
    clip.tfs_indices = idx;
    Ok(clip)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tfs_count: usize,
    /// `None` samples query frames with even spacing.
    pub tfs_seed: Option<u64>,
    pub dump_intermediates: bool,
    pub vote: VoteConfig,
    pub superpixel: SuperpixelConfig,
    pub morph: MorphConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tfs_count: DEFAULT_TFS_COUNT,
            tfs_seed: None,
            dump_intermediates: false,
            vote: VoteConfig::default(),
            superpixel: SuperpixelConfig::default(),
            morph: MorphConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tfs_count < 1 {
            return Err(Error::Config("tfs_count must be at least 1".into()));
        }
        self.vote.validate()?;
        self.superpixel.validate()?;
        self.morph.validate()
    }

    /// Parses a TOML document; unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(text, e.span())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Resamples the clip's query frames according to this configuration.
    pub fn sample(&self, clip: ClipFrameSet) -> Result<ClipFrameSet> {
        match self.tfs_seed {
            None => sample_tfs(clip, self.tfs_count),
            Some(seed) => sample_tfs_seeded(clip, self.tfs_count, seed),
        }
    }
}

pub(crate) fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(s) if s.start <= text.len() => {
            let line = text[..s.start].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        _ => String::new(),
    }
}

/// `(other frame index, ADF, BDF)` for one difference.
pub type DiffStage = (u32, AbsDiffFrame, BinaryMask);

/// Stage outputs kept when `dump_intermediates` is set.
#[derive(Clone, Debug)]
pub struct StageDump {
    /// `(frame_index of the other frame, ADF, BDF)`.
    pub differences: Vec<DiffStage>,
    pub votes: VoteMap,
    pub voted: BinaryMask,
    pub labeling: SuperpixelLabeling,
    pub promoted: BinaryMask,
    pub filled: BinaryMask,
}

#[derive(Clone, Debug)]
pub struct QueryExtraction {
    pub frame_index: u32,
    /// Union of all instance masks.
    pub mask: BinaryMask,
    pub instances: InstanceSet,
    pub stages: Option<StageDump>,
}

/// Runs the full extraction for `clip.ofs[query_index]`.
///
/// A frame without dynamic content yields an empty instance set, not an
/// error.
pub fn extract_query_mask(clip: &ClipFrameSet, query_index: usize, cfg: &PipelineConfig) -> Result<QueryExtraction> {
    cfg.validate()?;
    if !clip.tfs_indices.contains(&query_index) {
        return Err(Error::Config(format!(
            "query index {query_index} is not a sampled training frame"
        )));
    }
    let query = &clip.ofs[query_index];
    let (w, h) = query.dims();
    let dump = cfg.dump_intermediates;

    let others: Vec<&Frame> = clip
        .ofs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != query_index)
        .map(|(_, f)| f)
        .collect();

    let (votes, differences) = others
        .par_iter()
        .map(|other| -> Result<(VoteMap, Vec<DiffStage>)> {
            let adf = abs_diff(query, other)?;
            let bdf = threshold_adf(&adf);
            let mut votes = VoteMap::empty(w, h);
            votes.add(&bdf)?;
            let kept = if dump {
                vec![(other.frame_index(), adf, bdf)]
            } else {
                Vec::new()
            };
            Ok((votes, kept))
        })
        .try_reduce(
            || (VoteMap::empty(w, h), Vec::new()),
            |(va, mut da), (vb, db)| {
                da.extend(db);
                Ok((va.merge(vb)?, da))
            },
        )?;
    if votes.cardinality == 0 {
        return Err(Error::EmptySet);
    }

    let voted = vote_threshold(&votes, &cfg.vote);
    let labeling = segment(query, &cfg.superpixel)?;
    let promoted = promote_regions(&labeling, &voted, &cfg.superpixel)?;
    let filled = fill_holes(&promoted);
    let instances = refine(&filled, &cfg.morph).with_frame(FrameRef {
        clip_id: clip.clip_id.clone(),
        frame_index: query.frame_index(),
    });
    let mask = instances.union_mask();
    debug!(
        "{}/{}: {} voted px, {} regions, {} promoted px, {} instances",
        clip.clip_id,
        query.frame_index(),
        voted.count_dynamic(),
        labeling.region_count,
        filled.count_dynamic(),
        instances.len()
    );

    let stages = dump.then(|| {
        let mut differences = differences;
        differences.sort_by_key(|d| d.0);
        StageDump {
            differences,
            votes,
            voted,
            labeling,
            promoted,
            filled,
        }
    });
    Ok(QueryExtraction {
        frame_index: query.frame_index(),
        mask,
        instances,
        stages,
    })
}

/// Extracts every sampled query frame; results are ordered by frame index.
pub fn extract_clip(clip: &ClipFrameSet, cfg: &PipelineConfig) -> Result<Vec<QueryExtraction>> {
    let mut out = clip
        .tfs_indices
        .par_iter()
        .map(|&q| extract_query_mask(clip, q, cfg))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|r| r.frame_index);
    Ok(out)
}

/// Image files directly inside `dir`, ordered by parsed frame index.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_frame = path.is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_frame {
            let idx = crate::raster::parse_frame_index(&path)?;
            files.push((idx, path));
        }
    }
    files.sort();
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

/// Loads one clip directory; the clip id is the directory name.
pub fn load_clip(dir: &Path) -> Result<ClipFrameSet> {
    let clip_id = dir
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let files = list_frame_files(dir)?;
    let frames = files
        .par_iter()
        .map(|p| load_frame(p).map(|f| f.with_clip_id(clip_id.clone())))
        .collect::<Result<Vec<_>>>()?;
    ClipFrameSet::new(clip_id, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still_clip(n: usize) -> ClipFrameSet {
        let frames = (0..n)
            .map(|i| Frame::from_gray("c", i as u32, 32, 32, vec![90; 1024]).unwrap())
            .collect();
        ClipFrameSet::new("c", frames).unwrap()
    }

    #[test]
    fn even_sampling() {
        assert_eq!(sample_tfs(still_clip(50), 5).unwrap().tfs_indices, vec![0, 10, 20, 30, 40]);
        assert_eq!(sample_tfs(still_clip(6), 5).unwrap().tfs_indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(sample_tfs(still_clip(12), 1).unwrap().tfs_indices, vec![0]);
        assert_eq!(still_clip(12).tfs_indices, vec![0, 2, 4, 7, 9]);
    }

    #[test]
    fn sampling_count_errors() {
        assert!(matches!(sample_tfs(still_clip(6), 6), Err(Error::Count { .. })));
        assert!(matches!(sample_tfs(still_clip(6), 0), Err(Error::Count { .. })));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let a = sample_tfs_seeded(still_clip(30), 5, 7).unwrap().tfs_indices;
        let b = sample_tfs_seeded(still_clip(30), 5, 7).unwrap().tfs_indices;
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a.iter().all(|&i| i < 30));
    }

    #[test]
    fn clip_validation() {
        let short: Vec<Frame> = still_clip(6).ofs.into_iter().take(5).collect();
        assert!(matches!(ClipFrameSet::new("c", short), Err(Error::Count { .. })));
        let mut frames = still_clip(6).ofs;
        frames[2] = Frame::from_gray("c", 2, 32, 16, vec![0; 512]).unwrap();
        assert!(matches!(ClipFrameSet::new("c", frames), Err(Error::DimensionMismatch { .. })));
        let mut frames = still_clip(6).ofs;
        frames[1] = frames[1].clone().with_clip_id("other");
        assert!(matches!(ClipFrameSet::new("c", frames), Err(Error::ClipMismatch(..))));
    }

    #[test]
    fn still_clip_is_empty() {
        let clip = still_clip(8);
        let out = extract_clip(&clip, &PipelineConfig::default()).unwrap();
        assert_eq!(out.len(), 5);
        for r in out {
            assert!(r.instances.is_empty());
            assert!(r.mask.is_empty());
        }
    }

    #[test]
    fn query_must_be_sampled() {
        let clip = still_clip(12);
        assert!(extract_query_mask(&clip, 1, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn config_toml() {
        let cfg = PipelineConfig::from_toml("tfs_count = 3\n[vote]\ntau_c = 0.5\n").unwrap();
        assert_eq!(cfg.tfs_count, 3);
        assert_eq!(cfg.vote.tau_c, 0.5);
        assert_eq!(cfg.morph, MorphConfig::default());
        let err = PipelineConfig::from_toml("[vote]\ntau = 0.5\n").unwrap_err().to_string();
        assert!(err.contains("tau"), "{err}");
        let err = PipelineConfig::from_toml("[vote]\ntau_c = 1.5\n").unwrap_err().to_string();
        assert!(err.contains("tau_c"), "{err}");
        let round = PipelineConfig::from_toml(&PipelineConfig::default().to_toml()).unwrap();
        assert_eq!(round, PipelineConfig::default());
    }
}
