//! Self-supervised extraction of dynamic-object instance masks from clips
//! recorded with a static camera.
//!
//! For each sampled query frame of a clip the pipeline runs five stages:
//!
//! 1. absolute differences against every other frame of the clip
//!    ([`diffvote::abs_diff`]),
//! 2. per-difference thresholding at `mean + std` ([`diffvote::threshold_adf`]),
//! 3. pixel voting across all differences ([`diffvote::vote_threshold`]),
//! 4. superpixel promotion and hole filling ([`superpixel`]),
//! 5. per-component morphological closing with small-component rejection
//!    ([`morphology::refine`]).
//!
//! [`evaluation`] scores masks against ground truth with pixel F1 and
//! [`synthgen`] renders scenes with known motion for testing.

pub mod diffvote;
pub mod error;
pub mod evaluation;
pub mod morphology;
pub mod pipeline;
pub mod raster;
pub mod superpixel;
pub mod synthgen;

pub use diffvote::{AbsDiffFrame, ThresholdStats, VoteConfig, VoteMap};
pub use error::{Error, Result};
pub use evaluation::{EvalRecord, EvalReport, GroupStats, LabelFusionSpec};
pub use morphology::{BoundingBox, FrameRef, Instance, InstanceSet, MorphConfig};
pub use pipeline::{ClipFrameSet, PipelineConfig, QueryExtraction, StageDump};
pub use raster::{BinaryMask, Frame, LabelImage};
pub use superpixel::{SuperpixelConfig, SuperpixelLabeling};
pub use synthgen::{SceneSpec, SyntheticClip};
