//! Frame differencing, per-difference adaptive thresholding and vote
//! accumulation.
//!
//! For a query frame, every other frame of the clip yields an absolute
//! difference frame (ADF). Each ADF is binarised at `mean + std` of its own
//! pixel values (a BDF). The BDFs are summed into a [`VoteMap`] and a pixel
//! is dynamic when its count is strictly above `tau_c * cardinality`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_dims, BinaryMask, Frame};

/// Default vote fraction.
pub const DEFAULT_TAU_C: f64 = 0.65;

/// Per-pixel `|query - other|` of two gray planes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbsDiffFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

/// Whole-image mean and population standard deviation of an ADF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdStats {
    pub mu_p: f64,
    pub sigma_p: f64,
}

impl ThresholdStats {
    pub fn of(values: &[u8]) -> ThresholdStats {
        if values.is_empty() {
            return ThresholdStats {
                mu_p: 0.0,
                sigma_p: 0.0,
            };
        }
        // Histogram keeps both passes exact and O(256) after the scan.
        let mut hist = [0u64; 256];
        for &v in values {
            hist[v as usize] += 1;
        }
        let n = values.len() as f64;
        let sum: f64 = hist
            .iter()
            .enumerate()
            .map(|(v, &c)| v as f64 * c as f64)
            .sum();
        let mu_p = sum / n;
        let ss: f64 = hist
            .iter()
            .enumerate()
            .map(|(v, &c)| {
                let d = v as f64 - mu_p;
                d * d * c as f64
            })
            .sum();
        ThresholdStats {
            mu_p,
            sigma_p: (ss / n).sqrt(),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.mu_p + self.sigma_p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoteConfig {
    /// Fraction of BDFs that must mark a pixel before it counts as dynamic.
    pub tau_c: f64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        VoteConfig {
            tau_c: DEFAULT_TAU_C,
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_c > 0.0 && self.tau_c < 1.0) {
            return Err(Error::Config(format!(
                "vote.tau_c must lie strictly between 0 and 1, got {}",
                self.tau_c
            )));
        }
        Ok(())
    }
}

/// Per-pixel count of BDFs that marked the pixel dynamic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteMap {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
    pub cardinality: u32,
}

impl VoteMap {
    pub fn empty(width: usize, height: usize) -> VoteMap {
        VoteMap {
            width,
            height,
            counts: vec![0; width * height],
            cardinality: 0,
        }
    }

    /// Adds one BDF.
    pub fn add(&mut self, bdf: &BinaryMask) -> Result<()> {
        ensure_dims((self.width, self.height), bdf.dims())?;
        for (c, &b) in self.counts.iter_mut().zip(bdf.bits()) {
            *c += u32::from(b);
        }
        self.cardinality += 1;
        Ok(())
    }

    /// Sums two partial vote maps.
    pub fn merge(mut self, other: VoteMap) -> Result<VoteMap> {
        ensure_dims((self.width, self.height), (other.width, other.height))?;
        for (c, o) in self.counts.iter_mut().zip(other.counts) {
            *c += o;
        }
        self.cardinality += other.cardinality;
        Ok(self)
    }
}

pub fn abs_diff(query: &Frame, other: &Frame) -> Result<AbsDiffFrame> {
    ensure_dims(query.dims(), other.dims())?;
    if query.clip_id() != other.clip_id() {
        return Err(Error::ClipMismatch(
            query.clip_id().to_string(),
            other.clip_id().to_string(),
        ));
    }
    let values = query
        .gray()
        .iter()
        .zip(other.gray())
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    Ok(AbsDiffFrame {
        width: query.width(),
        height: query.height(),
        values,
    })
}

/// Binarises an ADF at `mu_p + sigma_p` with a strict comparison.
pub fn threshold_adf(adf: &AbsDiffFrame) -> BinaryMask {
    let cutoff = ThresholdStats::of(&adf.values).threshold();
    let bits = adf.values.iter().map(|&v| f64::from(v) > cutoff).collect();
    BinaryMask::from_bits(adf.width, adf.height, bits).expect("ADF buffer matches dimensions")
}

pub fn accumulate_votes(bdfs: &[BinaryMask]) -> Result<VoteMap> {
    let first = bdfs.first().ok_or(Error::EmptySet)?;
    let mut votes = VoteMap::empty(first.width(), first.height());
    for bdf in bdfs {
        votes.add(bdf)?;
    }
    Ok(votes)
}

/// Marks pixels whose count is strictly above `tau_c * cardinality`.
pub fn vote_threshold(votes: &VoteMap, cfg: &VoteConfig) -> BinaryMask {
    let cutoff = cfg.tau_c * f64::from(votes.cardinality);
    let bits = votes.counts.iter().map(|&c| f64::from(c) > cutoff).collect();
    BinaryMask::from_bits(votes.width, votes.height, bits).expect("vote buffer matches dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(clip: &str, w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Frame {
        let mut g = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                g.push(f(x, y));
            }
        }
        Frame::from_gray(clip, 0, w, h, g).unwrap()
    }

    fn adf(w: usize, h: usize, values: Vec<u8>) -> AbsDiffFrame {
        AbsDiffFrame {
            width: w,
            height: h,
            values,
        }
    }

    #[test]
    fn self_difference_is_zero() {
        let a = frame("c", 20, 20, |x, y| (x * 7 + y * 3) as u8);
        assert!(abs_diff(&a, &a).unwrap().values.iter().all(|&v| v == 0));
    }

    #[test]
    fn constant_difference() {
        let a = frame("c", 16, 16, |_, _| 100);
        let b = frame("c", 16, 16, |_, _| 60);
        assert!(abs_diff(&a, &b).unwrap().values.iter().all(|&v| v == 40));
        assert!(abs_diff(&b, &a).unwrap().values.iter().all(|&v| v == 40));
    }

    #[test]
    fn square_difference() {
        let inside = |x: usize, y: usize| (5..15).contains(&x) && (8..18).contains(&y);
        let a = frame("c", 32, 32, |x, y| if inside(x, y) { 200 } else { 50 });
        let b = frame("c", 32, 32, |_, _| 50);
        let d = abs_diff(&a, &b).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let want = if inside(x, y) { 150 } else { 0 };
                assert_eq!(d.values[y * 32 + x], want);
            }
        }
    }

    #[test]
    fn diff_errors() {
        let a = frame("c", 16, 16, |_, _| 0);
        let b = frame("c", 17, 16, |_, _| 0);
        let c = frame("d", 16, 16, |_, _| 0);
        assert!(matches!(abs_diff(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(abs_diff(&a, &c), Err(Error::ClipMismatch(..))));
    }

    #[test]
    fn uniform_adf_is_static() {
        for c in [0u8, 1, 77, 255] {
            assert!(threshold_adf(&adf(16, 16, vec![c; 256])).is_empty());
        }
    }

    #[test]
    fn half_split_hits_strict_edge() {
        let mut v = vec![0u8; 256];
        v[128..].fill(200);
        let stats = ThresholdStats::of(&v);
        assert_eq!(stats.mu_p, 100.0);
        assert_eq!(stats.sigma_p, 100.0);
        assert!(threshold_adf(&adf(16, 16, v)).is_empty());
    }

    #[test]
    fn one_percent_outliers() {
        // 100x100, 100 pixels at 255: mu = 2.55, sigma = sqrt(0.01*0.99)*255.
        let mut v = vec![0u8; 10_000];
        for i in (0..10_000).step_by(100) {
            v[i] = 255;
        }
        let stats = ThresholdStats::of(&v);
        assert!((stats.mu_p - 2.55).abs() < 1e-12);
        assert!((stats.sigma_p - 255.0 * (0.01f64 * 0.99).sqrt()).abs() < 1e-9);
        assert!((stats.threshold() - 27.9225).abs() < 1e-3);
        let m = threshold_adf(&adf(100, 100, v.clone()));
        assert_eq!(m.count_dynamic(), 100);
        for (i, &b) in m.bits().iter().enumerate() {
            assert_eq!(b, v[i] == 255);
        }
    }

    #[test]
    fn votes_count_masks() {
        let m = BinaryMask::from_fn(8, 8, |x, y| x == y);
        let v = accumulate_votes(&[m.clone(), m.clone(), m.clone()]).unwrap();
        assert_eq!(v.cardinality, 3);
        for (i, &c) in v.counts.iter().enumerate() {
            assert_eq!(c, if m.bits()[i] { 3 } else { 0 });
        }

        let a = BinaryMask::from_fn(8, 8, |x, _| x < 4);
        let v = accumulate_votes(&[a.clone(), a.complement()]).unwrap();
        assert!(v.counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn votes_single_overlap() {
        let a = BinaryMask::from_fn(8, 8, |x, y| y == 3 || (x == 2 && y == 2));
        let b = BinaryMask::from_fn(8, 8, |x, _| x == 2);
        let c = BinaryMask::from_fn(8, 8, |x, y| x + y == 4);
        let v = accumulate_votes(&[a, b, c]).unwrap();
        assert_eq!(v.counts[2 * 8 + 2], 3);
        assert_eq!(v.counts.iter().filter(|&&c| c == 3).count(), 1);
    }

    #[test]
    fn vote_errors() {
        assert!(matches!(accumulate_votes(&[]), Err(Error::EmptySet)));
        let r = accumulate_votes(&[BinaryMask::new(4, 4), BinaryMask::new(4, 5)]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn vote_cutoff_is_strict() {
        let votes = VoteMap {
            width: 4,
            height: 1,
            counts: vec![0, 2, 3, 4],
            cardinality: 4,
        };
        let m = vote_threshold(&votes, &VoteConfig::default());
        assert_eq!(m.bits(), &[false, false, true, true]);
    }

    #[test]
    fn vote_config_bounds() {
        assert!(VoteConfig::default().validate().is_ok());
        for bad in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(VoteConfig { tau_c: bad }.validate().is_err());
        }
    }
}
