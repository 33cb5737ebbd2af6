//! Superpixel over-segmentation and promotion of sparse pixel votes to whole
//! regions.
//!
//! Segmentation is SLIC-style k-means over `(feature, x, y)` seeded on a
//! regular grid, followed by a connectivity pass: every cluster is split
//! into its 4-connected pieces, the largest piece keeps the cluster, and
//! the other (orphaned) pieces smaller than a quarter of the target area
//! are merged into the neighbour they share the longest boundary with.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_dims, BinaryMask, Frame};

pub const DEFAULT_REGION_SIZE: usize = 32;
pub const DEFAULT_COMPACTNESS: f64 = 10.0;
/// A region is promoted when strictly more than this fraction is dynamic.
pub const DEFAULT_DYNAMIC_FRACTION: f64 = 0.05;
pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSpace {
    /// Gray plane only.
    #[default]
    Luma,
    /// Interleaved RGB; requires a color frame.
    Rgb,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperpixelConfig {
    /// Seed grid spacing in pixels.
    pub target_region_size: usize,
    /// Weight of spatial distance relative to feature distance.
    pub compactness: f64,
    pub dynamic_fraction: f64,
    pub iterations: usize,
    pub features: FeatureSpace,
}

impl Default for SuperpixelConfig {
    fn default() -> Self {
        SuperpixelConfig {
            target_region_size: DEFAULT_REGION_SIZE,
            compactness: DEFAULT_COMPACTNESS,
            dynamic_fraction: DEFAULT_DYNAMIC_FRACTION,
            iterations: DEFAULT_ITERATIONS,
            features: FeatureSpace::Luma,
        }
    }
}

impl SuperpixelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_region_size < 4 {
            return Err(Error::Config(format!(
                "superpixel.target_region_size must be at least 4, got {}",
                self.target_region_size
            )));
        }
        if !(self.dynamic_fraction > 0.0 && self.dynamic_fraction < 1.0) {
            return Err(Error::Config(format!(
                "superpixel.dynamic_fraction must lie strictly between 0 and 1, got {}",
                self.dynamic_fraction
            )));
        }
        if self.iterations < 1 {
            return Err(Error::Config(
                "superpixel.iterations must be at least 1".into(),
            ));
        }
        if !(self.compactness.is_finite() && self.compactness > 0.0) {
            return Err(Error::Config(format!(
                "superpixel.compactness must be positive, got {}",
                self.compactness
            )));
        }
        Ok(())
    }
}

/// Region id per pixel; ids are dense in `0..region_count` and numbered in
/// raster order of each region's first pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperpixelLabeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub region_count: usize,
}

impl SuperpixelLabeling {
    pub fn region_areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.region_count];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }
}

#[derive(Clone, Copy, Debug)]
struct Center {
    x: f64,
    y: f64,
    feat: [f64; 3],
}

struct Features {
    channels: usize,
    data: Vec<f64>,
}

impl Features {
    fn new(frame: &Frame, space: FeatureSpace) -> Result<Features> {
        match space {
            FeatureSpace::Luma => Ok(Features {
                channels: 1,
                data: frame.gray().iter().map(|&v| f64::from(v)).collect(),
            }),
            FeatureSpace::Rgb => {
                let rgb = frame.color().ok_or(Error::MissingColor)?;
                Ok(Features {
                    channels: 3,
                    data: rgb.iter().map(|&v| f64::from(v)).collect(),
                })
            }
        }
    }

    #[inline]
    fn at(&self, p: usize) -> &[f64] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }
}

struct Grid {
    nx: usize,
    ny: usize,
    /// Cell extent, also the search radius around each center.
    sx: f64,
    sy: f64,
    /// Squared spatial normaliser.
    step2: f64,
}

/// Runs SLIC and enforces 4-connectivity of every region.
pub fn segment(frame: &Frame, cfg: &SuperpixelConfig) -> Result<SuperpixelLabeling> {
    cfg.validate()?;
    let (w, h) = frame.dims();
    let s = cfg.target_region_size;
    if w < s || h < s {
        return Err(Error::Dimension(format!(
            "frame {w}x{h} is smaller than the superpixel size {s}"
        )));
    }
    let feats = Features::new(frame, cfg.features)?;

    let nx = ((w + s / 2) / s).max(1);
    let ny = ((h + s / 2) / s).max(1);
    let sx = w as f64 / nx as f64;
    let sy = h as f64 / ny as f64;
    let grid = Grid {
        nx,
        ny,
        sx,
        sy,
        step2: sx * sy,
    };

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (i as f64 + 0.5) * sx;
            let cy = (j as f64 + 0.5) * sy;
            let p = (cy as usize).min(h - 1) * w + (cx as usize).min(w - 1);
            let mut feat = [0.0; 3];
            feat[..feats.channels].copy_from_slice(feats.at(p));
            centers.push(Center { x: cx, y: cy, feat });
        }
    }

    let m2 = cfg.compactness * cfg.compactness;
    let mut labels = vec![0u32; w * h];
    for iter in 0..cfg.iterations {
        assign(&mut labels, &centers, &feats, &grid, m2, w);
        if iter + 1 < cfg.iterations {
            update_centers(&mut centers, &labels, &feats, w);
        }
    }

    Ok(enforce_connectivity(w, h, &labels, (s * s) / 4))
}

#[inline]
fn distance2(c: &Center, f: &[f64], px: f64, py: f64, step2: f64, m2: f64) -> f64 {
    let dc: f64 = f.iter().zip(&c.feat).map(|(a, b)| (a - b) * (a - b)).sum();
    let ds = (px - c.x) * (px - c.x) + (py - c.y) * (py - c.y);
    dc + ds / step2 * m2
}

fn assign(labels: &mut [u32], centers: &[Center], feats: &Features, grid: &Grid, m2: f64, w: usize) {
    // Bucket centers by grid cell. A center within one cell extent of a
    // pixel can only sit in the pixel's cell or an adjacent one.
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); grid.nx * grid.ny];
    let cell_of = |x: f64, y: f64| {
        let i = ((x / grid.sx).floor().max(0.0) as usize).min(grid.nx - 1);
        let j = ((y / grid.sy).floor().max(0.0) as usize).min(grid.ny - 1);
        (i, j)
    };
    for (k, c) in centers.iter().enumerate() {
        let (i, j) = cell_of(c.x, c.y);
        buckets[j * grid.nx + i].push(k as u32);
    }

    labels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let py = y as f64 + 0.5;
        let mut candidates: Vec<u32> = Vec::with_capacity(16);
        for (x, label) in row.iter_mut().enumerate() {
            let px = x as f64 + 0.5;
            let p = y * w + x;
            let f = feats.at(p);
            let (ci, cj) = cell_of(px, py);
            candidates.clear();
            for j in cj.saturating_sub(1)..=(cj + 1).min(grid.ny - 1) {
                for i in ci.saturating_sub(1)..=(ci + 1).min(grid.nx - 1) {
                    candidates.extend_from_slice(&buckets[j * grid.nx + i]);
                }
            }
            candidates.sort_unstable();

            let mut best: Option<(f64, u32)> = None;
            for &k in &candidates {
                let c = &centers[k as usize];
                if (px - c.x).abs() > grid.sx || (py - c.y).abs() > grid.sy {
                    continue;
                }
                let d = distance2(c, f, px, py, grid.step2, m2);
                // Strict: on equal distance the lower id (visited first) wins.
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, k));
                }
            }
            if best.is_none() {
                for (k, c) in centers.iter().enumerate() {
                    let d = distance2(c, f, px, py, grid.step2, m2);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, k as u32));
                    }
                }
            }
            *label = best.expect("at least one center").1;
        }
    });
}

fn update_centers(centers: &mut [Center], labels: &[u32], feats: &Features, w: usize) {
    let k = centers.len();
    let mut sums = vec![[0.0f64; 5]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in labels.iter().enumerate() {
        let s = &mut sums[l as usize];
        s[0] += (p % w) as f64 + 0.5;
        s[1] += (p / w) as f64 + 0.5;
        for (acc, v) in s[2..].iter_mut().zip(feats.at(p)) {
            *acc += v;
        }
        counts[l as usize] += 1;
    }
    for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
        if n == 0 {
            continue;
        }
        let n = n as f64;
        c.x = s[0] / n;
        c.y = s[1] / n;
        for (f, v) in c.feat.iter_mut().zip(&s[2..]) {
            *f = v / n;
        }
    }
}

const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[inline]
fn neighbor(p: usize, w: usize, h: usize, (dx, dy): (isize, isize)) -> Option<usize> {
    let x = (p % w) as isize + dx;
    let y = (p / w) as isize + dy;
    (x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h).then(|| y as usize * w + x as usize)
}

/// Splits labels into 4-connected pieces and merges orphaned pieces below
/// `min_area` into the neighbour sharing the longest boundary (ties: larger
/// neighbour, then lower id). Output ids are dense, in raster order.
pub(crate) fn enforce_connectivity(
    w: usize,
    h: usize,
    labels: &[u32],
    min_area: usize,
) -> SuperpixelLabeling {
    const UNSET: u32 = u32::MAX;
    let mut comp = vec![UNSET; w * h];
    let mut pixels: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if comp[start] != UNSET {
            continue;
        }
        let id = pixels.len() as u32;
        let mut members = Vec::new();
        comp[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            members.push(p);
            for d in NEIGHBORS_4 {
                if let Some(q) = neighbor(p, w, h, d) {
                    if comp[q] == UNSET && labels[q] == labels[start] {
                        comp[q] = id;
                        queue.push_back(q);
                    }
                }
            }
        }
        pixels.push(members);
    }

    // The largest piece of each cluster (lowest id on ties) is its primary
    // piece and is kept whatever its size; only the other pieces are
    // orphaned fragments.
    let mut primary: BTreeMap<u32, u32> = BTreeMap::new();
    for (i, m) in pixels.iter().enumerate() {
        let cluster = labels[m[0]];
        let entry = primary.entry(cluster).or_insert(i as u32);
        if m.len() > pixels[*entry as usize].len() {
            *entry = i as u32;
        }
    }
    let mut orphan = vec![true; pixels.len()];
    for &i in primary.values() {
        orphan[i as usize] = false;
    }

    let mut alive = pixels.len();
    let mut heap: BinaryHeap<Reverse<(usize, u32)>> = pixels
        .iter()
        .enumerate()
        .filter(|(i, m)| orphan[*i] && m.len() < min_area)
        .map(|(i, m)| Reverse((m.len(), i as u32)))
        .collect();

    while let Some(Reverse((size, id))) = heap.pop() {
        if alive <= 1 {
            break;
        }
        if pixels[id as usize].len() != size || size == 0 {
            continue;
        }
        let mut boundary: BTreeMap<u32, usize> = BTreeMap::new();
        for &p in &pixels[id as usize] {
            for d in NEIGHBORS_4 {
                if let Some(q) = neighbor(p, w, h, d) {
                    if comp[q] != id {
                        *boundary.entry(comp[q]).or_default() += 1;
                    }
                }
            }
        }
        let Some(target) = boundary
            .iter()
            .max_by(|(a, la), (b, lb)| {
                la.cmp(lb)
                    .then(pixels[**a as usize].len().cmp(&pixels[**b as usize].len()))
                    .then(b.cmp(a))
            })
            .map(|(&t, _)| t)
        else {
            continue;
        };
        let moved = std::mem::take(&mut pixels[id as usize]);
        for &p in &moved {
            comp[p] = target;
        }
        pixels[target as usize].extend(moved);
        alive -= 1;
        let tsize = pixels[target as usize].len();
        if orphan[target as usize] && tsize < min_area {
            heap.push(Reverse((tsize, target)));
        }
    }

    let mut remap = vec![UNSET; pixels.len()];
    let mut next = 0u32;
    let labels = comp
        .iter()
        .map(|&c| {
            let r = &mut remap[c as usize];
            if *r == UNSET {
                *r = next;
                next += 1;
            }
            *r
        })
        .collect();
    SuperpixelLabeling {
        width: w,
        height: h,
        labels,
        region_count: next as usize,
    }
}

/// Region-wise promotion without hole filling: a region becomes entirely
/// dynamic when its dynamic fraction strictly exceeds `dynamic_fraction`,
/// otherwise entirely static.
pub fn promote_regions(
    labels: &SuperpixelLabeling,
    votes_mask: &BinaryMask,
    cfg: &SuperpixelConfig,
) -> Result<BinaryMask> {
    ensure_dims((labels.width, labels.height), votes_mask.dims())?;
    let mut dynamic = vec![0usize; labels.region_count];
    let mut area = vec![0usize; labels.region_count];
    for (&l, &b) in labels.labels.iter().zip(votes_mask.bits()) {
        area[l as usize] += 1;
        dynamic[l as usize] += usize::from(b);
    }
    let promoted: Vec<bool> = dynamic
        .iter()
        .zip(&area)
        .map(|(&d, &a)| a > 0 && d as f64 / a as f64 > cfg.dynamic_fraction)
        .collect();
    let bits = labels.labels.iter().map(|&l| promoted[l as usize]).collect();
    BinaryMask::from_bits(labels.width, labels.height, bits)
}

/// [`promote_regions`] followed by [`fill_holes`].
pub fn promote(
    labels: &SuperpixelLabeling,
    votes_mask: &BinaryMask,
    cfg: &SuperpixelConfig,
) -> Result<BinaryMask> {
    Ok(fill_holes(&promote_regions(labels, votes_mask, cfg)?))
}

/// Marks every static pixel that is not 4-connected to the image border
/// through static pixels as dynamic.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |p: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        if !bits[p] && !outside[p] {
            outside[p] = true;
            queue.push_back(p);
        }
    };
    for x in 0..w {
        seed(x, &mut outside, &mut queue);
        seed((h - 1) * w + x, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(y * w, &mut outside, &mut queue);
        seed(y * w + w - 1, &mut outside, &mut queue);
    }
    while let Some(p) = queue.pop_front() {
        for d in NEIGHBORS_4 {
            if let Some(q) = neighbor(p, w, h, d) {
                if !bits[q] && !outside[q] {
                    outside[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    let filled = outside.into_iter().map(|o| !o).collect();
    BinaryMask::from_bits(w, h, filled).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_frame(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Frame {
        let mut g = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                g.push(f(x, y));
            }
        }
        Frame::from_gray("t", 0, w, h, g).unwrap()
    }

    /// BFS check that each region is one 4-connected piece.
    fn regions_connected(l: &SuperpixelLabeling) -> bool {
        let (w, h) = (l.width, l.height);
        let mut seen_region = vec![false; l.region_count];
        let mut visited = vec![false; w * h];
        for start in 0..w * h {
            if visited[start] {
                continue;
            }
            let r = l.labels[start] as usize;
            if seen_region[r] {
                return false;
            }
            seen_region[r] = true;
            let mut stack = vec![start];
            visited[start] = true;
            while let Some(p) = stack.pop() {
                for d in NEIGHBORS_4 {
                    if let Some(q) = neighbor(p, w, h, d) {
                        if !visited[q] && l.labels[q] as usize == r {
                            visited[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        seen_region.iter().all(|&s| s)
    }

    #[test]
    fn uniform_frame_tiles_into_grid() {
        let f = gray_frame(128, 128, |_, _| 90);
        let l = segment(&f, &SuperpixelConfig::default()).unwrap();
        assert_eq!(l.region_count, 16);
        assert!(regions_connected(&l));
        // Each region is exactly one 32x32 block.
        for (r, &area) in l.region_areas().iter().enumerate() {
            assert_eq!(area, 1024, "region {r}");
        }
        for y in 0..128 {
            for x in 0..128 {
                let block = (y / 32) * 4 + x / 32;
                assert_eq!(l.labels[y * 128 + x] as usize, block);
            }
        }
    }

    #[test]
    fn single_seed_covers_frame() {
        let f = gray_frame(32, 32, |x, y| ((x * 13 + y * 7) % 256) as u8);
        let l = segment(&f, &SuperpixelConfig::default()).unwrap();
        assert_eq!(l.region_count, 1);
        assert!(l.labels.iter().all(|&v| v == 0));
    }

    #[test]
    fn regions_respect_strong_edge() {
        let f = gray_frame(128, 96, |x, _| if x < 61 { 0 } else { 255 });
        let l = segment(&f, &SuperpixelConfig::default()).unwrap();
        assert!(regions_connected(&l));
        let mut dark = vec![0usize; l.region_count];
        let areas = l.region_areas();
        for (p, &r) in l.labels.iter().enumerate() {
            if p % 128 < 61 {
                dark[r as usize] += 1;
            }
        }
        for (d, a) in dark.iter().zip(&areas) {
            let purity = (*d).max(a - d) as f64 / *a as f64;
            assert!(purity >= 0.9, "purity {purity}");
        }
    }

    #[test]
    fn too_small_frame() {
        let f = gray_frame(16, 40, |_, _| 0);
        assert!(matches!(
            segment(&f, &SuperpixelConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rgb_features_need_color() {
        let f = gray_frame(32, 32, |_, _| 0);
        let cfg = SuperpixelConfig {
            features: FeatureSpace::Rgb,
            ..Default::default()
        };
        assert!(matches!(segment(&f, &cfg), Err(Error::MissingColor)));
    }

    #[test]
    fn orphan_merges_into_longest_boundary() {
        // Cluster 0 owns x < 4 plus a detached 2x2 piece at (9..11, 0..2);
        // the piece shares 2 edges with cluster 1 and 4 with cluster 2.
        let (w, h) = (12, 6);
        let labels: Vec<u32> = (0..w * h)
            .map(|p| {
                let (x, y) = (p % w, p / w);
                if x < 4 || ((9..11).contains(&x) && y < 2) {
                    0
                } else if x < 9 {
                    1
                } else {
                    2
                }
            })
            .collect();
        let l = enforce_connectivity(w, h, &labels, 8);
        assert_eq!(l.region_count, 3);
        let want: Vec<u32> = (0..w * h)
            .map(|p| match p % w {
                0..=3 => 0,
                4..=8 => 1,
                _ => 2,
            })
            .collect();
        assert_eq!(l.labels, want);
    }

    #[test]
    fn small_primary_cluster_survives() {
        // A 2x2 cluster fully inside another is its own region.
        let (w, h) = (12, 6);
        let labels: Vec<u32> = (0..w * h)
            .map(|p| u32::from((2..4).contains(&(p % w)) && (2..4).contains(&(p / w))))
            .collect();
        let l = enforce_connectivity(w, h, &labels, 8);
        assert_eq!(l.region_count, 2);
        assert_eq!(l.region_areas(), vec![68, 4]);
    }

    fn region_labels(w: usize, h: usize, block: usize) -> SuperpixelLabeling {
        let bx = w / block;
        SuperpixelLabeling {
            width: w,
            height: h,
            labels: (0..w * h)
                .map(|p| ((p / w / block) * bx + (p % w) / block) as u32)
                .collect(),
            region_count: bx * (h / block),
        }
    }

    #[test]
    fn promotion_threshold_is_strict() {
        // Two 10x10 regions side by side.
        let l = region_labels(20, 10, 10);
        let mut votes = BinaryMask::new(20, 10);
        for i in 0..6 {
            votes.set(i, 0, true);
        }
        for i in 0..5 {
            votes.set(10 + i, 9, true);
        }
        let m = promote_regions(&l, &votes, &SuperpixelConfig::default()).unwrap();
        for y in 0..10 {
            for x in 0..20 {
                assert_eq!(m.get(x, y), x < 10);
            }
        }
    }

    #[test]
    fn promotion_edge_cases() {
        let l = region_labels(20, 20, 10);
        let cfg = SuperpixelConfig::default();
        assert!(promote(&l, &BinaryMask::new(20, 20), &cfg).unwrap().is_empty());
        let all = BinaryMask::filled(20, 20, true);
        assert_eq!(promote(&l, &all, &cfg).unwrap(), all);
        assert!(matches!(
            promote(&l, &BinaryMask::new(10, 20), &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ring_interior_is_filled() {
        let ring = BinaryMask::from_fn(20, 20, |x, y| {
            (4..16).contains(&x) && (4..16).contains(&y) && !((6..14).contains(&x) && (6..14).contains(&y))
        });
        let filled = fill_holes(&ring);
        let solid = BinaryMask::from_fn(20, 20, |x, y| (4..16).contains(&x) && (4..16).contains(&y));
        assert_eq!(filled, solid);
    }

    #[test]
    fn c_shape_stays_open() {
        // Open to the right border through row 9..11.
        let c = BinaryMask::from_fn(20, 20, |x, y| {
            (4..20).contains(&x) && (4..16).contains(&y) && !((6..20).contains(&x) && (6..14).contains(&y))
        });
        assert_eq!(fill_holes(&c), c);
        assert_eq!(fill_holes(&BinaryMask::new(20, 20)), BinaryMask::new(20, 20));
    }

    #[test]
    fn diagonal_gap_is_not_a_leak() {
        // Static interior touching the outside only diagonally is a hole
        // under 4-connectivity.
        let m = BinaryMask::from_fn(5, 5, |x, y| {
            let on_ring = (1..4).contains(&x) && (1..4).contains(&y) && !(x == 2 && y == 2);
            on_ring && !(x == 3 && y == 3)
        });
        let f = fill_holes(&m);
        assert!(f.get(2, 2));
        assert!(!f.get(3, 3));
    }
}
