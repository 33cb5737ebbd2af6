//! Binary morphology and instance extraction.
//!
//! [`refine`] closes each connected component with a square structuring
//! element: the union mask is dilated, split into 8-connected components,
//! components below an area fraction of the image are dropped, and each
//! survivor is eroded on its own.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

pub const DEFAULT_KERNEL_SIZE: usize = 5;
pub const DEFAULT_MIN_COMPONENT_FRACTION: f64 = 0.001;
/// Instances are 8-connected.
pub const CONNECTIVITY: u8 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphConfig {
    /// Side of the square structuring element; odd.
    pub kernel_size: usize,
    /// Components must cover strictly more than this fraction of the image.
    pub min_component_fraction: f64,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            kernel_size: DEFAULT_KERNEL_SIZE,
            min_component_fraction: DEFAULT_MIN_COMPONENT_FRACTION,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size < 3 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "morph.kernel_size must be odd and at least 3, got {}",
                self.kernel_size
            )));
        }
        if !(self.min_component_fraction > 0.0 && self.min_component_fraction < 1.0) {
            return Err(Error::Config(format!(
                "morph.min_component_fraction must lie strictly between 0 and 1, got {}",
                self.min_component_fraction
            )));
        }
        Ok(())
    }

    fn radius(&self) -> usize {
        self.kernel_size / 2
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub clip_id: String,
    pub frame_index: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub id: u32,
    pub mask: BinaryMask,
    pub bbox: BoundingBox,
    pub area: usize,
}

impl Instance {
    fn from_pixels(id: u32, width: usize, height: usize, pixels: &[usize]) -> Instance {
        let mut mask = BinaryMask::new(width, height);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &p in pixels {
            let (x, y) = (p % width, p / width);
            mask.bits_mut()[p] = true;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Instance {
            id,
            mask,
            bbox: BoundingBox {
                x: x0,
                y: y0,
                w: x1 - x0 + 1,
                h: y1 - y0 + 1,
            },
            area: pixels.len(),
        }
    }

    fn first_pixel(&self) -> usize {
        self.mask.dynamic_indices().next().unwrap_or(usize::MAX)
    }
}

/// Connected dynamic components of one frame, ids in raster order of each
/// component's first pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceSet {
    pub frame: FrameRef,
    pub width: usize,
    pub height: usize,
    pub instances: Vec<Instance>,
}

impl InstanceSet {
    pub fn empty(width: usize, height: usize) -> InstanceSet {
        InstanceSet {
            frame: FrameRef::default(),
            width,
            height,
            instances: Vec::new(),
        }
    }

    pub fn with_frame(mut self, frame: FrameRef) -> InstanceSet {
        self.frame = frame;
        self
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn union_mask(&self) -> BinaryMask {
        let mut m = BinaryMask::new(self.width, self.height);
        for inst in &self.instances {
            m.union_in_place(&inst.mask).expect("instance dims match set");
        }
        m
    }

    fn renumber(&mut self) {
        self.instances.sort_by_key(Instance::first_pixel);
        for (i, inst) in self.instances.iter_mut().enumerate() {
            inst.id = i as u32;
        }
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        DisjointSet { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Smaller root wins so roots stay at the earliest provisional label.
        match ra.cmp(&rb) {
            std::cmp::Ordering::Less => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Greater => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Equal => {}
        }
    }
}

/// Two-pass 8-connected labelling. Returns per-pixel labels (0 = static,
/// components numbered from 1 in raster order of their first pixel) and the
/// component count.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    const NONE: u32 = u32::MAX;
    let mut prov = vec![NONE; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if !bits[p] {
                continue;
            }
            // Already-visited neighbours: W, NW, N, NE.
            let mut label = NONE;
            let visit = |q: usize, label: &mut u32, sets: &mut DisjointSet| {
                let l = prov[q];
                if l == NONE {
                    return;
                }
                if *label == NONE {
                    *label = l;
                } else {
                    sets.union(*label, l);
                }
            };
            if x > 0 {
                visit(p - 1, &mut label, &mut sets);
            }
            if y > 0 {
                if x > 0 {
                    visit(p - w - 1, &mut label, &mut sets);
                }
                visit(p - w, &mut label, &mut sets);
                if x + 1 < w {
                    visit(p - w + 1, &mut label, &mut sets);
                }
            }
            prov[p] = if label == NONE { sets.make() } else { label };
        }
    }

    let mut remap = vec![0u32; sets.parent.len()];
    let mut next = 0u32;
    let mut out = vec![0u32; w * h];
    for p in 0..w * h {
        if prov[p] == NONE {
            continue;
        }
        let root = sets.find(prov[p]) as usize;
        if remap[root] == 0 {
            next += 1;
            remap[root] = next;
        }
        out[p] = remap[root];
    }
    (out, next as usize)
}

pub fn connected_components(mask: &BinaryMask) -> InstanceSet {
    let (w, h) = mask.dims();
    let (labels, count) = label_components(mask);
    let mut pixels: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (p, &l) in labels.iter().enumerate() {
        if l != 0 {
            pixels[l as usize - 1].push(p);
        }
    }
    InstanceSet {
        frame: FrameRef::default(),
        width: w,
        height: h,
        instances: pixels
            .iter()
            .enumerate()
            .map(|(i, px)| Instance::from_pixels(i as u32, w, h, px))
            .collect(),
    }
}

/// Counts set values in a clipped window of radius `r` along one line.
/// `out[i] = (#set in [i-r, i+r] ∩ [0, n), window length)`.
fn window_counts(line: &[bool], r: usize, out: &mut [(usize, usize)]) {
    let n = line.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &b in line {
        prefix.push(prefix.last().unwrap() + usize::from(b));
    }
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(r);
        let hi = (i + r + 1).min(n);
        *o = (prefix[hi] - prefix[lo], hi - lo);
    }
}

/// Applies a separable square min/max filter. `any` selects dilation (at
/// least one set pixel in the clipped window) versus erosion (all pixels of
/// the clipped window set, so the outside counts as set).
fn square_filter(mask: &BinaryMask, radius: usize, any: bool) -> BinaryMask {
    let (w, h) = mask.dims();
    if w == 0 || h == 0 {
        return mask.clone();
    }
    let decide = |(set, len): (usize, usize)| if any { set > 0 } else { set == len };

    let mut rows = vec![false; w * h];
    rows.par_chunks_mut(w)
        .zip(mask.bits().par_chunks(w))
        .for_each(|(dst, src)| {
            let mut counts = vec![(0, 0); w];
            window_counts(src, radius, &mut counts);
            for (d, c) in dst.iter_mut().zip(counts) {
                *d = decide(c);
            }
        });

    let cols: Vec<Vec<bool>> = (0..w)
        .into_par_iter()
        .map(|x| {
            let column: Vec<bool> = (0..h).map(|y| rows[y * w + x]).collect();
            let mut counts = vec![(0, 0); h];
            window_counts(&column, radius, &mut counts);
            counts.into_iter().map(decide).collect()
        })
        .collect();

    BinaryMask::from_fn(w, h, |x, y| cols[x][y])
}

/// Dilation with a `kernel_size` square; the kernel is clipped at borders.
pub fn dilate(mask: &BinaryMask, cfg: &MorphConfig) -> BinaryMask {
    square_filter(mask, cfg.radius(), true)
}

/// Erosion with a `kernel_size` square; neighbours outside the image count
/// as dynamic.
pub fn erode(mask: &BinaryMask, cfg: &MorphConfig) -> BinaryMask {
    square_filter(mask, cfg.radius(), false)
}

/// Keeps instances whose area is strictly above
/// `min_component_fraction * image_area` and renumbers them.
pub fn filter_components(instances: InstanceSet, cfg: &MorphConfig, image_area: usize) -> InstanceSet {
    let cutoff = cfg.min_component_fraction * image_area as f64;
    let mut set = InstanceSet {
        instances: instances
            .instances
            .into_iter()
            .filter(|i| i.area as f64 > cutoff)
            .collect(),
        ..instances
    };
    set.renumber();
    set
}

/// Dilate, label, drop small components, erode each survivor on its own.
///
/// An eroded component that falls apart is split into its 8-connected
/// pieces so every returned instance is a single component.
pub fn refine(mask: &BinaryMask, cfg: &MorphConfig) -> InstanceSet {
    let (w, h) = mask.dims();
    let dilated = dilate(mask, cfg);
    let kept = filter_components(connected_components(&dilated), cfg, w * h);

    let mut instances: Vec<Instance> = kept
        .instances
        .par_iter()
        .flat_map_iter(|inst| {
            let eroded = erode(&inst.mask, cfg);
            connected_components(&eroded).instances
        })
        .collect();
    instances.retain(|i| i.area > 0);

    let mut set = InstanceSet {
        instances,
        ..InstanceSet::empty(w, h)
    };
    set.renumber();
    set
}
