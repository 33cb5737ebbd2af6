//! Deterministic static-camera scenes with moving shapes and exact
//! per-frame ground truth.
//!
//! Movers are painted over the background in list order, then i.i.d.
//! Gaussian noise is added to every pixel of every frame and the result is
//! clamped to `[0, 255]`. Frame `k` draws its noise from stream `k` of a
//! ChaCha generator seeded with the scene seed, so frames are independent
//! of rendering order.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{span_hint, ClipFrameSet, MIN_CLIP_FRAMES};
use crate::raster::{save_gray8, save_mask, BinaryMask, Frame, MIN_FRAME_SIDE};

/// File name used for frame `index` in a clip directory.
pub fn frame_file_name(index: u32) -> String {
    format!("frame_{index:06}.png")
}

/// Subdirectory of a generated clip holding the ground-truth masks.
pub const TRUTH_DIR: &str = "truth";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Background {
    Uniform {
        intensity: u8,
    },
    /// Bilinearly interpolated lattice noise around `base`.
    Texture {
        base: f64,
        amplitude: f64,
        seed: u64,
        #[serde(default = "default_cell")]
        cell: usize,
    },
}

fn default_cell() -> usize {
    16
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rectangle,
    /// Ellipse inscribed in the `width x height` box.
    Ellipse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mover {
    pub shape: Shape,
    pub width: usize,
    pub height: usize,
    pub intensity: u8,
    /// Top-left corner at frame 0.
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
}

impl Mover {
    /// Top-left corner at frame `k`, rounded to the pixel grid.
    pub fn position(&self, k: usize) -> (i64, i64) {
        let x = self.start[0] + self.velocity[0] * k as f64;
        let y = self.start[1] + self.velocity[1] * k as f64;
        (x.round() as i64, y.round() as i64)
    }

    fn covers(&self, dx: usize, dy: usize) -> bool {
        match self.shape {
            Shape::Rectangle => true,
            Shape::Ellipse => {
                let rx = self.width as f64 / 2.0;
                let ry = self.height as f64 / 2.0;
                let u = (dx as f64 + 0.5 - rx) / rx;
                let v = (dy as f64 + 0.5 - ry) / ry;
                u * u + v * v <= 1.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "default_clip_id")]
    pub clip_id: String,
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub background: Background,
    #[serde(default)]
    pub movers: Vec<Mover>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_clip_id() -> String {
    "synth".to_string()
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<SceneSpec> {
        let spec: SceneSpec = toml::from_str(text)
            .map_err(|e| Error::Spec(e.message().to_string() + &span_hint(text, e.span())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_FRAME_SIDE || self.height < MIN_FRAME_SIDE {
            return Err(Error::Spec(format!(
                "scene is {}x{}, minimum is {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}",
                self.width, self.height
            )));
        }
        if self.frame_count < MIN_CLIP_FRAMES {
            return Err(Error::Spec(format!(
                "frame_count is {}, minimum is {MIN_CLIP_FRAMES}",
                self.frame_count
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Spec(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if self.clip_id.is_empty() || self.clip_id.contains(['/', '\\']) {
            return Err(Error::Spec(format!("invalid clip_id {:?}", self.clip_id)));
        }
        if let Background::Texture { amplitude, cell, .. } = self.background {
            if cell == 0 || !amplitude.is_finite() {
                return Err(Error::Spec("texture needs cell >= 1 and a finite amplitude".into()));
            }
        }
        for (i, m) in self.movers.iter().enumerate() {
            if m.width == 0 || m.height == 0 {
                return Err(Error::Spec(format!("mover {i} has an empty size")));
            }
            for k in 0..self.frame_count {
                let (x, y) = m.position(k);
                let inside = x >= 0
                    && y >= 0
                    && x as usize + m.width <= self.width
                    && y as usize + m.height <= self.height;
                if !inside {
                    return Err(Error::Spec(format!(
                        "mover {i} leaves the {}x{} frame at frame {k} (top-left {x},{y})",
                        self.width, self.height
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A rendered clip and its per-frame ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticClip {
    pub clip: ClipFrameSet,
    pub truth: Vec<BinaryMask>,
}

fn render_background(spec: &SceneSpec) -> Vec<f64> {
    let (w, h) = (spec.width, spec.height);
    match spec.background {
        Background::Uniform { intensity } => vec![f64::from(intensity); w * h],
        Background::Texture {
            base,
            amplitude,
            seed,
            cell,
        } => {
            let gw = w / cell + 2;
            let gh = h / cell + 2;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                let fy = y as f64 / cell as f64;
                let (j, ty) = (fy.floor() as usize, fy.fract());
                for x in 0..w {
                    let fx = x as f64 / cell as f64;
                    let (i, tx) = (fx.floor() as usize, fx.fract());
                    let at = |i: usize, j: usize| lattice[j * gw + i];
                    let top = at(i, j) * (1.0 - tx) + at(i + 1, j) * tx;
                    let bottom = at(i, j + 1) * (1.0 - tx) + at(i + 1, j + 1) * tx;
                    out.push(base + amplitude * (top * (1.0 - ty) + bottom * ty));
                }
            }
            out
        }
    }
}

/// Renders the scene. Frames are gray-only and share `spec.clip_id`.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticClip> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let background = render_background(spec);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Spec(e.to_string()))?;

    let rendered: Vec<(Frame, BinaryMask)> = (0..spec.frame_count)
        .into_par_iter()
        .map(|k| {
            let mut plane = background.clone();
            let mut truth = BinaryMask::new(w, h);
            for m in &spec.movers {
                let (x0, y0) = m.position(k);
                let (x0, y0) = (x0 as usize, y0 as usize);
                for dy in 0..m.height {
                    for dx in 0..m.width {
                        if m.covers(dx, dy) {
                            let (x, y) = (x0 + dx, y0 + dy);
                            plane[y * w + x] = f64::from(m.intensity);
                            truth.set(x, y, true);
                        }
                    }
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(k as u64);
            let gray = plane
                .iter()
                .map(|&v| {
                    let n = if spec.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    (v + n).round().clamp(0.0, 255.0) as u8
                })
                .collect();
            let frame = Frame::from_gray(spec.clip_id.clone(), k as u32, w, h, gray)?;
            Ok((frame, truth))
        })
        .collect::<Result<_>>()?;

    let (frames, truth): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();
    Ok(SyntheticClip {
        clip: ClipFrameSet::new(spec.clip_id.clone(), frames)?,
        truth,
    })
}

impl SyntheticClip {
    /// Writes `root/<clip_id>/frame_NNNNNN.png` and the matching masks under
    /// `root/<clip_id>/truth/`. Returns the clip directory.
    pub fn write(&self, root: &Path) -> Result<PathBuf> {
        let dir = root.join(&self.clip.clip_id);
        self.clip
            .ofs
            .par_iter()
            .zip(&self.truth)
            .try_for_each(|(frame, truth)| {
                let name = frame_file_name(frame.frame_index());
                save_gray8(frame.width(), frame.height(), frame.gray(), dir.join(&name))?;
                save_mask(truth, dir.join(TRUTH_DIR).join(&name))
            })?;
        Ok(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(movers: Vec<Mover>) -> SceneSpec {
        SceneSpec {
            clip_id: "s".into(),
            width: 64,
            height: 48,
            frame_count: 8,
            background: Background::Uniform { intensity: 60 },
            movers,
            noise_sigma: 3.0,
            seed: 11,
        }
    }

    fn rect_mover(start: [f64; 2], velocity: [f64; 2]) -> Mover {
        Mover {
            shape: Shape::Rectangle,
            width: 20,
            height: 20,
            intensity: 200,
            start,
            velocity,
        }
    }

    #[test]
    fn no_movers_no_truth() {
        let s = generate(&spec(vec![])).unwrap();
        assert_eq!(s.truth.len(), 8);
        assert!(s.truth.iter().all(BinaryMask::is_empty));
    }

    #[test]
    fn rectangle_moves_by_velocity() {
        let s = generate(&spec(vec![rect_mover([2.0, 10.0], [5.0, 0.0])])).unwrap();
        for (k, t) in s.truth.iter().enumerate() {
            let x0 = 2 + 5 * k;
            let want = BinaryMask::from_fn(64, 48, |x, y| (x0..x0 + 20).contains(&x) && (10..30).contains(&y));
            assert_eq!(*t, want, "frame {k}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let sp = spec(vec![rect_mover([2.0, 10.0], [5.0, 1.0])]);
        let a = generate(&sp).unwrap();
        let b = generate(&sp).unwrap();
        for (fa, fb) in a.clip.ofs.iter().zip(&b.clip.ofs) {
            assert_eq!(fa.gray(), fb.gray());
        }
        let mut other = sp.clone();
        other.seed = 12;
        let c = generate(&other).unwrap();
        assert_ne!(a.clip.ofs[0].gray(), c.clip.ofs[0].gray());
    }

    #[test]
    fn later_movers_occlude() {
        let mut top = rect_mover([10.0, 10.0], [0.0, 0.0]);
        top.intensity = 30;
        let s = generate(&SceneSpec {
            noise_sigma: 0.0,
            ..spec(vec![rect_mover([0.0, 0.0], [0.0, 0.0]), top])
        })
        .unwrap();
        let f = &s.clip.ofs[0];
        assert_eq!(f.gray()[5 * 64 + 5], 200);
        assert_eq!(f.gray()[15 * 64 + 15], 30);
        assert_eq!(f.gray()[40 * 64 + 60], 60);
    }

    #[test]
    fn ellipse_area_is_constant() {
        let m = Mover {
            shape: Shape::Ellipse,
            ..rect_mover([1.0, 1.0], [4.0, 2.0])
        };
        let s = generate(&spec(vec![m])).unwrap();
        let a0 = s.truth[0].count_dynamic();
        assert!(a0 > 280 && a0 < 340, "{a0}");
        assert!(s.truth.iter().all(|t| t.count_dynamic() == a0));
    }

    #[test]
    fn rejects_invalid_scenes() {
        let out = spec(vec![rect_mover([40.0, 10.0], [5.0, 0.0])]);
        assert!(matches!(generate(&out), Err(Error::Spec(_))));
        let short = SceneSpec {
            frame_count: 5,
            ..spec(vec![])
        };
        assert!(matches!(generate(&short), Err(Error::Spec(_))));
    }

    #[test]
    fn toml_round_trip() {
        let sp = SceneSpec {
            background: Background::Texture {
                base: 100.0,
                amplitude: 30.0,
                seed: 5,
                cell: 8,
            },
            ..spec(vec![rect_mover([2.0, 10.0], [5.0, 0.0])])
        };
        assert_eq!(SceneSpec::from_toml(&sp.to_toml()).unwrap(), sp);
        let err = SceneSpec::from_toml("width = 64\nheight = 64\nframe_count = 8\nbogus = 1\n[background]\nkind = \"uniform\"\nintensity = 3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
    }
}
