//! Raster types shared by every stage: frames, binary masks, label images,
//! plus the PNG/JPEG I/O that moves them on and off disk.
//!
//! On-disk mask contract: 8-bit single-channel PNG, `0` = static,
//! `255` = dynamic. Loading treats any value above 127 as dynamic.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, ImageReader, Luma};

use crate::error::{Error, Result};

/// Smallest accepted frame side, in pixels.
pub const MIN_FRAME_SIDE: usize = 16;

/// Rec. 601 luma of one RGB pixel, rounded to nearest and clamped.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

pub(crate) fn ensure_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// One decoded image of a clip.
///
/// `gray` is always present; `color` holds interleaved RGB when the frame
/// was decoded from a color source.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    gray: Vec<u8>,
    color: Option<Vec<u8>>,
    clip_id: String,
    frame_index: u32,
    source: Option<PathBuf>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("clip_id", &self.clip_id)
            .field("frame_index", &self.frame_index)
            .field("width", &self.width)
            .field("height", &self.height)
            .field("color", &self.color.is_some())
            .finish()
    }
}

fn check_frame_size(width: usize, height: usize) -> Result<()> {
    if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
        return Err(Error::Dimension(format!(
            "frame is {width}x{height}, minimum is {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}"
        )));
    }
    Ok(())
}

impl Frame {
    pub fn from_gray(
        clip_id: impl Into<String>,
        frame_index: u32,
        width: usize,
        height: usize,
        gray: Vec<u8>,
    ) -> Result<Self> {
        check_frame_size(width, height)?;
        if gray.len() != width * height {
            return Err(Error::Dimension(format!(
                "gray plane has {} values, expected {}",
                gray.len(),
                width * height
            )));
        }
        Ok(Frame {
            width,
            height,
            gray,
            color: None,
            clip_id: clip_id.into(),
            frame_index,
            source: None,
        })
    }

    /// Builds a color frame from interleaved RGB and derives its gray plane.
    pub fn from_rgb(
        clip_id: impl Into<String>,
        frame_index: u32,
        width: usize,
        height: usize,
        rgb: Vec<u8>,
    ) -> Result<Self> {
        check_frame_size(width, height)?;
        if rgb.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "color plane has {} values, expected {}",
                rgb.len(),
                width * height * 3
            )));
        }
        let frame = Frame {
            width,
            height,
            gray: Vec::new(),
            color: Some(rgb),
            clip_id: clip_id.into(),
            frame_index,
            source: None,
        };
        to_grayscale(&frame)
    }

    pub fn with_source(mut self, path: impl Into<PathBuf>) -> Self {
        self.source = Some(path.into());
        self
    }

    pub fn with_clip_id(mut self, clip_id: impl Into<String>) -> Self {
        self.clip_id = clip_id.into();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn gray(&self) -> &[u8] {
        &self.gray
    }

    pub fn color(&self) -> Option<&[u8]> {
        self.color.as_deref()
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn frame_index(&self) -> u32 {
        self.frame_index
    }

    /// File the frame was decoded from, if any.
    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }
}

/// Recomputes the gray plane from the color plane with Rec. 601 weights.
pub fn to_grayscale(frame: &Frame) -> Result<Frame> {
    let rgb = frame.color.as_ref().ok_or(Error::MissingColor)?;
    let gray = rgb.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
    Ok(Frame {
        gray,
        ..frame.clone()
    })
}

/// Per-pixel dynamic/static classification.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} dynamic)",
            self.width,
            self.height,
            self.count_dynamic()
        )?;
        if self.width * self.height <= 1024 {
            for row in self.bits.chunks(self.width.max(1)) {
                f.write_str("\n")?;
                for &b in row {
                    f.write_str(if b { "#" } else { "." })?;
                }
            }
        }
        Ok(())
    }
}

impl BinaryMask {
    /// An all-static mask.
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask has {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryMask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count_dynamic(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when no pixel is dynamic.
    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            bits: self.bits.iter().map(|&b| !b).collect(),
            ..*self
        }
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        ensure_dims(self.dims(), other.dims())?;
        Ok(BinaryMask {
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a | b).collect(),
            ..*self
        })
    }

    pub fn union_in_place(&mut self, other: &BinaryMask) -> Result<()> {
        ensure_dims(self.dims(), other.dims())?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    /// Every dynamic pixel of `self` is dynamic in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Raster indices of dynamic pixels.
    pub fn dynamic_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn to_gray_image(&self) -> GrayImage {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, data)
            .expect("buffer length matches dimensions")
    }
}

/// Per-pixel integer label raster, e.g. a semantic ground-truth image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u32>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != width * height {
            return Err(Error::Dimension(format!(
                "label image has {} values, expected {}",
                ids.len(),
                width * height
            )));
        }
        Ok(LabelImage { width, height, ids })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Last run of ASCII digits in the file stem, e.g. `frame_0042.png` -> 42.
pub fn parse_frame_index(path: &Path) -> Result<u32> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::FrameIndex(path.to_path_buf()))?;
    let bytes = stem.as_bytes();
    let end = bytes
        .iter()
        .rposition(u8::is_ascii_digit)
        .ok_or_else(|| Error::FrameIndex(path.to_path_buf()))?
        + 1;
    let start = bytes[..end]
        .iter()
        .rposition(|b| !b.is_ascii_digit())
        .map_or(0, |i| i + 1);
    stem[start..end]
        .parse()
        .map_err(|_| Error::FrameIndex(path.to_path_buf()))
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Decode {
            path: path.to_path_buf(),
            source,
        },
    })
}

/// Decodes a PNG or JPEG frame. The clip id is the parent directory name and
/// the frame index comes from the digits in the file name.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let frame_index = parse_frame_index(path)?;
    let clip_id = path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let rgb = decode(path)?.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Ok(Frame::from_rgb(clip_id, frame_index, w, h, rgb.into_raw())?.with_source(path))
}

fn save_image<P, C>(img: &ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Encode {
                path: path.to_path_buf(),
                source,
            },
        })
}

/// Writes a mask as an 8-bit gray PNG (0 static, 255 dynamic).
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_image(&mask.to_gray_image(), path.as_ref())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let bits = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| v > 127).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|v| v > 32767).collect(),
        other => other.into_luma8().into_raw().into_iter().map(|v| v > 127).collect(),
    };
    BinaryMask::from_bits(w, h, bits)
}

/// Writes an 8-bit gray PNG.
pub fn save_gray8(width: usize, height: usize, values: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let img = GrayImage::from_raw(width as u32, height as u32, values.to_vec())
        .ok_or_else(|| Error::Dimension("buffer does not match dimensions".into()))?;
    save_image(&img, path.as_ref())
}

/// Writes a 16-bit gray PNG; values above `u16::MAX` saturate.
pub fn save_gray16(
    width: usize,
    height: usize,
    values: impl IntoIterator<Item = u32>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let data: Vec<u16> = values
        .into_iter()
        .map(|v| v.min(u32::from(u16::MAX)) as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, data)
            .ok_or_else(|| Error::Dimension("buffer does not match dimensions".into()))?;
    save_image(&img, path.as_ref())
}

/// Reads an 8- or 16-bit single-channel label-id PNG without rescaling.
pub fn load_label_image(path: impl AsRef<Path>) -> Result<LabelImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let ids = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("expected single-channel labels, found {:?}", other.color()),
            })
        }
    };
    LabelImage::new(w, h, ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_of_primaries() {
        assert_eq!(luma(0, 0, 0), 0);
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(255, 0, 0), 76);
        for v in 0..=255u8 {
            assert_eq!(luma(v, v, v), v);
        }
    }

    #[test]
    fn grayscale_requires_color() {
        let f = Frame::from_gray("c", 0, 16, 16, vec![3; 256]).unwrap();
        assert!(matches!(to_grayscale(&f), Err(Error::MissingColor)));
    }

    #[test]
    fn rejects_small_frames() {
        assert!(matches!(
            Frame::from_gray("c", 0, 15, 16, vec![0; 15 * 16]),
            Err(Error::Dimension(_))
        ));
        assert!(Frame::from_gray("c", 0, 16, 16, vec![0; 10]).is_err());
    }

    #[test]
    fn frame_index_from_name() {
        assert_eq!(parse_frame_index(Path::new("a/frame_0042.png")).unwrap(), 42);
        assert_eq!(parse_frame_index(Path::new("x7_y_12.jpg")).unwrap(), 12);
        assert_eq!(parse_frame_index(Path::new("000.png")).unwrap(), 0);
        assert!(parse_frame_index(Path::new("frame.png")).is_err());
    }

    #[test]
    fn mask_set_ops() {
        let a = BinaryMask::from_fn(4, 4, |x, _| x < 2);
        let b = BinaryMask::from_fn(4, 4, |x, _| x < 3);
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
        assert_eq!(a.union(&b).unwrap(), b);
        assert_eq!(a.complement().count_dynamic(), 8);
        assert!(a.union(&BinaryMask::new(3, 4)).is_err());
    }
}
