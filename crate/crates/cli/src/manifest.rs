//! Training-set manifest written by `extract`: a minimal COCO-like JSON file
//! with images, per-instance annotations (box + mask file) and a single
//! `dynamic` category.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DYNAMIC_CATEGORY_ID: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u64,
    /// Source frame path as found under the input root.
    pub file_name: String,
    pub clip_id: String,
    pub frame_index: u32,
    pub width: usize,
    pub height: usize,
    /// Union mask, relative to the output root.
    pub mask_file: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub instance_id: u32,
    pub category_id: u32,
    /// Instance mask, relative to the output root.
    pub mask_file: String,
    /// `[x, y, width, height]`.
    pub bbox: [usize; 4],
    pub area: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub categories: Vec<Category>,
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<Annotation>,
}

impl Default for ExportManifest {
    fn default() -> Self {
        ExportManifest {
            categories: vec![Category {
                id: DYNAMIC_CATEGORY_ID,
                name: "dynamic".into(),
            }],
            images: Vec::new(),
            annotations: Vec::new(),
        }
    }
}

impl ExportManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(path, json + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<ExportManifest, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
