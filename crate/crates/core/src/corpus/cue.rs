//! Cue-conflict image folders: images plus a JSON manifest of (shape, texture) classes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::CueConflictItem;
use super::{read_image, write_image, Domain};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CUE_MANIFEST_FILE: &str = "cue_manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueEntry {
    /// Image path relative to the folder, `/`-separated.
    pub file: String,
    pub shape_class: String,
    pub texture_class: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueManifest {
    /// Benchmark class names; items refer to them by name.
    pub classes: Vec<String>,
    pub items: Vec<CueEntry>,
}

/// Writes `items` as PNGs under `dir` with a manifest naming classes from `classes`.
pub fn write_cue_conflict<T: Scalar>(dir: &Path, classes: &[String], items: &[CueConflictItem<T>]) -> Result<()> {
    let mut entries = Vec::with_capacity(items.len());
    for item in items {
        let (shape, texture) = (item.shape_class, item.texture_class);
        if shape >= classes.len() || texture >= classes.len() {
            return Err(Error::InvalidParams(format!("cue item class out of range for {} classes", classes.len())));
        }
        let file = format!("{}.png", item.image.source_id.replace('\\', "/"));
        write_image(&dir.join(&file), &item.image)?;
        entries.push(CueEntry { file, shape_class: classes[shape].clone(), texture_class: classes[texture].clone() });
    }
    let manifest = CueManifest { classes: classes.to_vec(), items: entries };
    let path = dir.join(CUE_MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads a cue-conflict folder. Returns the benchmark class names and the items in manifest order.
pub fn load_cue_conflict<T: Scalar>(dir: &Path) -> Result<(Vec<String>, Vec<CueConflictItem<T>>)> {
    let path = dir.join(CUE_MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingData(format!("no {CUE_MANIFEST_FILE} in {}", dir.display())));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CueManifest = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    let index = |name: &str| {
        manifest
            .classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::format(&path, format!("unknown class `{name}`")))
    };
    let mut items = Vec::with_capacity(manifest.items.len());
    for e in &manifest.items {
        let (shape, texture) = (index(&e.shape_class)?, index(&e.texture_class)?);
        if shape == texture {
            return Err(Error::format(&path, format!("`{}` has matching shape and texture", e.file)));
        }
        let id = e.file.rsplit_once('.').map_or(e.file.as_str(), |(stem, _)| stem).to_string();
        let image = read_image(&dir.join(&e.file), shape, Domain::Color, id)?;
        items.push(CueConflictItem { image, shape_class: shape, texture_class: texture });
    }
    Ok((manifest.classes.clone(), items))
}
