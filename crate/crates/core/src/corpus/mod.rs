//! Datasets on disk and in memory, line conversion, subsetting and augmentation.

mod augment;
mod cue;
mod image;
mod line;
mod subset;
pub mod synth;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use self::cue::{load_cue_conflict, write_cue_conflict, CueEntry, CueManifest, CUE_MANIFEST_FILE};
pub use self::augment::{augment, eval_view, resize, AugmentationPolicy};
pub use self::image::{replicate_gray, Domain, ImageBatch, LabeledImage};
pub use self::line::{gaussian_blur, gaussian_kernel, to_line_drawing, xdog, XdogParams};
pub use self::subset::{check_fraction, kept_count, subset_indices};
pub use self::synth::CueConflictItem;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sidecar file written at the dataset root.
pub const SIDECAR_FILE: &str = "manifest.toml";
pub const SPLITS: [&str; 2] = ["train", "test"];
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    /// Path relative to the dataset root, `/`-separated.
    pub path: String,
    pub label: usize,
    pub domain: Domain,
}

impl Item {
    /// `split/class/stem`, unchanged by conversions that keep file names.
    pub fn source_id(&self) -> String {
        let p = Path::new(&self.path);
        p.with_extension("").to_string_lossy().replace('\\', "/")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub class_names: Vec<String>,
    pub domain: Domain,
    pub splits: BTreeMap<String, Vec<Item>>,
    pub fraction: f64,
    pub subset_seed: u64,
    pub converter_params: Option<XdogParams>,
}

impl DatasetManifest {
    pub fn split(&self, split: &str) -> &[Item] {
        self.splits.get(split).map_or(&[], |v| v.as_slice())
    }

    pub fn class_counts(&self, split: &str) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for item in self.split(split) {
            counts[item.label] += 1;
        }
        counts
    }

    /// Keeps a stratified seeded subset of the training split; other splits are untouched.
    pub fn stratified_subset(&self, fraction: f64, seed: u64) -> Result<DatasetManifest> {
        let train = self.split("train");
        let labels: Vec<usize> = train.iter().map(|i| i.label).collect();
        let keep = subset_indices(&labels, fraction, seed)?;
        let mut out = self.clone();
        out.splits.insert("train".into(), keep.into_iter().map(|i| train[i].clone()).collect());
        out.fraction = fraction;
        out.subset_seed = seed;
        Ok(out)
    }
}

/// Sidecar layout: metadata plus per-split per-class counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub name: String,
    pub classes: Vec<String>,
    pub domain: Domain,
    pub fraction: f64,
    pub subset_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converter_params: Option<XdogParams>,
    pub splits: BTreeMap<String, Vec<usize>>,
}

impl Sidecar {
    pub fn read(root: &Path) -> Result<Option<Sidecar>> {
        let path = root.join(SIDECAR_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map(Some).map_err(|e| Error::format(&path, e.to_string()))
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(SIDECAR_FILE);
        let text = toml::to_string(self).map_err(|e| Error::format(&path, e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn is_image(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Indexes `<root>/<split>/<class>/<image>` for the train and test splits.
///
/// Class indices follow the lexicographic order of the class directories and
/// items are ordered lexicographically by path. The domain and subset metadata
/// come from the sidecar when present, otherwise COLOR at fraction 1.
pub fn load_dataset(root: &Path, expected_classes: usize) -> Result<DatasetManifest> {
    let sidecar = Sidecar::read(root)?;
    let mut class_names: Option<Vec<String>> = None;
    let mut splits = BTreeMap::new();
    let domain = sidecar.as_ref().map_or(Domain::Color, |s| s.domain.clone());
    for split in SPLITS {
        let dir = root.join(split);
        if !dir.is_dir() {
            return Err(Error::MissingData(format!("{} has no `{split}` split", root.display())));
        }
        let mut class_dirs: Vec<PathBuf> = sorted_entries(&dir)?.into_iter().filter(|p| p.is_dir()).collect();
        // Labels follow the sidecar's class order when there is one.
        if let Some(s) = &sidecar {
            let mut ordered = Vec::with_capacity(s.classes.len());
            for name in &s.classes {
                match class_dirs.iter().position(|p| p.file_name().is_some_and(|f| f.to_string_lossy() == *name)) {
                    Some(i) => ordered.push(class_dirs.swap_remove(i)),
                    None => {
                        return Err(Error::MissingData(format!("class `{name}` has no folder in split `{split}` under {}", root.display())))
                    }
                }
            }
            if let Some(extra) = class_dirs.first() {
                return Err(Error::InvalidParams(format!("class folder {} is not listed in {SIDECAR_FILE}", extra.display())));
            }
            class_dirs = ordered;
        }
        if class_dirs.is_empty() {
            return Err(Error::MissingData(format!("split `{split}` under {} is empty", root.display())));
        }
        if class_dirs.len() != expected_classes {
            return Err(Error::ClassMismatch { found: class_dirs.len(), expected: expected_classes });
        }
        let names: Vec<String> =
            class_dirs.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        match &class_names {
            None => class_names = Some(names),
            Some(known) if *known != names => {
                return Err(Error::InvalidParams(format!("split `{split}` has classes {names:?}, expected {known:?}")));
            }
            Some(_) => {}
        }
        let mut items = Vec::new();
        for (label, class_dir) in class_dirs.iter().enumerate() {
            for file in sorted_entries(class_dir)?.into_iter().filter(|p| is_image(p)) {
                let rel = file.strip_prefix(root).expect("entry under root");
                let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                items.push(Item { path, label, domain: domain.clone() });
            }
        }
        if items.is_empty() {
            return Err(Error::MissingData(format!("split `{split}` under {} holds no images", root.display())));
        }
        items.sort_by(|a, b| a.path.cmp(&b.path));
        splits.insert(split.to_string(), items);
    }
    let dir_name = root.file_name().map_or_else(|| "dataset".to_string(), |n| n.to_string_lossy().into_owned());
    Ok(DatasetManifest {
        name: sidecar.as_ref().map_or(dir_name, |s| s.name.clone()),
        class_names: class_names.unwrap_or_default(),
        domain,
        splits,
        fraction: sidecar.as_ref().map_or(1.0, |s| s.fraction),
        subset_seed: sidecar.as_ref().map_or(0, |s| s.subset_seed),
        converter_params: sidecar.and_then(|s| s.converter_params),
    })
}

/// Number of classes of a dataset root: the sidecar's class list when present, else the train class directories.
pub fn discover_classes(root: &Path) -> Result<usize> {
    if let Some(s) = Sidecar::read(root)? {
        return Ok(s.classes.len());
    }
    let dir = root.join("train");
    if !dir.is_dir() {
        return Err(Error::MissingData(format!("{} has no `train` split", root.display())));
    }
    Ok(sorted_entries(&dir)?.into_iter().filter(|p| p.is_dir()).count())
}

/// Every image under `dir`, recursively, in path order. Labels are 0 and source
/// ids are the relative paths without extension.
pub fn load_image_folder<T: Scalar>(dir: &Path, domain: Domain) -> Result<Vec<LabeledImage<T>>> {
    if !dir.is_dir() {
        return Err(Error::MissingData(format!("{} is not a directory", dir.display())));
    }
    let mut out = Vec::new();
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir) {
        let entry = entry.map_err(|e| Error::MissingData(e.to_string()))?;
        if is_image(entry.path()) {
            files.push(entry.into_path());
        }
    }
    files.sort();
    for file in files {
        let rel = file.strip_prefix(dir).expect("entry under dir").with_extension("");
        let id = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        out.push(read_image(&file, 0, domain.clone(), id)?);
    }
    Ok(out)
}

/// Decodes one image file to `[0, 1]` RGB.
pub fn read_image<T: Scalar>(path: &Path, label: usize, domain: Domain, source_id: String) -> Result<LabeledImage<T>> {
    let img = ::image::open(path).map_err(|e| Error::Image { path: path.to_path_buf(), source: e })?.to_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img.into_raw().into_iter().map(|b| T::lit(b as f64 / 255.0)).collect();
    Ok(LabeledImage::new(h as usize, w as usize, pixels, label, domain, source_id))
}

/// Encodes an image as an 8-bit PNG.
pub fn write_image<T: Scalar>(path: &Path, image: &LabeledImage<T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let bytes: Vec<u8> = image.pixels.iter().map(|&v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = ::image::RgbImage::from_raw(image.width as u32, image.height as u32, bytes).expect("pixel buffer size");
    buf.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), source: e })
}

/// Loads every image of one split, in manifest order.
pub fn load_images<T: Scalar>(root: &Path, manifest: &DatasetManifest, split: &str) -> Result<Vec<LabeledImage<T>>> {
    manifest
        .split(split)
        .iter()
        .map(|item| read_image(&root.join(&item.path), item.label, item.domain.clone(), item.source_id()))
        .collect()
}

/// An in-memory labelled corpus with train and test splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub name: String,
    pub class_names: Vec<String>,
    pub domain: Domain,
    pub train: Vec<LabeledImage<T>>,
    pub test: Vec<LabeledImage<T>>,
    pub fraction: f64,
    pub subset_seed: u64,
    pub converter_params: Option<XdogParams>,
}

impl<T: Scalar> Dataset<T> {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn load(root: &Path, expected_classes: usize) -> Result<Self> {
        let manifest = load_dataset(root, expected_classes)?;
        Ok(Dataset {
            train: load_images(root, &manifest, "train")?,
            test: load_images(root, &manifest, "test")?,
            name: manifest.name,
            class_names: manifest.class_names,
            domain: manifest.domain,
            fraction: manifest.fraction,
            subset_seed: manifest.subset_seed,
            converter_params: manifest.converter_params,
        })
    }

    /// Writes PNGs under the standard layout plus the sidecar; file stems are the source ids.
    pub fn save(&self, root: &Path) -> Result<()> {
        let mut splits = BTreeMap::new();
        for (split, images) in [("train", &self.train), ("test", &self.test)] {
            let mut counts = vec![0; self.num_classes()];
            for class in &self.class_names {
                let dir = root.join(split).join(class);
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
            for img in images {
                let stem = img.source_id.rsplit('/').next().unwrap_or(&img.source_id);
                let path = root.join(split).join(&self.class_names[img.label]).join(format!("{stem}.png"));
                write_image(&path, img)?;
                counts[img.label] += 1;
            }
            splits.insert(split.to_string(), counts);
        }
        Sidecar {
            name: self.name.clone(),
            classes: self.class_names.clone(),
            domain: self.domain.clone(),
            fraction: self.fraction,
            subset_seed: self.subset_seed,
            converter_params: self.converter_params,
            splits,
        }
        .write(root)
    }

    /// Stratified seeded subset of the training split.
    pub fn subset(&self, fraction: f64, seed: u64) -> Result<Self> {
        let labels: Vec<usize> = self.train.iter().map(|i| i.label).collect();
        let keep = subset_indices(&labels, fraction, seed)?;
        Ok(Dataset {
            train: keep.into_iter().map(|i| self.train[i].clone()).collect(),
            fraction,
            subset_seed: seed,
            ..self.clone()
        })
    }

    /// Line-converts both splits.
    pub fn to_line(&self, params: &XdogParams) -> Result<Self> {
        let convert = |v: &[LabeledImage<T>]| v.iter().map(|i| to_line_drawing(i, params)).collect::<Result<Vec<_>>>();
        Ok(Dataset {
            name: format!("{}-line", self.name),
            domain: Domain::Line,
            train: convert(&self.train)?,
            test: convert(&self.test)?,
            converter_params: Some(*params),
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(label: usize, domain: Domain, id: &str, v: f64) -> LabeledImage<f32> {
        LabeledImage::new(2, 3, vec![v as f32; 18], label, domain, id)
    }

    #[test]
    fn manifest_subset_touches_train_only() {
        let mk = |n: usize, split: &str| -> Vec<Item> {
            (0..n).map(|i| Item { path: format!("{split}/c{}/{i:03}.png", i % 2), label: i % 2, domain: Domain::Color }).collect()
        };
        let m = DatasetManifest {
            name: "x".into(),
            class_names: vec!["c0".into(), "c1".into()],
            domain: Domain::Color,
            splits: [("train".to_string(), mk(20, "train")), ("test".to_string(), mk(6, "test"))].into(),
            fraction: 1.0,
            subset_seed: 0,
            converter_params: None,
        };
        let s = m.stratified_subset(0.3, 5).unwrap();
        assert_eq!(s.class_counts("train"), vec![3, 3]);
        assert_eq!(s.split("test"), m.split("test"));
        assert_eq!((s.fraction, s.subset_seed), (0.3, 5));
        assert_eq!(m.split("train")[4].source_id(), "train/c0/004");
    }

    #[test]
    fn dataset_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset {
            name: "toy".into(),
            class_names: vec!["a".into(), "b".into()],
            domain: Domain::Line,
            train: vec![tiny(0, Domain::Line, "train/a/0", 1.0), tiny(1, Domain::Line, "train/b/1", 0.2)],
            test: vec![tiny(1, Domain::Line, "test/b/2", 0.6)],
            fraction: 1.0,
            subset_seed: 0,
            converter_params: Some(XdogParams::default()),
        };
        ds.save(dir.path()).unwrap();
        let back = Dataset::<f32>::load(dir.path(), 2).unwrap();
        assert_eq!(back.domain, Domain::Line);
        assert_eq!(back.converter_params, Some(XdogParams::default()));
        assert_eq!(back.train.len(), 2);
        assert_eq!(back.train[1].source_id, "train/b/1");
        assert!((back.train[1].pixels[0] - 51.0 / 255.0).abs() < 1e-7);
        assert!(matches!(load_dataset(dir.path(), 3), Err(Error::ClassMismatch { found: 2, expected: 3 })));
    }
}
