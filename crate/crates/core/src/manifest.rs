//! Feature manifests: the JSON index that lists, per image, one FTN file per
//! layer plus the source image resolution (and optionally a ground-truth
//! mask and label). Paths are relative to the manifest's directory.
//!
//! ```json
//! {
//!   "version": 1,
//!   "images": [
//!     { "id": "good_000", "image_size": [256, 256],
//!       "layers": { "1": "good_000.l1.ftn", "2": "good_000.l2.ftn" },
//!       "mask": "masks/good_000.ftn", "label": "normal" }
//!   ]
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bank::{ImageFeatures, LayerId};
use crate::error::{Error, Result};
use crate::evaluation::Label;
use crate::tensor::{read_tensor, write_tensor, FeatureMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    /// Source image resolution `[height, width]`; the default output
    /// resolution for aggregated maps.
    pub image_size: [usize; 2],
    pub layers: BTreeMap<LayerId, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub version: u32,
    pub images: Vec<ImageEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl FeatureManifest {
    pub fn new(root: impl Into<PathBuf>, images: Vec<ImageEntry>) -> Self {
        Self {
            version: 1,
            images,
            root: root.into(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.into()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: FeatureManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for img in &m.images {
            validate_id(&img.id)?;
            if img.layers.is_empty() {
                return Err(Error::Manifest(format!("image {} lists no layers", img.id)));
            }
            if img.image_size[0] == 0 || img.image_size[1] == 0 {
                return Err(Error::Manifest(format!(
                    "image {} has a zero image_size",
                    img.id
                )));
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// Loads every layer tensor of one entry.
    pub fn load_image(&self, entry: &ImageEntry) -> Result<ImageFeatures> {
        let mut img = ImageFeatures::new(entry.id.clone());
        for (layer, rel) in &entry.layers {
            img.layers.insert(*layer, read_tensor(self.resolve(rel))?);
        }
        Ok(img)
    }

    pub fn load_all(&self) -> Result<Vec<ImageFeatures>> {
        self.images.iter().map(|e| self.load_image(e)).collect()
    }
}

/// Image ids double as file stems in score output.
pub fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\', '\0']) {
        return Err(Error::Manifest(format!("invalid image id {id:?}")));
    }
    Ok(())
}

/// Writes each image's layers as `<dir>/<id>.l<layer>.ftn` and returns the
/// manifest describing them (saved as `<dir>/<name>`).
pub fn write_feature_set(
    dir: impl AsRef<Path>,
    name: &str,
    images: &[(ImageFeatures, [usize; 2])],
) -> Result<FeatureManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(images.len());
    for (img, size) in images {
        validate_id(&img.id)?;
        let mut layers = BTreeMap::new();
        for (layer, map) in &img.layers {
            let rel = PathBuf::from(format!("{}.l{layer}.ftn", img.id));
            write_tensor(dir.join(&rel), map)?;
            layers.insert(*layer, rel);
        }
        entries.push(ImageEntry {
            id: img.id.clone(),
            image_size: *size,
            layers,
            mask: None,
            label: None,
        });
    }
    let m = FeatureManifest::new(dir, entries);
    m.write(dir.join(name))?;
    Ok(m)
}

/// Writes a binary mask as a single-channel FTN with values 0/1.
pub fn write_mask(path: impl AsRef<Path>, height: usize, width: usize, set: &[bool]) -> Result<()> {
    let data = set.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
    write_tensor(path, &FeatureMap::new(height, width, 1, data)?)
}
