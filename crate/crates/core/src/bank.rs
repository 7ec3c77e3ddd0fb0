//! Template banks: per-layer stacks of nominal feature sheets, their
//! on-disk layout and the `bank.json` manifest.
//!
//! On disk a bank is a directory holding one FTN file per (layer, sheet)
//! plus the manifest:
//!
//! ```text
//! BANK/bank.json
//! BANK/layer_1/sheet_00000.ftn
//! BANK/layer_1/sheet_00001.ftn
//! BANK/layer_2/...
//! ```
//!
//! Appending sheets only adds files and rewrites the manifest, so existing
//! sheet files are never touched.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{read_tensor, write_tensor, FeatureMap};

pub const MANIFEST_FILE: &str = "bank.json";
pub const LOCK_FILE: &str = "bank.lock";
pub const FORMAT_VERSION: u32 = 1;

/// Backbone hierarchy index of a feature layer.
pub type LayerId = u32;

/// All layer features of one image, keyed by layer id.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub id: String,
    pub layers: BTreeMap<LayerId, FeatureMap>,
}

impl ImageFeatures {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            layers: BTreeMap::new(),
        }
    }

    pub fn with_layer(mut self, layer: LayerId, map: FeatureMap) -> Self {
        self.layers.insert(layer, map);
        self
    }
}

/// OPTICS/selection parameters recorded for compressed banks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtsParams {
    #[serde(rename = "K")]
    pub k: usize,
    pub min_samples: usize,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub layer_id: LayerId,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "C")]
    pub channels: usize,
}

/// Contents of `bank.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankManifest {
    pub version: u32,
    pub layers: Vec<LayerShape>,
    pub sheets: usize,
    pub compressed: bool,
    pub pts: Option<PtsParams>,
    pub sources: Vec<String>,
    /// Set once sheets have been hot-appended; together with `compressed`
    /// this marks a compressed bank that has since grown.
    #[serde(default)]
    pub appended: bool,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

impl BankManifest {
    /// `"original"`, `"compressed"`, `"original+appended"` or `"compressed+appended"`.
    pub fn state(&self) -> &'static str {
        match (self.compressed, self.appended) {
            (false, false) => "original",
            (true, false) => "compressed",
            (false, true) => "original+appended",
            (true, true) => "compressed+appended",
        }
    }
}

/// Per-layer sheet stacks. At each pixel `(x, y)` of a layer the bank holds
/// the set `T_{x,y}` of N C-vectors, one per sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank {
    layers: BTreeMap<LayerId, Vec<FeatureMap>>,
    sources: Vec<String>,
    compressed: bool,
    appended: bool,
    pts: Option<PtsParams>,
}

impl TemplateBank {
    /// Assembles a bank from already-grouped per-layer sheets.
    pub fn from_layers(
        layers: BTreeMap<LayerId, Vec<FeatureMap>>,
        sources: Vec<String>,
        pts: Option<PtsParams>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("bank has no layers".into()));
        }
        let n = sources.len();
        for (id, sheets) in &layers {
            if sheets.is_empty() {
                return Err(Error::Empty(format!("layer {id} has no sheets")));
            }
            if sheets.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "layer {id} has {} sheets but {n} sources",
                    sheets.len()
                )));
            }
            let shape = sheets[0].shape();
            if let Some((i, s)) = sheets.iter().enumerate().find(|(_, s)| s.shape() != shape) {
                return Err(Error::ShapeMismatch(format!(
                    "layer {id}: sheet {i} is {:?}, sheet 0 is {shape:?}",
                    s.shape()
                )));
            }
        }
        Ok(Self {
            layers,
            sources,
            compressed: pts.is_some(),
            appended: false,
            pts,
        })
    }

    pub fn sheet_count(&self) -> usize {
        self.sources.len()
    }

    pub fn layer_ids(&self) -> impl Iterator<Item = LayerId> + '_ {
        self.layers.keys().copied()
    }

    pub fn layer(&self, id: LayerId) -> Option<&[FeatureMap]> {
        self.layers.get(&id).map(Vec::as_slice)
    }

    pub fn layers(&self) -> &BTreeMap<LayerId, Vec<FeatureMap>> {
        &self.layers
    }

    /// `(H, W, C)` of a layer.
    pub fn layer_shape(&self, id: LayerId) -> Option<(usize, usize, usize)> {
        self.layers.get(&id).map(|s| s[0].shape())
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn is_compressed(&self) -> bool {
        self.compressed
    }

    pub fn is_appended(&self) -> bool {
        self.appended
    }

    pub fn pts(&self) -> Option<PtsParams> {
        self.pts
    }

    /// Appends new sheets (hot update). Existing sheets are left untouched;
    /// a compressed bank stays compressed and is flagged as appended.
    pub fn append(&mut self, images: &[ImageFeatures]) -> Result<()> {
        if images.is_empty() {
            return Err(Error::Empty("no sheets to append".into()));
        }
        for img in images {
            self.check_image(img)?;
        }
        for img in images {
            for (id, sheets) in self.layers.iter_mut() {
                sheets.push(img.layers[id].clone());
            }
            self.sources.push(img.id.clone());
        }
        self.appended = true;
        Ok(())
    }

    fn check_image(&self, img: &ImageFeatures) -> Result<()> {
        let got: Vec<_> = img.layers.keys().collect();
        let want: Vec<_> = self.layers.keys().collect();
        if got != want {
            return Err(Error::ShapeMismatch(format!(
                "image {} has layers {got:?}, bank has {want:?}",
                img.id
            )));
        }
        for (id, map) in &img.layers {
            let shape = self.layer_shape(*id).unwrap();
            if map.shape() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "image {} layer {id} is {:?}, bank layer is {shape:?}",
                    img.id,
                    map.shape()
                )));
            }
        }
        Ok(())
    }

    /// Manifest describing this bank, stamped with the current time.
    pub fn manifest(&self) -> BankManifest {
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        BankManifest {
            version: FORMAT_VERSION,
            layers: self
                .layers
                .iter()
                .map(|(id, s)| {
                    let (h, w, c) = s[0].shape();
                    LayerShape {
                        layer_id: *id,
                        height: h,
                        width: w,
                        channels: c,
                    }
                })
                .collect(),
            sheets: self.sheet_count(),
            compressed: self.compressed,
            pts: self.pts,
            sources: self.sources.clone(),
            appended: self.appended,
            created,
        }
    }
}

/// Stage I: stacks the per-image features into an original bank. Sheet `i`
/// of every layer comes from `images[i]`.
pub fn build_bank(images: Vec<ImageFeatures>) -> Result<TemplateBank> {
    let first = images
        .first()
        .ok_or_else(|| Error::Empty("no images to build a bank from".into()))?;
    if first.layers.is_empty() {
        return Err(Error::Empty(format!("image {} has no layers", first.id)));
    }
    let ids: Vec<LayerId> = first.layers.keys().copied().collect();
    let mut layers: BTreeMap<LayerId, Vec<FeatureMap>> = ids
        .iter()
        .map(|id| (*id, Vec::with_capacity(images.len())))
        .collect();
    let mut sources = Vec::with_capacity(images.len());
    for img in images {
        let got: Vec<LayerId> = img.layers.keys().copied().collect();
        if got != ids {
            return Err(Error::ShapeMismatch(format!(
                "image {} has layers {got:?}, expected {ids:?}",
                img.id
            )));
        }
        for (id, map) in img.layers {
            let stack = layers.get_mut(&id).unwrap();
            if let Some(s0) = stack.first() {
                if s0.shape() != map.shape() {
                    return Err(Error::ShapeMismatch(format!(
                        "image {} layer {id} is {:?}, earlier images are {:?}",
                        img.id,
                        map.shape(),
                        s0.shape()
                    )));
                }
            }
            stack.push(map);
        }
        sources.push(img.id);
    }
    TemplateBank::from_layers(layers, sources, None)
}

fn sheet_path(dir: &Path, layer: LayerId, sheet: usize) -> PathBuf {
    dir.join(format!("layer_{layer}"))
        .join(format!("sheet_{sheet:05}.ftn"))
}

fn write_manifest(dir: &Path, manifest: &BankManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<BankManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: BankManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if m.version != FORMAT_VERSION {
        return Err(Error::Manifest(format!(
            "{}: unsupported bank version {}",
            path.display(),
            m.version
        )));
    }
    if m.sources.len() != m.sheets {
        return Err(Error::Manifest(format!(
            "{}: {} sheets but {} sources",
            path.display(),
            m.sheets,
            m.sources.len()
        )));
    }
    Ok(m)
}

/// Writes every sheet file and the manifest into `dir` (created if absent).
pub fn write_bank(dir: impl AsRef<Path>, bank: &TemplateBank) -> Result<BankManifest> {
    let dir = dir.as_ref();
    for (id, sheets) in &bank.layers {
        let ldir = dir.join(format!("layer_{id}"));
        fs::create_dir_all(&ldir).map_err(|e| Error::io(&ldir, e))?;
        for (k, sheet) in sheets.iter().enumerate() {
            write_tensor(sheet_path(dir, *id, k), sheet)?;
        }
    }
    let manifest = bank.manifest();
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Loads a bank, checking that every stored tensor matches the manifest.
pub fn load_bank(dir: impl AsRef<Path>) -> Result<TemplateBank> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let mut layers = BTreeMap::new();
    for ls in &m.layers {
        let mut sheets = Vec::with_capacity(m.sheets);
        for k in 0..m.sheets {
            let p = sheet_path(dir, ls.layer_id, k);
            let t = read_tensor(&p)?;
            if t.shape() != (ls.height, ls.width, ls.channels) {
                return Err(Error::Manifest(format!(
                    "{} is {:?} but manifest says {:?}",
                    p.display(),
                    t.shape(),
                    (ls.height, ls.width, ls.channels)
                )));
            }
            sheets.push(t);
        }
        layers.insert(ls.layer_id, sheets);
    }
    let mut bank = TemplateBank::from_layers(layers, m.sources, m.pts)?;
    bank.compressed = m.compressed;
    bank.appended = m.appended;
    Ok(bank)
}

/// Exclusive writer lock on a bank directory, released on drop.
#[derive(Debug)]
pub struct BankLock {
    path: PathBuf,
}

impl BankLock {
    pub fn acquire(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(LOCK_FILE);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.as_ref().into()))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for BankLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Hot update on disk: appends `images` as new sheets of the bank in `dir`
/// under the writer lock. Existing sheet files are not rewritten.
pub fn append_to_bank(dir: impl AsRef<Path>, images: &[ImageFeatures]) -> Result<TemplateBank> {
    let dir = dir.as_ref();
    let _lock = BankLock::acquire(dir)?;
    let mut bank = load_bank(dir)?;
    let first_new = bank.sheet_count();
    bank.append(images)?;
    for (id, sheets) in &bank.layers {
        for (k, sheet) in sheets.iter().enumerate().skip(first_new) {
            write_tensor(sheet_path(dir, *id, k), sheet)?;
        }
    }
    let mut manifest = bank.manifest();
    if let Ok(old) = read_manifest(dir) {
        manifest.created = old.created;
    }
    write_manifest(dir, &manifest)?;
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(id: &str, seed: f32, layers: &[(LayerId, usize, usize, usize)]) -> ImageFeatures {
        let mut img = ImageFeatures::new(id);
        for &(l, h, w, c) in layers {
            let data = (0..h * w * c).map(|i| seed + i as f32 * 0.25).collect();
            img.layers
                .insert(l, FeatureMap::new(h, w, c, data).unwrap());
        }
        img
    }

    #[test]
    fn single_image_two_layers() {
        let bank = build_bank(vec![image("a", 1.0, &[(1, 4, 4, 3), (2, 2, 2, 5)])]).unwrap();
        assert_eq!(bank.sheet_count(), 1);
        assert_eq!(bank.layer_ids().collect::<Vec<_>>(), vec![1, 2]);
        assert!(!bank.is_compressed());
        assert_eq!(bank.manifest().state(), "original");
    }

    #[test]
    fn sixty_images_give_sixty_sheets_in_order() {
        let imgs: Vec<_> = (0..60)
            .map(|i| image(&format!("img{i:02}"), i as f32, &[(1, 3, 3, 2)]))
            .collect();
        let bank = build_bank(imgs.clone()).unwrap();
        assert_eq!(bank.sheet_count(), 60);
        for (i, img) in imgs.iter().enumerate() {
            assert_eq!(bank.sources()[i], img.id);
            assert_eq!(&bank.layer(1).unwrap()[i], &img.layers[&1]);
        }
    }

    #[test]
    fn mismatched_widths_rejected() {
        let imgs = vec![
            image("a", 0.0, &[(1, 4, 4, 2), (2, 2, 2, 2)]),
            image("b", 0.0, &[(1, 4, 4, 2), (2, 2, 3, 2)]),
        ];
        assert!(matches!(build_bank(imgs), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn mismatched_layer_sets_rejected() {
        let imgs = vec![
            image("a", 0.0, &[(1, 4, 4, 2)]),
            image("b", 0.0, &[(2, 4, 4, 2)]),
        ];
        assert!(matches!(build_bank(imgs), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(build_bank(vec![]), Err(Error::Empty(_))));
    }

    #[test]
    fn disk_round_trip_and_manifest_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let bank = build_bank(vec![
            image("a", 0.0, &[(1, 4, 4, 3), (3, 2, 2, 6)]),
            image("b", 9.0, &[(1, 4, 4, 3), (3, 2, 2, 6)]),
        ])
        .unwrap();
        let m = write_bank(dir.path(), &bank).unwrap();
        assert_eq!(m.layers[1].channels, 6);
        let back = load_bank(dir.path()).unwrap();
        assert_eq!(back, bank);

        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in [
            "version",
            "layers",
            "sheets",
            "compressed",
            "pts",
            "sources",
        ] {
            assert!(v.get(key).is_some(), "manifest lacks {key}");
        }
        assert_eq!(v["layers"][0]["H"], 4);
        assert!(v["pts"].is_null());
    }

    #[test]
    fn load_detects_shape_drift() {
        let dir = tempfile::tempdir().unwrap();
        let bank = build_bank(vec![image("a", 0.0, &[(1, 2, 2, 2)])]).unwrap();
        write_bank(dir.path(), &bank).unwrap();
        write_tensor(
            sheet_path(dir.path(), 1, 0),
            &FeatureMap::zeros(2, 3, 2).unwrap(),
        )
        .unwrap();
        assert!(matches!(load_bank(dir.path()), Err(Error::Manifest(_))));
    }

    #[test]
    fn append_leaves_existing_files_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let bank = build_bank(vec![image("a", 0.0, &[(1, 3, 3, 2)])]).unwrap();
        write_bank(dir.path(), &bank).unwrap();
        let before = fs::read(sheet_path(dir.path(), 1, 0)).unwrap();
        let grown = append_to_bank(dir.path(), &[image("b", 5.0, &[(1, 3, 3, 2)])]).unwrap();
        assert_eq!(grown.sheet_count(), 2);
        assert_eq!(fs::read(sheet_path(dir.path(), 1, 0)).unwrap(), before);
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m.sources, vec!["a", "b"]);
        assert_eq!(m.state(), "original+appended");
        assert!(!dir.path().join(LOCK_FILE).exists());
    }

    #[test]
    fn append_rejects_shape_mismatch_and_lock_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let bank = build_bank(vec![image("a", 0.0, &[(1, 3, 3, 2)])]).unwrap();
        write_bank(dir.path(), &bank).unwrap();
        assert!(matches!(
            append_to_bank(dir.path(), &[image("b", 0.0, &[(1, 3, 4, 2)])]),
            Err(Error::ShapeMismatch(_))
        ));
        let _held = BankLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            append_to_bank(dir.path(), &[image("b", 0.0, &[(1, 3, 3, 2)])]),
            Err(Error::Locked(_))
        ));
    }
}
