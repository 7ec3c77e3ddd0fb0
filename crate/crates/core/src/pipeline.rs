//! End-to-end runs: bank building, compression, query scoring, evaluation
//! and hot update, driven by feature manifests and a JSON run config.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bank::{append_to_bank, build_bank, load_bank, write_bank, LayerId, TemplateBank};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalRecord, Label, Mask, Metrics};
use crate::manifest::{validate_id, FeatureManifest};
use crate::matching::{
    aggregate_layers, AnomalyMap, BankIndex, LayerMatch, MatchConfig, PatchSpec,
};
use crate::postprocess::{image_score, normalize01, PostConfig};
use crate::selection::{pts_compress, PtsConfig};
use crate::tensor::{read_tensor, write_tensor};

pub const SCORES_FILE: &str = "scores.csv";
pub const RUN_LOG_FILE: &str = "run.jsonl";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

/// Named hyper-parameter bundles for the supported benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    MvtecAd,
    Mtd,
    Mstc,
    MvtecLoco,
    Custom,
}

impl Preset {
    /// `(layers, square patch sizes, alpha)`; `None` for `Custom`.
    pub fn expand(self) -> Option<(Vec<LayerId>, Vec<usize>, f32)> {
        match self {
            Preset::MvtecAd => Some((vec![1, 2, 3], vec![9, 7, 5], 0.8)),
            Preset::Mtd => Some((vec![1, 2], vec![3, 3], 0.8)),
            Preset::Mstc => Some((vec![2, 3], vec![9, 5], 0.8)),
            Preset::MvtecLoco => Some((vec![2, 3, 4], vec![11, 9, 7], 0.6)),
            Preset::Custom => None,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(json!(s)).map_err(|_| Error::Config(format!("unknown preset {s:?}")))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("custom"))
    }
}

/// A patch given either as one odd side or as `[m, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatchSize {
    Square(usize),
    Rect([usize; 2]),
}

impl PatchSize {
    fn spec(self) -> Result<PatchSpec> {
        match self {
            PatchSize::Square(s) => PatchSpec::square(s),
            PatchSize::Rect([m, n]) => PatchSpec::new(m, n),
        }
    }
}

/// Contents of the `--config` JSON file. Unset fields come from the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub layers: Option<Vec<LayerId>>,
    #[serde(default)]
    pub patches: Option<Vec<PatchSize>>,
    #[serde(default)]
    pub alpha: Option<f32>,
    #[serde(default)]
    pub output_resolution: Option<[usize; 2]>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub truncate: Option<f64>,
    #[serde(default)]
    pub pts: Option<PtsConfig>,
}

/// Fully resolved hyper-parameters for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub matching: MatchConfig,
    pub post: PostConfig,
    pub pts: Option<PtsConfig>,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Result<Self> {
        ConfigFile {
            preset: Some(preset),
            ..Default::default()
        }
        .resolve()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::read_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Parses and resolves config JSON held in memory.
    pub fn read_str(text: &str) -> Result<Self> {
        let file: ConfigFile =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.resolve()
    }
}

impl ConfigFile {
    /// Expands the preset (default `mvtec_ad`) and applies overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let preset = self.preset.unwrap_or(Preset::MvtecAd);
        let base = preset.expand();
        let layers = match (&self.layers, &base) {
            (Some(l), _) => l.clone(),
            (None, Some((l, _, _))) => l.clone(),
            (None, None) => return Err(Error::Config("custom preset needs \"layers\"".into())),
        };
        let patches: Vec<PatchSize> = match (&self.patches, &base) {
            (Some(p), _) => p.clone(),
            (None, Some((_, p, _))) if self.layers.is_none() => {
                p.iter().map(|s| PatchSize::Square(*s)).collect()
            }
            _ => {
                return Err(Error::Config(
                    "\"patches\" must be given with custom layers".into(),
                ))
            }
        };
        if patches.len() != layers.len() {
            return Err(Error::Config(format!(
                "{} layers but {} patch sizes",
                layers.len(),
                patches.len()
            )));
        }
        let alpha = self.alpha.or(base.as_ref().map(|b| b.2)).unwrap_or(0.8);
        let matching = MatchConfig {
            layers: layers
                .iter()
                .zip(&patches)
                .map(|(l, p)| {
                    Ok(LayerMatch {
                        layer_id: *l,
                        patch: p.spec()?,
                    })
                })
                .collect::<Result<_>>()?,
            alpha,
            output_resolution: self.output_resolution.map(|[h, w]| (h, w)),
        };
        matching.validate()?;
        let defaults = PostConfig::default();
        let post = PostConfig {
            sigma: self.sigma.unwrap_or(defaults.sigma),
            truncate: self.truncate.unwrap_or(defaults.truncate),
        };
        post.validate()?;
        Ok(RunConfig {
            preset,
            matching,
            post,
            pts: self.pts,
        })
    }
}

/// Append-only JSON-lines diagnostics log.
pub struct RunLog {
    out: BufWriter<File>,
    path: PathBuf,
}

impl RunLog {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path,
        })
    }

    pub fn event(&mut self, value: serde_json::Value) -> Result<()> {
        serde_json::to_writer(&mut self.out, &value).map_err(|e| Error::json(&self.path, e))?;
        self.out
            .write_all(b"\n")
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Stage I on disk: builds the original bank from a feature manifest.
pub fn run_build(manifest: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<TemplateBank> {
    let m = FeatureManifest::read(manifest)?;
    if m.images.is_empty() {
        return Err(Error::Empty("build manifest lists no images".into()));
    }
    let bank = build_bank(m.load_all()?)?;
    write_bank(out, &bank)?;
    Ok(bank)
}

/// Compresses the bank in `bank_dir` and writes the result to `out`.
pub fn run_compress(
    bank_dir: impl AsRef<Path>,
    cfg: &PtsConfig,
    out: impl AsRef<Path>,
) -> Result<TemplateBank> {
    let bank = load_bank(bank_dir)?;
    let tiny = pts_compress(&bank, cfg)?;
    write_bank(out, &tiny)?;
    Ok(tiny)
}

/// Hot update: appends the images of `add_manifest` to the bank on disk.
pub fn run_update(
    bank_dir: impl AsRef<Path>,
    add_manifest: impl AsRef<Path>,
) -> Result<TemplateBank> {
    let m = FeatureManifest::read(add_manifest)?;
    append_to_bank(bank_dir, &m.load_all()?)
}

/// Result of scoring one query image.
#[derive(Debug, Clone)]
pub struct ScoredImage {
    pub id: String,
    /// Maximum of the blurred aggregated map.
    pub score: f32,
    /// Aggregated map before normalization.
    pub raw: AnomalyMap,
    /// `raw` scaled to `[0, 1]`.
    pub map: AnomalyMap,
}

/// Scores one query (already loaded) against an indexed bank.
pub fn score_image(
    index: &BankIndex<'_>,
    cfg: &RunConfig,
    query: &crate::bank::ImageFeatures,
    image_size: (usize, usize),
    log: Option<&mut RunLog>,
) -> Result<ScoredImage> {
    let mut maps = Vec::with_capacity(cfg.matching.layers.len());
    let mut layer_log = Vec::new();
    for lm in &cfg.matching.layers {
        let layer = index
            .layer(lm.layer_id)
            .ok_or_else(|| Error::Config(format!("layer {} is not in the bank", lm.layer_id)))?;
        let q = query.layers.get(&lm.layer_id).ok_or_else(|| {
            Error::ShapeMismatch(format!("query {} lacks layer {}", query.id, lm.layer_id))
        })?;
        let t0 = Instant::now();
        let s = layer.hetmm_detailed(q, lm.patch, cfg.matching.alpha)?;
        layer_log.push(json!({
            "layer": lm.layer_id,
            "ms": t0.elapsed().as_secs_f64() * 1e3,
            "zero_query_vectors": s.zero_query_vectors,
            "zero_template_vectors": s.zero_template_vectors,
        }));
        maps.push(s.mixed);
    }
    let xi = cfg.matching.output_resolution.unwrap_or(image_size);
    let raw = aggregate_layers(&maps, xi)?;
    let score = image_score(&raw, &cfg.post)?;
    if let Some(log) = log {
        log.event(json!({
            "event": "score",
            "id": query.id,
            "score": score,
            "resolution": [xi.0, xi.1],
            "layers": layer_log,
        }))?;
    }
    Ok(ScoredImage {
        id: query.id.clone(),
        score,
        map: normalize01(&raw),
        raw,
    })
}

/// Stage II on disk. A `pts` entry in the config compresses the bank in
/// memory first. For each query writes `<id>.map.ftn` (normalized
/// localization map) and `<id>.raw.ftn` (aggregated map), plus
/// `scores.csv`, `run.jsonl` and the resolved config.
pub fn run_score(
    bank_dir: impl AsRef<Path>,
    cfg: &RunConfig,
    queries: impl AsRef<Path>,
    out: impl AsRef<Path>,
) -> Result<Vec<ScoredImage>> {
    let out = out.as_ref();
    let mut bank = load_bank(bank_dir)?;
    if let Some(pts) = &cfg.pts {
        bank = pts_compress(&bank, pts)?;
    }
    cfg.matching.validate_against(&bank)?;
    let m = FeatureManifest::read(queries)?;
    if m.images.is_empty() {
        return Err(Error::Empty("query manifest lists no images".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let resolved = out.join(RESOLVED_CONFIG_FILE);
    fs::write(
        &resolved,
        serde_json::to_string_pretty(cfg).map_err(|e| Error::json(&resolved, e))? + "\n",
    )
    .map_err(|e| Error::io(&resolved, e))?;

    let mut log = RunLog::create(out.join(RUN_LOG_FILE))?;
    log.event(json!({
        "event": "config",
        "preset": cfg.preset.to_string(),
        "resolved": cfg,
        "bank_sheets": bank.sheet_count(),
        "bank_state": bank.manifest().state(),
    }))?;
    let index = BankIndex::new(&bank)?;
    let mut results = Vec::with_capacity(m.images.len());
    for entry in &m.images {
        let query = m.load_image(entry)?;
        let size = (entry.image_size[0], entry.image_size[1]);
        let scored = score_image(&index, cfg, &query, size, Some(&mut log))?;
        write_tensor(
            out.join(format!("{}.map.ftn", scored.id)),
            &scored.map.to_feature_map(),
        )?;
        write_tensor(
            out.join(format!("{}.raw.ftn", scored.id)),
            &scored.raw.to_feature_map(),
        )?;
        results.push(scored);
    }
    log.flush()?;
    let csv = out.join(SCORES_FILE);
    let mut text = String::from("image_id,score\n");
    for r in &results {
        text.push_str(&format!("{},{}\n", r.id, r.score));
    }
    fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
    Ok(results)
}

/// Reads `scores.csv` from a score output directory.
pub fn read_scores(dir: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = dir.as_ref().join(SCORES_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (id, score) = line.rsplit_once(',').ok_or_else(|| {
            Error::Manifest(format!("{}:{}: expected id,score", path.display(), n + 1))
        })?;
        let score: f64 = score.trim().parse().map_err(|_| {
            Error::Manifest(format!("{}:{}: bad score {score:?}", path.display(), n + 1))
        })?;
        validate_id(id)?;
        out.push((id.to_string(), score));
    }
    Ok(out)
}

/// Pairs the score output in `scores_dir` with ground-truth masks
/// `<truth_dir>/<id>.ftn` (single channel, values 0/1). An image is
/// anomalous when its mask has any set pixel.
pub fn load_eval_record(
    scores_dir: impl AsRef<Path>,
    truth_dir: impl AsRef<Path>,
) -> Result<EvalRecord> {
    let scores_dir = scores_dir.as_ref();
    let truth_dir = truth_dir.as_ref();
    let mut record = EvalRecord::default();
    for (id, score) in read_scores(scores_dir)? {
        let raw =
            AnomalyMap::from_feature_map(&read_tensor(scores_dir.join(format!("{id}.raw.ftn")))?)?;
        let mask = Mask::from_map(&AnomalyMap::from_feature_map(&read_tensor(
            truth_dir.join(format!("{id}.ftn")),
        )?)?)?;
        if mask.height() != raw.height() || mask.width() != raw.width() {
            return Err(Error::ShapeMismatch(format!(
                "image {id}: map {}x{} vs mask {}x{}",
                raw.height(),
                raw.width(),
                mask.height(),
                mask.width()
            )));
        }
        let label = if mask.any() {
            Label::Anomalous
        } else {
            Label::Normal
        };
        record.image_scores.push((score, label));
        record.pixels.push((raw, mask));
    }
    Ok(record)
}

/// Computes metrics for a score directory and writes them as JSON; with
/// `curves_dir` also dumps `roc.csv`, `pro.csv`, `iou.csv`, `pr.csv`.
pub fn run_evaluate(
    scores_dir: impl AsRef<Path>,
    truth_dir: impl AsRef<Path>,
    out: impl AsRef<Path>,
    curves_dir: Option<&Path>,
    cap: f64,
    steps: usize,
) -> Result<Metrics> {
    let record = load_eval_record(scores_dir, truth_dir)?;
    let metrics = evaluate(&record, cap, steps)?;
    let out = out.as_ref();
    let text = serde_json::to_string_pretty(&metrics).map_err(|e| Error::json(out, e))?;
    fs::write(out, text + "\n").map_err(|e| Error::io(out, e))?;
    if let Some(dir) = curves_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let c = &metrics.curves;
        for (name, pts, header) in [
            ("roc", &c.roc, "fpr,tpr"),
            ("pro", &c.pro, "fpr,pro"),
            ("iou", &c.iou, "quantile,iou"),
            ("pr", &c.pr, "recall,precision"),
        ] {
            let p = dir.join(format!("{name}.csv"));
            let mut s = format!("{header}\n");
            for (x, y) in pts {
                s.push_str(&format!("{x},{y}\n"));
            }
            fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_expand_to_documented_values() {
        let ad = RunConfig::preset(Preset::MvtecAd).unwrap();
        assert_eq!(ad.matching.alpha, 0.8);
        let got: Vec<_> = ad
            .matching
            .layers
            .iter()
            .map(|l| (l.layer_id, l.patch.m, l.patch.n))
            .collect();
        assert_eq!(got, vec![(1, 9, 9), (2, 7, 7), (3, 5, 5)]);
        assert_eq!(ad.post.sigma, 6.8);

        let loco = RunConfig::preset(Preset::MvtecLoco).unwrap();
        assert_eq!(loco.matching.alpha, 0.6);
        assert_eq!(loco.matching.layers[0].patch.m, 11);
        assert_eq!(loco.matching.layers[2].layer_id, 4);

        let mtd = RunConfig::preset(Preset::Mtd).unwrap();
        assert_eq!(mtd.matching.layers.len(), 2);
        assert_eq!(mtd.matching.layers[1].patch.m, 3);

        let mstc = RunConfig::preset(Preset::Mstc).unwrap();
        assert_eq!(
            mstc.matching
                .layers
                .iter()
                .map(|l| l.layer_id)
                .collect::<Vec<_>>(),
            vec![2, 3]
        );
        assert!(RunConfig::preset(Preset::Custom).is_err());
    }

    #[test]
    fn overrides_and_errors() {
        let f: ConfigFile = serde_json::from_str(
            r#"{"preset":"custom","layers":[2],"patches":[[5,3]],"alpha":0.5}"#,
        )
        .unwrap();
        let c = f.resolve().unwrap();
        assert_eq!(c.matching.layers[0].patch, PatchSpec::new(5, 3).unwrap());
        assert_eq!(c.matching.alpha, 0.5);

        let bad: ConfigFile = serde_json::from_str(r#"{"alpha":1.5}"#).unwrap();
        assert!(bad.resolve().unwrap_err().is_config());
        let even: ConfigFile = serde_json::from_str(r#"{"layers":[1],"patches":[4]}"#).unwrap();
        assert!(even.resolve().unwrap_err().is_config());
        assert!(serde_json::from_str::<ConfigFile>(r#"{"nope":1}"#).is_err());
        assert_eq!("mvtec_loco".parse::<Preset>().unwrap(), Preset::MvtecLoco);
        assert!("imagenet".parse::<Preset>().is_err());
    }
}
