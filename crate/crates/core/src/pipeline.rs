//! End-to-end steps shared by the command-line tool: prepare, train,
//! evaluate and map, driven by a run manifest.
//!
//! Manifest (TOML); relative paths resolve against the manifest's folder:
//!
//! ```toml
//! raster = "scene.polt3"      # packed file or t3 directory
//! labels = "labels.png"       # 8-bit image or raw grid
//! out = "run"
//! num_classes = 3             # default: largest label id
//! patch = 15
//! fraction = 0.01
//! seed = 0
//! class_names = ["surface", "double-bounce", "volume"]
//!
//! [train]
//! learning_rate = 0.001
//! batch_size = 128
//! max_epochs = 100
//! patience = 10
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{classify_scene, confusion_at, metrics, render_map, Metrics, Palette};
use crate::model::{checkpoint, ModelConfig, ModelParams, DEFAULT_PATCH};
use crate::polsar::{
    compute_descriptors, extract_patches, load_coherency, render_pauli, stratified_split, CoherencyRaster,
    DescriptorStack, LabelMap, NormStats, NormalizedScene, RasterFormat, Split, SplitTag,
};
use crate::training::{train, History, TrainConfig};

pub const DEFAULT_FRACTION: f64 = 0.01;

pub const CHECKPOINT_FILE: &str = "model.ddf2pol";
pub const HISTORY_FILE: &str = "history.tsv";
pub const STATS_FILE: &str = "norm_stats.toml";
pub const SPLIT_FILE: &str = "split.txt";
pub const PAULI_FILE: &str = "pauli.png";
pub const METRICS_FILE: &str = "metrics.txt";
pub const METRICS_KV_FILE: &str = "metrics.kv";
pub const MAP_FILE: &str = "map.png";

fn default_patch() -> usize {
    DEFAULT_PATCH
}

fn default_fraction() -> f64 {
    DEFAULT_FRACTION
}

fn default_out() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default)]
    pub raster: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default = "default_patch")]
    pub patch: usize,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            raster: None,
            labels: None,
            out: default_out(),
            num_classes: None,
            patch: DEFAULT_PATCH,
            fraction: DEFAULT_FRACTION,
            seed: 0,
            class_names: Vec::new(),
            train: TrainConfig::default(),
        }
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: RunManifest = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = m.raster.as_mut() {
            resolve(p);
        }
        if let Some(p) = m.labels.as_mut() {
            resolve(p);
        }
        resolve(&mut m.out);
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    fn required(&self, field: &'static str, value: &Option<PathBuf>) -> Result<PathBuf> {
        value
            .clone()
            .ok_or_else(|| Error::usage(format!("no {field} path given (manifest field `{field}` or --{field})")))
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Loaded scene, descriptors, split and training normalization.
pub struct Prepared {
    pub raster: CoherencyRaster,
    pub labels: LabelMap,
    pub descriptors: DescriptorStack,
    pub num_classes: usize,
    pub split: Split,
    pub stats: NormStats,
}

impl Prepared {
    /// Labeled pixels per class among `pixels`.
    pub fn class_counts(&self, pixels: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &p in pixels {
            counts[usize::from(self.labels.data[p]) - 1] += 1;
        }
        counts
    }

    pub fn scene(&self, stats: &NormStats) -> Result<NormalizedScene> {
        NormalizedScene::new(&self.descriptors, &self.raster, stats)
    }
}

/// Loads inputs, computes descriptors, draws the split and fits the
/// normalization on the training pixels.
pub fn prepare(m: &RunManifest) -> Result<Prepared> {
    let raster_path = m.required("raster", &m.raster)?;
    let labels_path = m.required("labels", &m.labels)?;
    if !raster_path.exists() {
        return Err(Error::io(&raster_path, std::io::Error::new(std::io::ErrorKind::NotFound, "raster not found")));
    }
    let loaded = load_coherency(&raster_path, RasterFormat::detect(&raster_path))?;
    let labels = LabelMap::load(&labels_path)?;
    let raster = loaded.raster;
    if labels.height != raster.height() || labels.width != raster.width() {
        return Err(Error::data(format!(
            "{}: label map is {}x{} but the raster is {}x{}",
            labels_path.display(),
            labels.height,
            labels.width,
            raster.height(),
            raster.width()
        )));
    }
    let num_classes = m.num_classes.unwrap_or_else(|| usize::from(labels.max_class()));
    let descriptors = compute_descriptors(&raster);
    if descriptors.degenerate > 0 {
        warn!("{} pixels needed guarded descriptors", descriptors.degenerate);
    }
    let split = stratified_split(&labels, num_classes, m.fraction, m.seed).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", labels_path.display())),
        other => other,
    })?;
    let stats = NormStats::fit(&descriptors, &raster, &split.train)?;
    info!(
        "{}x{} scene, {} classes, {} train / {} test pixels ({} per class)",
        raster.height(),
        raster.width(),
        num_classes,
        split.train.len(),
        split.test.len(),
        split.per_class
    );
    Ok(Prepared { raster, labels, descriptors, num_classes, split, stats })
}

fn create_out(m: &RunManifest) -> Result<()> {
    fs::create_dir_all(&m.out).map_err(|e| Error::io(&m.out, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn split_text(p: &Prepared) -> String {
    let list = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
    format!("per_class {}\ntrain {}\ntest {}\n", p.split.per_class, list(&p.split.train), list(&p.split.test))
}

/// `prepare` plus its artifacts: split, normalization and Pauli preview.
pub fn run_prepare(m: &RunManifest) -> Result<Prepared> {
    let p = prepare(m)?;
    create_out(m)?;
    write_text(&m.out_path(SPLIT_FILE), &split_text(&p))?;
    p.stats.save(&m.out_path(STATS_FILE))?;
    render_pauli(&p.raster, &m.out_path(PAULI_FILE))?;
    Ok(p)
}

pub struct TrainRun {
    pub prepared: Prepared,
    pub params: ModelParams,
    pub history: History,
}

/// Prepares, trains, and writes checkpoint, history and normalization.
pub fn run_train(m: &RunManifest) -> Result<TrainRun> {
    let prepared = run_prepare(m)?;
    let config = ModelConfig::new(m.patch, prepared.num_classes)?;
    let dataset = extract_patches(
        &prepared.descriptors,
        &prepared.raster,
        &prepared.labels,
        &prepared.split.train,
        m.patch,
        Some(&prepared.stats),
        SplitTag::Train,
        m.seed,
    )?;
    let outcome = train(&config, &dataset, &m.train_config())?;
    checkpoint::save(&outcome.params, &m.out_path(CHECKPOINT_FILE))?;
    outcome.history.save(&m.out_path(HISTORY_FILE))?;
    if let Some(best) = outcome.history.best_record() {
        info!("best epoch {}: loss {:.6}, train accuracy {:.2}%", best.epoch, best.loss, 100.0 * best.accuracy);
    }
    Ok(TrainRun { prepared, params: outcome.params, history: outcome.history })
}

/// Reads a checkpoint and checks it against the manifest's patch size and
/// class count.
pub fn load_compatible(path: &Path, patch: usize, num_classes: usize) -> Result<ModelParams> {
    let params = checkpoint::load(path)?;
    let c = &params.config;
    if c.patch != patch || c.num_classes != num_classes {
        return Err(Error::incompatible(format!(
            "{} was trained with patch {} and {} classes, but the run uses patch {patch} and {num_classes} classes",
            path.display(),
            c.patch,
            c.num_classes
        )));
    }
    Ok(params)
}

/// Which labeled pixels to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSet {
    Train,
    Test,
    All,
}

pub struct EvalRun {
    pub metrics: Metrics,
    pub map: LabelMap,
}

fn stats_for(m: &RunManifest, p: &Prepared) -> Result<NormStats> {
    let path = m.out_path(STATS_FILE);
    if path.exists() {
        NormStats::load(&path)
    } else {
        warn!("{} not found; refitting normalization on the training split", path.display());
        Ok(p.stats.clone())
    }
}

/// Classifies the scene with a checkpoint and scores the chosen pixels.
pub fn run_eval(m: &RunManifest, checkpoint_path: &Path, on: EvalSet) -> Result<EvalRun> {
    let p = prepare(m)?;
    let params = load_compatible(checkpoint_path, m.patch, p.num_classes)?;
    let stats = stats_for(m, &p)?;
    let map = classify_scene(&params, &p.scene(&stats)?)?;
    let pixels: Vec<usize> = match on {
        EvalSet::Train => p.split.train.clone(),
        EvalSet::Test => p.split.test.clone(),
        EvalSet::All => (0..p.labels.len()).filter(|&i| p.labels.data[i] != 0).collect(),
    };
    let cm = confusion_at(&p.labels, &map, &pixels, p.num_classes)?;
    let metrics = metrics(&cm)?;
    create_out(m)?;
    let report = metrics.report(&m.class_names, &p.class_counts(&p.split.train), &p.class_counts(&p.split.test));
    write_text(&m.out_path(METRICS_FILE), &report)?;
    write_text(&m.out_path(METRICS_KV_FILE), &metrics.to_kv())?;
    Ok(EvalRun { metrics, map })
}

/// Classifies every pixel and renders the map.
pub fn run_map(m: &RunManifest, checkpoint_path: &Path, out: &Path) -> Result<LabelMap> {
    let p = prepare(m)?;
    let params = load_compatible(checkpoint_path, m.patch, p.num_classes)?;
    let stats = stats_for(m, &p)?;
    let map = classify_scene(&params, &p.scene(&stats)?)?;
    render_map(&map, &Palette::for_classes(p.num_classes), out)?;
    Ok(map)
}
