//! On-disk run layout and the read-only in-memory view served over HTTP.
//!
//! ```text
//! <out>/<run_id>/
//!   manifest.json  config.json  meta.json  cleaning.json  movements.csv  [zones.geojson]
//!   layout_<shape>.json
//!   <shape>_<scale>/
//!     train.tensor  observed_test.tensor  predicted.tensor  tally.json
//!     diagnostics.json  diagnostics.csv  vsup.json  scatter.json  scatter.csv
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::AggregationTally;
use crate::assoc::{LisaPoint, MoranSummary};
use crate::config::{RunConfig, Scale, Shape};
use crate::geo::{BBox, GridScheme};
use crate::layout::HierarchyArrangement;
use crate::metrics::{RegionDiagnostics, VsupCell, VsupScale};
use crate::tensor::{FlowTensor, TensorError};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const META: &str = "meta.json";
pub const CLEANING: &str = "cleaning.json";
pub const MOVEMENTS: &str = "movements.csv";
pub const ZONES: &str = "zones.geojson";
pub const TRAIN: &str = "train.tensor";
pub const OBSERVED_TEST: &str = "observed_test.tensor";
pub const PREDICTED: &str = "predicted.tensor";
pub const TALLY: &str = "tally.json";
pub const DIAGNOSTICS_JSON: &str = "diagnostics.json";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const VSUP: &str = "vsup.json";
pub const SCATTER_JSON: &str = "scatter.json";
pub const SCATTER_CSV: &str = "scatter.csv";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error("{0}")]
    Tensor(#[from] TensorError),
    #[error("run {0} is not sealed")]
    NotSealed(String),
    #[error("run {0} is sealed")]
    Sealed(String),
    #[error("no runs under {0}")]
    NoRuns(String),
    #[error("combination {shape} {scale} is not in run {run}")]
    MissingCombo { run: String, shape: Shape, scale: Scale },
}

pub fn combo_dir(run_dir: &Path, shape: Shape, scale: Scale) -> PathBuf {
    run_dir.join(format!("{shape}_{scale}"))
}

pub fn layout_file(run_dir: &Path, shape: Shape) -> PathBuf {
    run_dir.join(format!("layout_{shape}.json"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(|e| StoreError::Io { path: path.display().to_string(), message: e.to_string() })?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Json { path: path.display().to_string(), message: e.to_string() })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| StoreError::Json { path: path.display().to_string(), message: e.to_string() })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| StoreError::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboKey {
    pub shape: Shape,
    pub scale: Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub sealed: bool,
    pub combos: Vec<ComboKey>,
    pub days: usize,
    pub train_days: usize,
    pub test_days: usize,
    pub slots_per_day: usize,
}

impl Manifest {
    pub fn read(run_dir: &Path) -> Result<Option<Manifest>, StoreError> {
        let p = run_dir.join(MANIFEST);
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }

    pub fn is_sealed(run_dir: &Path) -> Result<bool, StoreError> {
        Ok(Self::read(run_dir)?.is_some_and(|m| m.sealed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyArtifact {
    pub tally: AggregationTally,
    /// Zone mass falling outside the grid bbox, summed over zones (TAZ shape only).
    pub outside_fraction_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsupEntry {
    pub region_id: usize,
    #[serde(flatten)]
    pub cell: VsupCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsupArtifact {
    pub scale: VsupScale,
    pub value_edges: Vec<f64>,
    pub error_edges: Vec<f64>,
    pub cells: Vec<VsupEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterArtifact {
    pub points: Vec<LisaPoint>,
    /// Absent when the volume field has zero variance.
    pub summary: Option<MoranSummary>,
    /// Global I under binary queen weights.
    pub global_i_binary: Option<f64>,
    pub permutation_p_value: Option<f64>,
    pub undefined_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub shape: Shape,
    pub scale: Scale,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub run_id: String,
    pub config: RunConfig,
    pub cleaning: crate::ingest::CleaningReport,
    pub tallies: BTreeMap<String, TallyArtifact>,
    pub rmse: Vec<RmseRow>,
}

/// Everything served for one (shape, scale).
#[derive(Debug, Clone)]
pub struct ComboData {
    pub shape: Shape,
    pub scale: Scale,
    pub grid: GridScheme,
    pub diagnostics: Vec<RegionDiagnostics>,
    pub vsup: VsupArtifact,
    pub scatter: ScatterArtifact,
    pub observed: FlowTensor,
    pub predicted: FlowTensor,
}

#[derive(Debug, Clone)]
pub struct RunData {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub meta: Meta,
    pub bbox: BBox,
    pub combos: BTreeMap<(Shape, Scale), ComboData>,
    pub layouts: BTreeMap<Shape, HierarchyArrangement>,
}

impl RunData {
    /// Loads a sealed run directory.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let manifest = Manifest::read(dir)?.ok_or_else(|| io_err(&dir.join(MANIFEST), "missing manifest"))?;
        if !manifest.sealed {
            return Err(StoreError::NotSealed(manifest.run_id));
        }
        let meta: Meta = read_json(&dir.join(META))?;
        let bbox = meta.config.bbox;
        let mut combos = BTreeMap::new();
        for key in &manifest.combos {
            let cdir = combo_dir(dir, key.shape, key.scale);
            let grid = GridScheme::build(bbox, key.scale.w, key.scale.h).map_err(|e| io_err(&cdir, e))?;
            combos.insert(
                (key.shape, key.scale),
                ComboData {
                    shape: key.shape,
                    scale: key.scale,
                    grid,
                    diagnostics: read_json(&cdir.join(DIAGNOSTICS_JSON))?,
                    vsup: read_json(&cdir.join(VSUP))?,
                    scatter: read_json(&cdir.join(SCATTER_JSON))?,
                    observed: FlowTensor::read_file(&cdir.join(OBSERVED_TEST))?,
                    predicted: FlowTensor::read_file(&cdir.join(PREDICTED))?,
                },
            );
        }
        let mut layouts = BTreeMap::new();
        for shape in Shape::ALL {
            let p = layout_file(dir, shape);
            if p.exists() {
                layouts.insert(shape, read_json(&p)?);
            }
        }
        Ok(Self { dir: dir.to_path_buf(), manifest, meta, bbox, combos, layouts })
    }

    pub fn combo(&self, shape: Shape, scale: Scale) -> Result<&ComboData, StoreError> {
        self.combos.get(&(shape, scale)).ok_or(StoreError::MissingCombo {
            run: self.manifest.run_id.clone(),
            shape,
            scale,
        })
    }
}

/// Sealed runs keyed by run id.
#[derive(Debug, Clone, Default)]
pub struct RunStore {
    pub runs: BTreeMap<String, RunData>,
}

impl RunStore {
    /// Opens `path` as a single run if it holds a manifest, otherwise every sealed run beneath it.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut runs = BTreeMap::new();
        if path.join(MANIFEST).exists() {
            let r = RunData::open(path)?;
            runs.insert(r.manifest.run_id.clone(), r);
        } else {
            let entries = fs::read_dir(path).map_err(|e| io_err(path, e))?;
            let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
            dirs.sort();
            for d in dirs {
                if Manifest::is_sealed(&d).unwrap_or(false) {
                    let r = RunData::open(&d)?;
                    runs.insert(r.manifest.run_id.clone(), r);
                }
            }
        }
        if runs.is_empty() {
            return Err(StoreError::NoRuns(path.display().to_string()));
        }
        Ok(Self { runs })
    }

    /// The named run, or the first by id when `id` is `None`.
    pub fn run(&self, id: Option<&str>) -> Option<&RunData> {
        match id {
            Some(id) => self.runs.get(id),
            None => self.runs.values().next(),
        }
    }
}
