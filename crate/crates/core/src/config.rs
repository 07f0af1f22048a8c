//! Run configuration: one JSON document describing inputs, partitions, the
//! train/test split, and the prediction source.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::BBox;
use crate::predict::{NoiseSpec, PredictionSource, WEEK_SLOTS};
use crate::synth::SynthSpec;

#[derive(Debug, Error, PartialEq)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

/// The grid scales a run may build.
pub const SCALES: [Scale; 3] = [Scale { w: 50, h: 25 }, Scale { w: 100, h: 50 }, Scale { w: 200, h: 100 }];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Grid,
    Taz,
}

impl Shape {
    pub const ALL: [Shape; 2] = [Shape::Grid, Shape::Taz];

    pub fn as_str(&self) -> &'static str {
        match self {
            Shape::Grid => "grid",
            Shape::Taz => "taz",
        }
    }
}

impl FromStr for Shape {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(Shape::Grid),
            "taz" => Ok(Shape::Taz),
            other => Err(ConfigError(format!("unknown shape {other:?}"))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Grid dimensions written `WxH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Scale {
    pub w: usize,
    pub h: usize,
}

impl Scale {
    pub fn cells(&self) -> usize {
        self.w * self.h
    }

    pub fn is_supported(&self) -> bool {
        SCALES.contains(self)
    }
}

impl PartialOrd for Scale {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scale {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.cells(), self.w).cmp(&(other.cells(), other.w))
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.w, self.h)
    }
}

impl FromStr for Scale {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError(format!("scale {s:?} is not of the form WxH"));
        let (w, h) = s.split_once('x').ok_or_else(bad)?;
        let w: usize = w.parse().map_err(|_| bad())?;
        let h: usize = h.parse().map_err(|_| bad())?;
        if w == 0 || h == 0 {
            return Err(bad());
        }
        Ok(Scale { w, h })
    }
}

impl TryFrom<String> for Scale {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Scale> for String {
    fn from(s: Scale) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    /// Seeded hotspot generator; `spec` defaults to the built-in three-hotspot city.
    Synthetic {
        #[serde(default)]
        spec: Option<SynthSpec>,
    },
    /// A movement CSV file.
    Movements { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TazSource {
    /// GeoJSON FeatureCollection with integer `zone_id` properties.
    File { path: PathBuf },
    /// Jittered quadrilateral tiling of the bbox.
    Synthetic { nx: usize, ny: usize, jitter: f64, seed: u64 },
}

fn default_run_id() -> String {
    "run".into()
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 4).expect("valid date")
}
fn default_slot_minutes() -> u32 {
    30
}
fn default_shapes() -> Vec<Shape> {
    vec![Shape::Grid]
}
fn default_scales() -> Vec<Scale> {
    SCALES.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    /// Not persisted with the run so identical runs in different places stay byte-identical.
    #[serde(default = "default_out", skip_serializing)]
    pub out_dir: PathBuf,
    #[serde(default = "BBox::shenzhen")]
    pub bbox: BBox,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    pub days: usize,
    #[serde(default = "default_slot_minutes")]
    pub slot_minutes: u32,
    #[serde(default = "default_shapes")]
    pub shapes: Vec<Shape>,
    #[serde(default = "default_scales")]
    pub scales: Vec<Scale>,
    pub train_days: usize,
    pub test_days: usize,
    pub input: InputSource,
    #[serde(default)]
    pub taz: Option<TazSource>,
    #[serde(default)]
    pub predictor: PredictionSource,
    #[serde(default)]
    pub seed: u64,
    /// Seeded shuffles for the permutation p-value of global I; 0 skips it.
    #[serde(default)]
    pub permutations: usize,
}

impl RunConfig {
    /// 14 synthetic days, both shapes at 50x25 and 100x50, one week each side, noisy seasonal naive.
    pub fn quick(seed: u64) -> Self {
        Self {
            run_id: "quick".into(),
            out_dir: default_out(),
            bbox: BBox::shenzhen(),
            start: default_start(),
            days: 14,
            slot_minutes: 30,
            shapes: vec![Shape::Grid, Shape::Taz],
            scales: vec![SCALES[0], SCALES[1]],
            train_days: 7,
            test_days: 7,
            input: InputSource::Synthetic { spec: None },
            taz: Some(TazSource::Synthetic { nx: 41, ny: 26, jitter: 0.2, seed }),
            predictor: PredictionSource::SeasonalNaive {
                lag: WEEK_SLOTS,
                noise: Some(NoiseSpec { level: 0.3, seed: seed.wrapping_add(1) }),
            },
            seed,
            permutations: 0,
        }
    }

    /// Both shapes at all three scales over four synthetic weeks.
    pub fn full(seed: u64) -> Self {
        Self {
            run_id: "run".into(),
            days: 28,
            scales: SCALES.to_vec(),
            train_days: 21,
            test_days: 7,
            ..Self::quick(seed)
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Shapes and scales deduplicated and in canonical order.
    pub fn normalized(mut self) -> Self {
        self.shapes.sort();
        self.shapes.dedup();
        self.scales.sort();
        self.scales.dedup();
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return err(format!("run_id {:?} is not a plain directory name", self.run_id));
        }
        self.bbox.validate().map_err(|e| ConfigError(e.to_string()))?;
        if self.shapes.is_empty() {
            return err("no shapes requested".into());
        }
        if self.scales.is_empty() {
            return err("no scales requested".into());
        }
        if let Some(s) = self.scales.iter().find(|s| !s.is_supported()) {
            return err(format!("scale {s} is not one of 50x25, 100x50, 200x100"));
        }
        if self.train_days + self.test_days != self.days {
            return err(format!(
                "train_days + test_days = {} but the span has {} days",
                self.train_days + self.test_days,
                self.days
            ));
        }
        if self.train_days == 0 || self.test_days == 0 {
            return err("train and test windows must each contain at least one day".into());
        }
        if self.slot_minutes == 0 || 1440 % self.slot_minutes != 0 {
            return err(format!("slot_minutes {} does not divide a day", self.slot_minutes));
        }
        if let InputSource::Synthetic { spec: Some(spec) } = &self.input {
            if spec.days != self.days {
                return err(format!("synthetic spec covers {} days, config span {}", spec.days, self.days));
            }
        }
        Ok(())
    }

    pub fn slots_per_day(&self) -> usize {
        (1440 / self.slot_minutes) as usize
    }

    pub fn synth_spec(&self) -> Option<SynthSpec> {
        match &self.input {
            InputSource::Synthetic { spec } => {
                Some(spec.clone().unwrap_or_else(|| SynthSpec::default_with(self.seed, self.days)))
            }
            InputSource::Movements { .. } => None,
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(&self.run_id)
    }

    /// Every requested (shape, scale) pair, shapes outermost.
    pub fn combos(&self) -> Vec<(Shape, Scale)> {
        self.shapes.iter().flat_map(|&sh| self.scales.iter().map(move |&sc| (sh, sc))).collect()
    }
}
