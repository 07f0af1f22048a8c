//! Pipeline stages over a run directory. Each stage reads the files written by
//! earlier stages and rewrites its own outputs deterministically.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use thiserror::Error;

use crate::aggregate::{aggregate_grid, aggregate_zones, rasterize, split};
use crate::assoc::{build_weights, lisa, moran_global, permutation_p_value, write_scatter_csv, AssocError, WeightMode};
use crate::config::{ConfigError, InputSource, RunConfig, Scale, Shape, TazSource};
use crate::geo::{intersection_fractions, read_zones_geojson, synthetic_zones, write_zones_geojson, GridScheme, ZoneScheme};
use crate::ingest::{clean_records, parse_and_clean, write_movements_file, CleaningReport, SlotClock, Span};
use crate::layout::{arrange_hierarchy, ScaleInput};
use crate::metrics::{global_rmse, region_metrics, vsup_assign, write_diagnostics_csv, RegionDiagnostics};
use crate::predict::{inject_noise, load_predictions, seasonal_naive, slotwise_mean, PredictionSource};
use crate::store::*;
use crate::synth::synth_generate;
use crate::tensor::{FlowTensor, TensorKind};

const RMSE: &str = "rmse.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Aggregate,
    Predict,
    Evaluate,
    Assoc,
    Layout,
    Seal,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Aggregate => "aggregate",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Assoc => "assoc",
            Stage::Layout => "layout",
            Stage::Seal => "seal",
            Stage::Export => "export",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            PipelineError::Config(_) => None,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn fail(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Stage { stage, message }
}

trait StageContext<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T, E: fmt::Display> StageContext<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|e| PipelineError::Stage { stage, message: e.to_string() })
    }
}

fn require(path: &Path, what: &str, stage: Stage) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(fail(stage)(format!("missing {what} ({})", path.display())))
    }
}

fn ensure_unsealed(dir: &Path, stage: Stage) -> Result<()> {
    if Manifest::is_sealed(dir).at(stage)? {
        return Err(fail(stage)(format!("run at {} is sealed", dir.display())));
    }
    Ok(())
}

fn span_of(cfg: &RunConfig) -> std::result::Result<Span, crate::ingest::IngestError> {
    Span::from_days(cfg.start, cfg.days)
}

/// Reads the config persisted by `ingest`, keeping the caller's output location.
pub fn load_run_config(dir: &Path) -> Result<RunConfig> {
    let p = dir.join(CONFIG);
    if !p.exists() {
        return Err(ConfigError(format!("no run config at {} (run ingest first)", p.display())).into());
    }
    let mut cfg = RunConfig::from_file(&p)?;
    if let (Some(parent), Some(name)) = (dir.parent(), dir.file_name()) {
        cfg.out_dir = parent.to_path_buf();
        cfg.run_id = name.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn load_zones(cfg: &RunConfig) -> std::result::Result<ZoneScheme, String> {
    match &cfg.taz {
        None => Err("shape taz requested but no taz source is configured".into()),
        Some(TazSource::File { path }) => {
            if !path.exists() {
                return Err(format!("missing taz file {}", path.display()));
            }
            read_zones_geojson(path).map_err(|e| e.to_string())
        }
        Some(TazSource::Synthetic { nx, ny, jitter, seed }) => {
            synthetic_zones(cfg.bbox, *nx, *ny, *jitter, *seed).map_err(|e| e.to_string())
        }
    }
}

/// Cleans the configured movements (or generates them) into the run directory.
pub fn stage_ingest(cfg: &RunConfig, dir: &Path) -> Result<CleaningReport> {
    let st = Stage::Ingest;
    ensure_unsealed(dir, st)?;
    fs::create_dir_all(dir).at(st)?;
    let span = span_of(cfg).at(st)?;
    if cfg.shapes.contains(&Shape::Taz) {
        let zones = load_zones(cfg).map_err(fail(st))?;
        write_zones_geojson(&dir.join(ZONES), &zones).at(st)?;
    }
    let (records, report) = match &cfg.input {
        InputSource::Synthetic { .. } => {
            let spec = cfg.synth_spec().expect("synthetic input");
            let raw = synth_generate(&spec, &cfg.bbox, cfg.start).at(st)?;
            clean_records(raw, &cfg.bbox, &span)
        }
        InputSource::Movements { path } => {
            require(path, "movement file", st)?;
            parse_and_clean(path, &cfg.bbox, &span).at(st)?
        }
    };
    write_movements_file(&dir.join(MOVEMENTS), &records).at(st)?;
    write_json(&dir.join(CLEANING), &report).at(st)?;
    let mut text = cfg.to_json();
    text.push('\n');
    fs::write(dir.join(CONFIG), text).at(st)?;
    info!("ingest: {} rows read, {} retained", report.rows_read, report.retained);
    Ok(report)
}

/// Counts flows per combination and splits them into train and test tensors.
pub fn stage_aggregate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let st = Stage::Aggregate;
    ensure_unsealed(dir, st)?;
    let movements = dir.join(MOVEMENTS);
    require(&movements, "movements (run ingest first)", st)?;
    let span = span_of(cfg).at(st)?;
    let (records, _) = parse_and_clean(&movements, &cfg.bbox, &span).at(st)?;
    let clock = SlotClock::for_span(&span, cfg.slot_minutes).at(st)?;
    let spd = cfg.slots_per_day();
    let slot_count = cfg.days * spd;

    let zone_flow = if cfg.shapes.contains(&Shape::Taz) {
        let zpath = dir.join(ZONES);
        require(&zpath, "zones (run ingest first)", st)?;
        let zones = read_zones_geojson(&zpath).at(st)?;
        let (flow, tally) = aggregate_zones(&records, &zones, &clock, slot_count);
        Some((zones, flow, tally))
    } else {
        None
    };

    for (shape, scale) in cfg.combos() {
        let grid = GridScheme::build(cfg.bbox, scale.w, scale.h).at(st)?;
        let (tensor, artifact) = match shape {
            Shape::Grid => {
                let (t, tally) = aggregate_grid(&records, &grid, &clock, slot_count);
                (t, TallyArtifact { tally, outside_fraction_total: None })
            }
            Shape::Taz => {
                let (zones, flow, tally) = zone_flow.as_ref().expect("zones loaded for taz");
                let fractions = intersection_fractions(zones, &grid);
                let t = rasterize(flow, &fractions, &grid).at(st)?;
                let outside = fractions.outside.iter().sum::<f64>();
                (t, TallyArtifact { tally: *tally, outside_fraction_total: Some(outside) })
            }
        };
        let (train, test) = split(&tensor, cfg.train_days, cfg.test_days, spd).at(st)?;
        let cdir = combo_dir(dir, shape, scale);
        fs::create_dir_all(&cdir).at(st)?;
        train.write_file(&cdir.join(TRAIN)).at(st)?;
        test.write_file(&cdir.join(OBSERVED_TEST)).at(st)?;
        write_json(&cdir.join(TALLY), &artifact).at(st)?;
        info!("aggregate: {shape} {scale}: {} assigned", artifact.tally.assigned);
    }
    Ok(())
}

fn prediction_for(cfg: &RunConfig, shape: Shape, scale: Scale, train: &FlowTensor, test: &FlowTensor) -> std::result::Result<FlowTensor, String> {
    match &cfg.predictor {
        PredictionSource::SeasonalNaive { lag, noise } => {
            let p = seasonal_naive(train, test, *lag).map_err(|e| e.to_string())?;
            Ok(match noise {
                Some(n) => inject_noise(p, *n),
                None => p,
            })
        }
        PredictionSource::SlotwiseMean { period } => slotwise_mean(train, test.dims(), *period).map_err(|e| e.to_string()),
        PredictionSource::File { dir } => {
            let path = dir.join(format!("{shape}_{scale}.tensor"));
            if !path.exists() {
                return Err(format!("missing prediction file {}", path.display()));
            }
            load_predictions(&path, test.dims()).map_err(|e| e.to_string())
        }
    }
}

pub fn stage_predict(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let st = Stage::Predict;
    ensure_unsealed(dir, st)?;
    for (shape, scale) in cfg.combos() {
        let cdir = combo_dir(dir, shape, scale);
        require(&cdir.join(TRAIN), "training tensor (run aggregate first)", st)?;
        require(&cdir.join(OBSERVED_TEST), "observed test tensor (run aggregate first)", st)?;
        let train = FlowTensor::read_file(&cdir.join(TRAIN)).at(st)?;
        let test = FlowTensor::read_file(&cdir.join(OBSERVED_TEST)).at(st)?;
        let pred = prediction_for(cfg, shape, scale, &train, &test).map_err(fail(st))?;
        pred.with_kind(TensorKind::Predicted).write_file(&cdir.join(PREDICTED)).at(st)?;
    }
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct RmseFile {
    rmse: f64,
}

pub fn stage_evaluate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let st = Stage::Evaluate;
    ensure_unsealed(dir, st)?;
    for (shape, scale) in cfg.combos() {
        let cdir = combo_dir(dir, shape, scale);
        require(&cdir.join(OBSERVED_TEST), "observed test tensor (run aggregate first)", st)?;
        require(&cdir.join(PREDICTED), "predictions (run predict first)", st)?;
        let obs = FlowTensor::read_file(&cdir.join(OBSERVED_TEST)).at(st)?;
        let pred = FlowTensor::read_file(&cdir.join(PREDICTED)).at(st)?;
        let diag = region_metrics(&obs, &pred).at(st)?;
        let (vscale, cells) = vsup_assign(&diag).at(st)?;
        let vsup = VsupArtifact {
            scale: vscale,
            value_edges: vscale.value_edges(),
            error_edges: vscale.error_edges(),
            cells: cells.into_iter().map(|(r, cell)| VsupEntry { region_id: r.index, cell }).collect(),
        };
        write_json(&cdir.join(DIAGNOSTICS_JSON), &diag).at(st)?;
        let f = fs::File::create(cdir.join(DIAGNOSTICS_CSV)).at(st)?;
        write_diagnostics_csv(std::io::BufWriter::new(f), &diag).at(st)?;
        write_json(&cdir.join(VSUP), &vsup).at(st)?;
        write_json(&cdir.join(RMSE), &RmseFile { rmse: global_rmse(&obs, &pred).at(st)? }).at(st)?;
    }
    Ok(())
}

fn read_diagnostics(cdir: &Path, stage: Stage) -> Result<Vec<RegionDiagnostics>> {
    let p = cdir.join(DIAGNOSTICS_JSON);
    require(&p, "diagnostics (run evaluate first)", stage)?;
    read_json(&p).at(stage)
}

/// Moran scatter artifact for one diagnostics set on a `w x h` grid.
pub fn scatter_artifact(diag: &[RegionDiagnostics], w: usize, h: usize, permutations: usize, seed: u64) -> std::result::Result<ScatterArtifact, AssocError> {
    let values: Vec<f64> = diag.iter().map(|d| d.mean_volume).collect();
    let errors: Vec<f64> = diag.iter().map(|d| d.mean_abs_error).collect();
    let colorable: Vec<bool> = diag.iter().map(|d| d.fully_defined()).collect();
    let binary = build_weights(w, h, WeightMode::Binary);
    match lisa(&values, &errors, &colorable, &binary) {
        Ok((points, summary)) => Ok(ScatterArtifact {
            points,
            summary: Some(summary),
            global_i_binary: moran_global(&values, &binary).ok(),
            permutation_p_value: if permutations > 0 {
                Some(permutation_p_value(&values, &binary, permutations, seed)?)
            } else {
                None
            },
            undefined_reason: None,
        }),
        Err(AssocError::ZeroVariance) => Ok(ScatterArtifact {
            points: Vec::new(),
            summary: None,
            global_i_binary: None,
            permutation_p_value: None,
            undefined_reason: Some(AssocError::ZeroVariance.to_string()),
        }),
        Err(e) => Err(e),
    }
}

pub fn stage_assoc(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let st = Stage::Assoc;
    ensure_unsealed(dir, st)?;
    for (shape, scale) in cfg.combos() {
        let cdir = combo_dir(dir, shape, scale);
        let diag = read_diagnostics(&cdir, st)?;
        let art = scatter_artifact(&diag, scale.w, scale.h, cfg.permutations, cfg.seed).at(st)?;
        write_json(&cdir.join(SCATTER_JSON), &art).at(st)?;
        let f = fs::File::create(cdir.join(SCATTER_CSV)).at(st)?;
        write_scatter_csv(std::io::BufWriter::new(f), &art.points).at(st)?;
    }
    Ok(())
}

pub fn stage_layout(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let st = Stage::Layout;
    ensure_unsealed(dir, st)?;
    for &shape in &cfg.shapes {
        let diags: Vec<(Scale, Vec<RegionDiagnostics>)> = cfg
            .scales
            .iter()
            .map(|&scale| read_diagnostics(&combo_dir(dir, shape, scale), st).map(|d| (scale, d)))
            .collect::<Result<_>>()?;
        let inputs: Vec<ScaleInput<'_>> = diags.iter().map(|(s, d)| ScaleInput { w: s.w, h: s.h, diagnostics: d }).collect();
        let arrangement = arrange_hierarchy(&inputs).at(st)?;
        write_json(&layout_file(dir, shape), &arrangement).at(st)?;
    }
    Ok(())
}

/// Writes metadata and marks the run immutable.
pub fn stage_seal(cfg: &RunConfig, dir: &Path) -> Result<Vec<RmseRow>> {
    let st = Stage::Seal;
    ensure_unsealed(dir, st)?;
    let cleaning_path = dir.join(CLEANING);
    require(&cleaning_path, "cleaning report (run ingest first)", st)?;
    let cleaning: CleaningReport = read_json(&cleaning_path).at(st)?;
    let mut tallies = std::collections::BTreeMap::new();
    let mut rmse = Vec::new();
    for (shape, scale) in cfg.combos() {
        let cdir = combo_dir(dir, shape, scale);
        for (f, what) in [
            (TALLY, "tally (run aggregate first)"),
            (PREDICTED, "predictions (run predict first)"),
            (RMSE, "metrics (run evaluate first)"),
            (VSUP, "palette bins (run evaluate first)"),
            (SCATTER_JSON, "scatter (run assoc first)"),
        ] {
            require(&cdir.join(f), what, st)?;
        }
        tallies.insert(format!("{shape}_{scale}"), read_json::<TallyArtifact>(&cdir.join(TALLY)).at(st)?);
        let r: RmseFile = read_json(&cdir.join(RMSE)).at(st)?;
        rmse.push(RmseRow { shape, scale, rmse: r.rmse });
    }
    for &shape in &cfg.shapes {
        require(&layout_file(dir, shape), "layout (run layout first)", st)?;
    }
    let run_id = cfg.run_id.clone();
    let meta = Meta { run_id: run_id.clone(), config: cfg.clone(), cleaning, tallies, rmse: rmse.clone() };
    write_json(&dir.join(META), &meta).at(st)?;
    let manifest = Manifest {
        run_id,
        sealed: true,
        combos: cfg.combos().into_iter().map(|(shape, scale)| ComboKey { shape, scale }).collect(),
        days: cfg.days,
        train_days: cfg.train_days,
        test_days: cfg.test_days,
        slots_per_day: cfg.slots_per_day(),
    };
    write_json(&dir.join(MANIFEST), &manifest).at(st)?;
    Ok(rmse)
}

/// Fixed-width global RMSE table, one row per combination.
pub fn format_rmse_table(rows: &[RmseRow]) -> String {
    let mut out = String::from("shape  scale      rmse\n");
    for r in rows {
        out.push_str(&format!("{:<6} {:<9} {:>10.4}\n", r.shape.as_str(), r.scale.to_string(), r.rmse));
    }
    out
}

/// Runs every stage into a staging directory and moves it to `<out>/<run_id>` on success.
///
/// Any failure removes the staging directory and reports the failing stage.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(PathBuf, Vec<RmseRow>)> {
    let cfg = cfg.clone().normalized();
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).at(Stage::Ingest)?;
    let final_dir = cfg.run_dir();
    let staging = cfg.out_dir.join(format!(".{}.partial", cfg.run_id));
    if staging.exists() {
        fs::remove_dir_all(&staging).at(Stage::Ingest)?;
    }
    let result = (|| {
        stage_ingest(&cfg, &staging)?;
        stage_aggregate(&cfg, &staging)?;
        stage_predict(&cfg, &staging)?;
        stage_evaluate(&cfg, &staging)?;
        stage_assoc(&cfg, &staging)?;
        stage_layout(&cfg, &staging)?;
        stage_seal(&cfg, &staging)
    })();
    match result {
        Ok(rows) => {
            if final_dir.exists() {
                fs::remove_dir_all(&final_dir).at(Stage::Seal)?;
            }
            fs::rename(&staging, &final_dir).at(Stage::Seal)?;
            Ok((final_dir, rows))
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportWhat {
    Diagnostics,
    Scatter,
    Vsup,
    Layout,
    Meta,
}

impl std::str::FromStr for ExportWhat {
    type Err = ConfigError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "diagnostics" => ExportWhat::Diagnostics,
            "scatter" => ExportWhat::Scatter,
            "vsup" => ExportWhat::Vsup,
            "layout" => ExportWhat::Layout,
            "meta" => ExportWhat::Meta,
            other => return Err(ConfigError(format!("unknown export {other:?}"))),
        })
    }
}

/// Bytes of one stored artifact: CSV for diagnostics and scatter, JSON otherwise.
pub fn export_artifact(dir: &Path, what: ExportWhat, shape: Shape, scale: Scale) -> Result<Vec<u8>> {
    let st = Stage::Export;
    let path = match what {
        ExportWhat::Diagnostics => combo_dir(dir, shape, scale).join(DIAGNOSTICS_CSV),
        ExportWhat::Scatter => combo_dir(dir, shape, scale).join(SCATTER_CSV),
        ExportWhat::Vsup => combo_dir(dir, shape, scale).join(VSUP),
        ExportWhat::Layout => layout_file(dir, shape),
        ExportWhat::Meta => dir.join(META),
    };
    require(&path, "artifact", st)?;
    fs::read(&path).at(st)
}
