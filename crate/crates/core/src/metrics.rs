//! Per-region scale-independent metrics (PRMSE, U, CORR), global RMSE, and
//! the value-suppressing bivariate binning used by the map and temporal views.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::RegionId;
use crate::tensor::FlowTensor;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("observed and predicted tensors differ in shape or slot range")]
    DimensionMismatch,
    #[error("region {0} is outside the scheme")]
    InvalidRegion(usize),
    #[error("{slots} test slots do not form {days} days of {per_day} slots")]
    WindowMismatch { slots: usize, days: usize, per_day: usize },
    #[error("no diagnostics to bin")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedReason {
    /// Observed mean is zero, so PRMSE has no denominator.
    ZeroMean,
    /// Both series are identically zero, so U has no denominator.
    AllZero,
    /// At least one series is constant, so CORR has no variance.
    ConstantSeries,
}

impl UndefinedReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            UndefinedReason::ZeroMean => "zero_mean",
            UndefinedReason::AllZero => "all_zero",
            UndefinedReason::ConstantSeries => "constant_series",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDiagnostics {
    pub region: RegionId,
    pub mean_volume: f64,
    pub mean_abs_error: f64,
    pub prmse: Option<f64>,
    pub u: Option<f64>,
    pub corr: Option<f64>,
    pub n_slots: usize,
    pub undefined: Vec<UndefinedReason>,
}

impl RegionDiagnostics {
    pub fn fully_defined(&self) -> bool {
        self.undefined.is_empty()
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Prmse => self.prmse,
            Metric::U => self.u,
            Metric::Corr => self.corr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Prmse,
    U,
    Corr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Prmse, Metric::U, Metric::Corr];

    pub fn parse(s: &str) -> Option<Metric> {
        match s {
            "prmse" => Some(Metric::Prmse),
            "u" => Some(Metric::U),
            "corr" => Some(Metric::Corr),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Prmse => "prmse",
            Metric::U => "u",
            Metric::Corr => "corr",
        }
    }
}

/// Metrics for one observed/predicted series pair.
pub fn series_diagnostics(region: RegionId, obs: &[f64], pred: &[f64]) -> RegionDiagnostics {
    debug_assert_eq!(obs.len(), pred.len());
    let n = obs.len() as f64;
    let (mut sx, mut sy, mut se2, mut sx2, mut sy2, mut sae) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in obs.iter().zip(pred) {
        let e = y - x;
        sx += x;
        sy += y;
        se2 += e * e;
        sx2 += x * x;
        sy2 += y * y;
        sae += e.abs();
    }
    let mean_x = sx / n;
    let mean_y = sy / n;
    let rmse = (se2 / n).sqrt();
    let mut undefined = Vec::new();

    let prmse = if mean_x > 0.0 {
        Some(rmse / mean_x)
    } else {
        undefined.push(UndefinedReason::ZeroMean);
        None
    };

    let denom = (sy2 / n).sqrt() + (sx2 / n).sqrt();
    let u = if denom > 0.0 {
        Some((rmse / denom).clamp(0.0, 1.0))
    } else {
        undefined.push(UndefinedReason::AllZero);
        None
    };

    let constant = |s: &[f64]| s.iter().all(|&v| v == s[0]);
    let corr = if obs.is_empty() || constant(obs) || constant(pred) {
        undefined.push(UndefinedReason::ConstantSeries);
        None
    } else {
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (&x, &y) in obs.iter().zip(pred) {
            let dx = x - mean_x;
            let dy = y - mean_y;
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    };

    RegionDiagnostics {
        region,
        mean_volume: mean_x,
        mean_abs_error: sae / n,
        prmse,
        u,
        corr,
        n_slots: obs.len(),
        undefined,
    }
}

fn check_dims(obs: &FlowTensor, pred: &FlowTensor) -> Result<(), MetricsError> {
    if obs.dims() != pred.dims() {
        return Err(MetricsError::DimensionMismatch);
    }
    Ok(())
}

/// Per-cell diagnostics over the test window.
pub fn region_metrics(obs: &FlowTensor, pred: &FlowTensor) -> Result<Vec<RegionDiagnostics>, MetricsError> {
    check_dims(obs, pred)?;
    Ok((0..obs.cells())
        .into_par_iter()
        .map(|g| series_diagnostics(RegionId::cell(g), &obs.series(g), &pred.series(g)))
        .collect())
}

/// Root mean squared error over every cell and slot.
pub fn global_rmse(obs: &FlowTensor, pred: &FlowTensor) -> Result<f64, MetricsError> {
    check_dims(obs, pred)?;
    let se: f64 = obs.values().iter().zip(pred.values()).map(|(x, y)| (y - x) * (y - x)).sum();
    Ok((se / obs.values().len() as f64).sqrt())
}

pub const VALUE_BINS: usize = 8;
pub const ERROR_LEVELS: usize = 4;

/// A cell of the value-suppressing palette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VsupCell {
    /// 0 is the lowest error.
    pub level: u8,
    /// Value bin among `8 >> level` merged bins.
    pub bin: u8,
}

impl VsupCell {
    pub fn bins_at_level(level: u8) -> u8 {
        (VALUE_BINS >> level) as u8
    }
}

/// Equal-width bin edges anchored at zero, shared by the map and the temporal heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VsupScale {
    pub value_max: f64,
    pub error_max: f64,
}

fn equal_width_bin(v: f64, max: f64, bins: usize) -> usize {
    if !(max > 0.0) || !(v > 0.0) {
        return 0;
    }
    ((v / max * bins as f64).floor() as usize).min(bins - 1)
}

impl VsupScale {
    pub fn from_diagnostics(diag: &[RegionDiagnostics]) -> Result<Self, MetricsError> {
        if diag.is_empty() {
            return Err(MetricsError::Empty);
        }
        Ok(Self {
            value_max: diag.iter().map(|d| d.mean_volume).fold(0.0, f64::max),
            error_max: diag.iter().map(|d| d.mean_abs_error).fold(0.0, f64::max),
        })
    }

    pub fn value_edges(&self) -> Vec<f64> {
        (0..=VALUE_BINS).map(|k| self.value_max * k as f64 / VALUE_BINS as f64).collect()
    }

    pub fn error_edges(&self) -> Vec<f64> {
        (0..=ERROR_LEVELS).map(|k| self.error_max * k as f64 / ERROR_LEVELS as f64).collect()
    }

    /// Bins a (value, error) pair; higher error levels merge value bins pairwise.
    pub fn assign(&self, value: f64, error: f64) -> VsupCell {
        let level = equal_width_bin(error, self.error_max, ERROR_LEVELS);
        let base = equal_width_bin(value, self.value_max, VALUE_BINS);
        VsupCell {
            level: level as u8,
            bin: (base >> level) as u8,
        }
    }
}

/// Palette cell per region, in input order.
pub fn vsup_assign(diag: &[RegionDiagnostics]) -> Result<(VsupScale, Vec<(RegionId, VsupCell)>), MetricsError> {
    let scale = VsupScale::from_diagnostics(diag)?;
    let cells = diag
        .iter()
        .map(|d| (d.region, scale.assign(d.mean_volume, d.mean_abs_error)))
        .collect();
    Ok((scale, cells))
}

/// `days x slots_per_day` palette cells for one region, binned with the global scale.
pub fn temporal_cells(
    obs: &FlowTensor,
    pred: &FlowTensor,
    region: usize,
    scale: &VsupScale,
    days: usize,
    slots_per_day: usize,
) -> Result<Vec<Vec<VsupCell>>, MetricsError> {
    check_dims(obs, pred)?;
    if region >= obs.cells() {
        return Err(MetricsError::InvalidRegion(region));
    }
    if days * slots_per_day != obs.slots() {
        return Err(MetricsError::WindowMismatch {
            slots: obs.slots(),
            days,
            per_day: slots_per_day,
        });
    }
    Ok((0..days)
        .map(|d| {
            (0..slots_per_day)
                .map(|s| {
                    let t = d * slots_per_day + s;
                    let x = obs.at(t, region);
                    let y = pred.at(t, region);
                    scale.assign(x, (y - x).abs())
                })
                .collect()
        })
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `region_id,mean_volume,mean_abs_error,prmse,u,corr,n_slots,undefined_reason`.
pub fn write_diagnostics_csv<W: Write>(w: W, diag: &[RegionDiagnostics]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["region_id", "mean_volume", "mean_abs_error", "prmse", "u", "corr", "n_slots", "undefined_reason"])?;
    for d in diag {
        let reasons: Vec<&str> = d.undefined.iter().map(UndefinedReason::as_str).collect();
        out.write_record([
            d.region.index.to_string(),
            d.mean_volume.to_string(),
            d.mean_abs_error.to_string(),
            fmt_opt(d.prmse),
            fmt_opt(d.u),
            fmt_opt(d.corr),
            d.n_slots.to_string(),
            reasons.join(";"),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Pearson correlation of two equal-length samples; `None` if either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 2 || a.len() != b.len() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
