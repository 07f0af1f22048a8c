//! Spatial association on grids: first-order queen contiguity weights,
//! global Moran's I, its local (LISA) decomposition, and the Moran
//! scatterplot regression.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::geo::RegionId;

#[derive(Debug, Error, PartialEq)]
pub enum AssocError {
    #[error("zero variance")]
    ZeroVariance,
    #[error("at least two cells are required, got {0}")]
    TooFewCells(usize),
    #[error("weights have no neighbor pairs")]
    NoNeighbors,
    #[error("{values} values for a {w}x{h} weight matrix")]
    LengthMismatch { values: usize, w: usize, h: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Binary,
    RowStandardized,
}

/// Queen contiguity over a row-major `w` x `h` grid (the 3x3 block around each cell).
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    pub w: usize,
    pub h: usize,
    pub mode: WeightMode,
    neighbors: Vec<Vec<usize>>,
}

impl SpatialWeights {
    pub fn queen(w: usize, h: usize, mode: WeightMode) -> Self {
        let mut neighbors = Vec::with_capacity(w * h);
        for r in 0..h as isize {
            for c in 0..w as isize {
                let mut list = Vec::with_capacity(8);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (rr, cc) = (r + dr, c + dc);
                        if rr >= 0 && cc >= 0 && rr < h as isize && cc < w as isize {
                            list.push(rr as usize * w + cc as usize);
                        }
                    }
                }
                neighbors.push(list);
            }
        }
        Self { w, h, mode, neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Weight of every neighbor of `i`.
    pub fn row_weight(&self, i: usize) -> f64 {
        match self.mode {
            WeightMode::Binary => 1.0,
            WeightMode::RowStandardized => 1.0 / self.neighbors[i].len() as f64,
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.neighbors[i].contains(&j) {
            self.row_weight(i)
        } else {
            0.0
        }
    }

    /// `ΣΣ w_ij`.
    pub fn total(&self) -> f64 {
        (0..self.len())
            .filter(|&i| !self.neighbors[i].is_empty())
            .map(|i| self.row_weight(i) * self.neighbors[i].len() as f64)
            .sum()
    }

    /// `Σ_j w_ij v_j`.
    pub fn lag(&self, i: usize, v: &[f64]) -> f64 {
        let nb = &self.neighbors[i];
        if nb.is_empty() {
            return 0.0;
        }
        self.row_weight(i) * nb.iter().map(|&j| v[j]).sum::<f64>()
    }

    pub fn with_mode(&self, mode: WeightMode) -> Self {
        Self { mode, ..self.clone() }
    }
}

pub fn build_weights(w: usize, h: usize, mode: WeightMode) -> SpatialWeights {
    SpatialWeights::queen(w, h, mode)
}

fn centered(values: &[f64]) -> Result<Vec<f64>, AssocError> {
    if values.len() < 2 {
        return Err(AssocError::TooFewCells(values.len()));
    }
    if values.iter().all(|&v| v == values[0]) {
        return Err(AssocError::ZeroVariance);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(values.iter().map(|v| v - mean).collect())
}

fn check_len(values: &[f64], wts: &SpatialWeights) -> Result<(), AssocError> {
    if values.len() != wts.len() {
        return Err(AssocError::LengthMismatch { values: values.len(), w: wts.w, h: wts.h });
    }
    Ok(())
}

/// Global Moran's I: `(n / ΣΣw) · ΣΣ w_ij z_i z_j / Σ z_i²` with `z` the deviation from the mean.
pub fn moran_global(values: &[f64], wts: &SpatialWeights) -> Result<f64, AssocError> {
    check_len(values, wts)?;
    let z = centered(values)?;
    let s0 = wts.total();
    if s0 == 0.0 {
        return Err(AssocError::NoNeighbors);
    }
    let denom: f64 = z.iter().map(|v| v * v).sum();
    let cross: f64 = (0..z.len()).map(|i| z[i] * wts.lag(i, &z)).sum();
    Ok(z.len() as f64 / s0 * cross / denom)
}

/// Mean 0, population variance 1. Zero-variance input maps to all zeros.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if values.iter().all(|&v| v == values[0]) || var == 0.0 {
        return vec![0.0; values.len()];
    }
    let sd = var.sqrt();
    values.iter().map(|v| (v - mean) / sd).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LisaPoint {
    pub region: RegionId,
    pub z_value: f64,
    pub z_lag: f64,
    pub lisa: f64,
    pub z_error: f64,
    /// Whether the region's metrics are all defined; undefined regions are not error-colored.
    pub colorable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranSummary {
    /// Moran's I under row-standardized weights (equals the regression slope).
    pub global_i: f64,
    pub regression_slope: f64,
    pub intercept: f64,
    pub pearson_r: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
}

/// Two-sided p-value of Pearson `r` via `t = r·√((n−2)/(1−r²))` on `n−2` degrees of freedom.
pub fn pearson_p_value(r: f64, n: usize) -> Option<f64> {
    if n < 3 || !r.is_finite() {
        return None;
    }
    if r.abs() >= 1.0 {
        return Some(0.0);
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

/// Local indicators over row-standardized queen weights plus the Moran scatterplot summary.
///
/// `errors` supplies the per-region mean absolute errors used for point
/// coloring; `colorable` flags regions whose diagnostics are fully defined.
pub fn lisa(
    values: &[f64],
    errors: &[f64],
    colorable: &[bool],
    wts: &SpatialWeights,
) -> Result<(Vec<LisaPoint>, MoranSummary), AssocError> {
    check_len(values, wts)?;
    assert_eq!(values.len(), errors.len(), "errors must align with values");
    assert_eq!(values.len(), colorable.len(), "colorable must align with values");
    centered(values)?;
    let rs = wts.with_mode(WeightMode::RowStandardized);
    let z = standardize(values);
    let ze = standardize(errors);
    let n = z.len();
    let lags: Vec<f64> = (0..n).map(|i| rs.lag(i, &z)).collect();

    let points: Vec<LisaPoint> = (0..n)
        .map(|i| LisaPoint {
            region: RegionId::cell(i),
            z_value: z[i],
            z_lag: lags[i],
            lisa: z[i] * lags[i],
            z_error: ze[i],
            colorable: colorable[i],
        })
        .collect();

    let nf = n as f64;
    let mz = z.iter().sum::<f64>() / nf;
    let ml = lags.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in z.iter().zip(&lags) {
        sxy += (a - mz) * (b - ml);
        sxx += (a - mz) * (a - mz);
    }
    let slope = sxy / sxx;
    let pearson_r = crate::metrics::pearson(&z, &lags);
    let summary = MoranSummary {
        global_i: moran_global(values, &rs)?,
        regression_slope: slope,
        intercept: ml - slope * mz,
        pearson_r,
        p_value: pearson_r.and_then(|r| pearson_p_value(r, n)),
        n,
    };
    Ok((points, summary))
}

/// Pseudo p-value of global I from `permutations` seeded shuffles: `(extreme + 1) / (permutations + 1)`,
/// where `extreme` counts shuffles at least as far from the null expectation `-1/(n-1)` as the observed I.
pub fn permutation_p_value(
    values: &[f64],
    wts: &SpatialWeights,
    permutations: usize,
    seed: u64,
) -> Result<f64, AssocError> {
    let observed = moran_global(values, wts)?;
    let expected = -1.0 / (values.len() as f64 - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = values.to_vec();
    let mut extreme = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        let i = moran_global(&shuffled, wts)?;
        if (i - expected).abs() >= (observed - expected).abs() {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (permutations + 1) as f64)
}

/// Writes `region_id,z_value,z_lag,lisa,z_error`.
pub fn write_scatter_csv<W: Write>(w: W, points: &[LisaPoint]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["region_id", "z_value", "z_lag", "lisa", "z_error"])?;
    for p in points {
        out.write_record([
            p.region.index.to_string(),
            p.z_value.to_string(),
            p.z_lag.to_string(),
            p.lisa.to_string(),
            p.z_error.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
