//! Prediction sources: external model output or built-in naive baselines.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{FlowTensor, TensorDims, TensorError, TensorKind};

/// One week of 30-minute slots.
pub const WEEK_SLOTS: usize = 7 * 48;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: TensorDims, found: TensorDims },
    #[error("wrong tensor kind: expected predicted, found {0:?}")]
    WrongKind(TensorKind),
    #[error("negative prediction at slot {slot}, cell {cell}: {value}")]
    NegativePrediction { slot: usize, cell: usize, value: f64 },
    #[error("insufficient history: need {needed} slots before slot {at}, training covers {available}")]
    InsufficientHistory { needed: usize, available: usize, at: usize },
    #[error("observed test window does not follow the training window")]
    Discontiguous,
    #[error(transparent)]
    Tensor(TensorError),
}

impl From<TensorError> for PredictError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::InvalidValue { slot, cell, value } => PredictError::NegativePrediction { slot, cell, value },
            other => PredictError::Tensor(other),
        }
    }
}

/// Multiplicative Gaussian noise applied to baseline output, seeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Relative standard deviation.
    pub level: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictionSource {
    /// A tensor file per (shape, scale) in `dir`, named `<shape>_<scale>.tensor`.
    File { dir: PathBuf },
    SeasonalNaive {
        #[serde(default = "default_lag")]
        lag: usize,
        #[serde(default)]
        noise: Option<NoiseSpec>,
    },
    SlotwiseMean {
        #[serde(default = "default_lag")]
        period: usize,
    },
}

fn default_lag() -> usize {
    WEEK_SLOTS
}

impl Default for PredictionSource {
    fn default() -> Self {
        PredictionSource::SeasonalNaive { lag: WEEK_SLOTS, noise: None }
    }
}

/// Loads an external prediction tensor, checking kind, dimensions, and sign.
pub fn load_predictions(path: &Path, expected: TensorDims) -> Result<FlowTensor, PredictError> {
    let t = FlowTensor::read_file(path)?;
    if t.kind() != TensorKind::Predicted {
        return Err(PredictError::WrongKind(t.kind()));
    }
    if t.dims() != expected {
        return Err(PredictError::DimensionMismatch { expected, found: t.dims() });
    }
    Ok(t)
}

fn check_contiguous(train: &FlowTensor, test: &FlowTensor) -> Result<(), PredictError> {
    if train.w() != test.w() || train.h() != test.h() {
        return Err(PredictError::DimensionMismatch { expected: train.dims(), found: test.dims() });
    }
    if test.t_first() != train.t_last() + 1 {
        return Err(PredictError::Discontiguous);
    }
    Ok(())
}

/// `y_{g,t} = x_{g,t-lag}` over the concatenated observed history (train then test).
///
/// `test` carries the observed test window; predictions never feed back into history.
pub fn seasonal_naive(train: &FlowTensor, test: &FlowTensor, lag: usize) -> Result<FlowTensor, PredictError> {
    check_contiguous(train, test)?;
    if lag == 0 || train.slots() < lag {
        return Err(PredictError::InsufficientHistory {
            needed: lag,
            available: train.slots(),
            at: test.t_first(),
        });
    }
    let cells = test.cells();
    let mut out = FlowTensor::zeros(test.dims(), TensorKind::Predicted);
    out.values_mut().par_chunks_mut(cells).enumerate().for_each(|(s, dst)| {
        // relative index into train ++ test
        let src = train.slots() + s - lag;
        let row = if src < train.slots() { train.slot(src) } else { test.slot(src - train.slots()) };
        dst.copy_from_slice(row);
    });
    Ok(out)
}

/// `y_{g,t}` = mean of training values sharing `t`'s slot-of-period.
pub fn slotwise_mean(train: &FlowTensor, test_dims: TensorDims, period: usize) -> Result<FlowTensor, PredictError> {
    if period == 0 || train.slots() < period {
        return Err(PredictError::InsufficientHistory {
            needed: period,
            available: train.slots(),
            at: test_dims.t_first,
        });
    }
    if train.w() != test_dims.w || train.h() != test_dims.h {
        return Err(PredictError::DimensionMismatch { expected: train.dims(), found: test_dims });
    }
    let cells = train.cells();
    let mut sums = vec![0.0; period * cells];
    let mut n = vec![0usize; period];
    for s in 0..train.slots() {
        let phase = (train.t_first() + s) % period;
        n[phase] += 1;
        for (acc, v) in sums[phase * cells..(phase + 1) * cells].iter_mut().zip(train.slot(s)) {
            *acc += v;
        }
    }
    let mut out = FlowTensor::zeros(test_dims, TensorKind::Predicted);
    out.values_mut().par_chunks_mut(cells).enumerate().for_each(|(s, dst)| {
        let phase = (test_dims.t_first + s) % period;
        let k = n[phase] as f64;
        for (d, acc) in dst.iter_mut().zip(&sums[phase * cells..(phase + 1) * cells]) {
            *d = acc / k;
        }
    });
    Ok(out)
}

/// Applies `y <- max(0, y * (1 + level * N(0,1)))`, deterministic in the seed.
pub fn inject_noise(pred: FlowTensor, noise: NoiseSpec) -> FlowTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut pred = pred;
    for v in pred.values_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v = (*v * (1.0 + noise.level * e)).max(0.0);
    }
    pred
}
