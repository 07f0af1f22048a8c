//! Dense flow tensors and their on-disk format.
//!
//! File layout: one UTF-8 JSON header line
//! `{"w":..,"h":..,"t_first":..,"t_last":..,"kind":"observed"|"predicted","dtype":"f64le"}`
//! terminated by `\n`, then raw little-endian f64 values, slot-major then
//! row-major cells.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad tensor header: {0}")]
    Header(String),
    #[error("unsupported dtype {0:?}")]
    Dtype(String),
    #[error("payload holds {found} bytes, header implies {expected}")]
    Length { expected: usize, found: usize },
    #[error("tensor values must be non-negative and finite (slot {slot}, cell {cell}: {value})")]
    InvalidValue { slot: usize, cell: usize, value: f64 },
    #[error("slot range [{t_first}, {t_last}] is empty")]
    EmptyRange { t_first: usize, t_last: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Observed,
    Predicted,
}

/// Grid dimensions and inclusive slot range shared by matching tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorDims {
    pub w: usize,
    pub h: usize,
    pub t_first: usize,
    pub t_last: usize,
}

impl TensorDims {
    pub fn cells(&self) -> usize {
        self.w * self.h
    }

    pub fn slots(&self) -> usize {
        self.t_last + 1 - self.t_first
    }
}

impl std::fmt::Display for TensorDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{} slots [{}, {}]", self.w, self.h, self.t_first, self.t_last)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    w: usize,
    h: usize,
    t_first: usize,
    t_last: usize,
    kind: TensorKind,
    dtype: String,
}

const DTYPE: &str = "f64le";

/// Observed `x_{g,t}` or predicted `y_{g,t}` values over a slot range.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTensor {
    dims: TensorDims,
    kind: TensorKind,
    values: Vec<f64>,
}

impl FlowTensor {
    pub fn zeros(dims: TensorDims, kind: TensorKind) -> Self {
        Self {
            dims,
            kind,
            values: vec![0.0; dims.slots() * dims.cells()],
        }
    }

    /// Builds a tensor from slot-major values, rejecting negatives and non-finite entries.
    pub fn from_values(dims: TensorDims, kind: TensorKind, values: Vec<f64>) -> Result<Self, TensorError> {
        if dims.t_last < dims.t_first {
            return Err(TensorError::EmptyRange {
                t_first: dims.t_first,
                t_last: dims.t_last,
            });
        }
        let expected = dims.slots() * dims.cells();
        if values.len() != expected {
            return Err(TensorError::Length {
                expected: expected * 8,
                found: values.len() * 8,
            });
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(TensorError::InvalidValue {
                slot: dims.t_first + i / dims.cells(),
                cell: i % dims.cells(),
                value: values[i],
            });
        }
        Ok(Self { dims, kind, values })
    }

    pub fn dims(&self) -> TensorDims {
        self.dims
    }

    pub fn kind(&self) -> TensorKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: TensorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn w(&self) -> usize {
        self.dims.w
    }

    pub fn h(&self) -> usize {
        self.dims.h
    }

    pub fn cells(&self) -> usize {
        self.dims.cells()
    }

    pub fn slots(&self) -> usize {
        self.dims.slots()
    }

    pub fn t_first(&self) -> usize {
        self.dims.t_first
    }

    pub fn t_last(&self) -> usize {
        self.dims.t_last
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at relative slot `slot` (0-based within the range) and cell.
    pub fn at(&self, slot: usize, cell: usize) -> f64 {
        self.values[slot * self.dims.cells() + cell]
    }

    /// Value at absolute slot ordinal `t`, if within range.
    pub fn get(&self, t: usize, cell: usize) -> Option<f64> {
        if t < self.dims.t_first || t > self.dims.t_last || cell >= self.cells() {
            return None;
        }
        Some(self.at(t - self.dims.t_first, cell))
    }

    pub fn slot(&self, slot: usize) -> &[f64] {
        let c = self.dims.cells();
        &self.values[slot * c..(slot + 1) * c]
    }

    pub fn series(&self, cell: usize) -> Vec<f64> {
        (0..self.slots()).map(|s| self.at(s, cell)).collect()
    }

    /// Sub-tensor over relative slots `[from, to)`.
    pub fn slice_slots(&self, from: usize, to: usize) -> FlowTensor {
        assert!(from < to && to <= self.slots(), "slot slice out of range");
        let c = self.cells();
        FlowTensor {
            dims: TensorDims {
                w: self.dims.w,
                h: self.dims.h,
                t_first: self.dims.t_first + from,
                t_last: self.dims.t_first + to - 1,
            },
            kind: self.kind,
            values: self.values[from * c..to * c].to_vec(),
        }
    }

    /// Per-cell mean over all slots.
    pub fn cell_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cells()];
        for s in 0..self.slots() {
            for (a, v) in acc.iter_mut().zip(self.slot(s)) {
                *a += v;
            }
        }
        let n = self.slots() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn slot_total(&self, slot: usize) -> f64 {
        self.slot(slot).iter().sum()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TensorError> {
        let header = Header {
            w: self.dims.w,
            h: self.dims.h,
            t_first: self.dims.t_first,
            t_last: self.dims.t_last,
            kind: self.kind,
            dtype: DTYPE.to_string(),
        };
        let line = serde_json::to_string(&header).map_err(|e| TensorError::Header(e.to_string()))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, TensorError> {
        let mut r = BufReader::new(r);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(TensorError::Header("missing header terminator".into()));
        }
        line.pop();
        let text = std::str::from_utf8(&line).map_err(|e| TensorError::Header(e.to_string()))?;
        let header: Header = serde_json::from_str(text).map_err(|e| TensorError::Header(e.to_string()))?;
        if header.dtype != DTYPE {
            return Err(TensorError::Dtype(header.dtype));
        }
        let dims = TensorDims {
            w: header.w,
            h: header.h,
            t_first: header.t_first,
            t_last: header.t_last,
        };
        if dims.t_last < dims.t_first {
            return Err(TensorError::EmptyRange {
                t_first: dims.t_first,
                t_last: dims.t_last,
            });
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let expected = dims.slots() * dims.cells() * 8;
        if payload.len() != expected {
            return Err(TensorError::Length {
                expected,
                found: payload.len(),
            });
        }
        let values = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        FlowTensor::from_values(dims, header.kind, values)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), TensorError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_file(path: &Path) -> Result<Self, TensorError> {
        Self::read_from(File::open(path)?)
    }
}
