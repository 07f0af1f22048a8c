//! Diagnostics engine for the modifiable areal unit problem in spatio-temporal
//! traffic prediction: flow aggregation under grid and zone partitions,
//! scale-independent error metrics, spatial association, and multi-scale
//! error-attribution layouts, served read-only over HTTP.

pub mod aggregate;
pub mod assoc;
pub mod config;
pub mod geo;
pub mod ingest;
pub mod layout;
pub mod metrics;
pub mod pipeline;
pub mod predict;
pub mod selection;
pub mod service;
pub mod store;
pub mod synth;
pub mod tensor;

pub use config::{RunConfig, Scale, Shape};
pub use geo::{BBox, GridScheme, LonLat, RegionId, SchemeKind, ZoneScheme};
pub use ingest::{CleaningReport, MovementRecord, Span};
pub use layout::{DotLayout, DotSpec, HierarchyArrangement};
pub use metrics::{Metric, RegionDiagnostics, VsupCell};
pub use pipeline::{run_pipeline, PipelineError, Stage};
pub use store::{RunData, RunStore};
pub use tensor::{FlowTensor, TensorDims, TensorKind};
