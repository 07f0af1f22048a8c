//! Flow counting per region and slot, zone-to-grid rasterization, and
//! train/test splitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{FractionMap, GridScheme, PointResolver, ZoneScheme};
use crate::ingest::{MovementRecord, SlotClock};
use crate::tensor::{FlowTensor, TensorDims, TensorKind};

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("fraction map built for a {map_w}x{map_h} grid / {map_zones} zones, got {grid_w}x{grid_h} / {zones} zones")]
    DimensionMismatch {
        map_w: usize,
        map_h: usize,
        map_zones: usize,
        grid_w: usize,
        grid_h: usize,
        zones: usize,
    },
    #[error("day budget {train}+{test} does not match the {total} days in the tensor")]
    DayBudget { train: usize, test: usize, total: usize },
    #[error("test window must contain at least one day")]
    NoTestDays,
    #[error("training window must contain at least one day")]
    NoTrainDays,
    #[error("tensor has {slots} slots, not a whole number of {per_day}-slot days")]
    PartialDay { slots: usize, per_day: usize },
}

/// Bookkeeping for records that did not land in the output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationTally {
    pub assigned: usize,
    /// Records whose get-on position resolved to no region.
    pub unassigned: usize,
    /// Records whose get-on slot fell outside `[0, slot_count)`.
    pub out_of_range: usize,
}

/// Integer counts `x_{r,t}` for zone ordinals over slots `[0, slot_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneFlow {
    /// `counts[zone][slot]`.
    pub counts: Vec<Vec<u64>>,
    pub slot_count: usize,
}

impl ZoneFlow {
    pub fn zone_count(&self) -> usize {
        self.counts.len()
    }

    pub fn slot_total(&self, slot: usize) -> u64 {
        self.counts.iter().map(|c| c[slot]).sum()
    }
}

/// Resolves every record to a flat `slot * regions + region` index (or none).
fn resolve<R: PointResolver + Sync>(
    records: &[MovementRecord],
    resolver: &R,
    clock: &SlotClock,
    slot_count: usize,
) -> (Vec<usize>, AggregationTally) {
    let regions = resolver.region_count();
    let resolved: Vec<Result<usize, bool>> = records
        .par_iter()
        .map(|m| {
            let slot = match clock.bin(m.on_time) {
                Ok(s) if s.0 < slot_count => s.0,
                _ => return Err(false),
            };
            match resolver.assign_point(m.on_pos) {
                Some(r) => Ok(slot * regions + r.index),
                None => Err(true),
            }
        })
        .collect();
    let mut tally = AggregationTally::default();
    let mut hits = Vec::with_capacity(resolved.len());
    for r in resolved {
        match r {
            Ok(i) => {
                tally.assigned += 1;
                hits.push(i);
            }
            Err(true) => tally.unassigned += 1,
            Err(false) => tally.out_of_range += 1,
        }
    }
    (hits, tally)
}

/// Counts get-on events per grid cell and slot directly into a tensor over slots `[0, slot_count)`.
pub fn aggregate_grid(
    records: &[MovementRecord],
    grid: &GridScheme,
    clock: &SlotClock,
    slot_count: usize,
) -> (FlowTensor, AggregationTally) {
    assert!(slot_count > 0, "slot_count must be positive");
    let (hits, tally) = resolve(records, grid, clock, slot_count);
    let dims = TensorDims {
        w: grid.w,
        h: grid.h,
        t_first: 0,
        t_last: slot_count - 1,
    };
    let mut t = FlowTensor::zeros(dims, TensorKind::Observed);
    let values = t.values_mut();
    for i in hits {
        values[i] += 1.0;
    }
    (t, tally)
}

/// Counts get-on events per zone ordinal and slot.
pub fn aggregate_zones(
    records: &[MovementRecord],
    zones: &ZoneScheme,
    clock: &SlotClock,
    slot_count: usize,
) -> (ZoneFlow, AggregationTally) {
    let (hits, tally) = resolve(records, zones, clock, slot_count);
    let n = zones.len();
    let mut counts = vec![vec![0u64; slot_count]; n];
    for i in hits {
        counts[i % n][i / n] += 1;
    }
    (ZoneFlow { counts, slot_count }, tally)
}

/// Redistributes zone counts onto grid cells by area fraction:
/// `x_{g,t} = Σ_i x_{r_i,t} · S(r_i ∩ g) / S(r_i)`.
pub fn rasterize(zflow: &ZoneFlow, fractions: &FractionMap, grid: &GridScheme) -> Result<FlowTensor, AggregateError> {
    if fractions.grid_w != grid.w || fractions.grid_h != grid.h || fractions.zone_count() != zflow.zone_count() {
        return Err(AggregateError::DimensionMismatch {
            map_w: fractions.grid_w,
            map_h: fractions.grid_h,
            map_zones: fractions.zone_count(),
            grid_w: grid.w,
            grid_h: grid.h,
            zones: zflow.zone_count(),
        });
    }
    let dims = TensorDims {
        w: grid.w,
        h: grid.h,
        t_first: 0,
        t_last: zflow.slot_count - 1,
    };
    let mut t = FlowTensor::zeros(dims, TensorKind::Observed);
    let cells = grid.cell_count();
    t.values_mut().par_chunks_mut(cells).enumerate().for_each(|(slot, out)| {
        for (zone, entries) in fractions.per_zone.iter().enumerate() {
            let x = zflow.counts[zone][slot];
            if x == 0 {
                continue;
            }
            let x = x as f64;
            for &(cell, frac) in entries {
                out[cell] += x * frac;
            }
        }
    });
    Ok(t)
}

/// Splits along the slot axis into a `train_days` prefix and a `test_days` suffix.
pub fn split(
    tensor: &FlowTensor,
    train_days: usize,
    test_days: usize,
    slots_per_day: usize,
) -> Result<(FlowTensor, FlowTensor), AggregateError> {
    if test_days == 0 {
        return Err(AggregateError::NoTestDays);
    }
    if train_days == 0 {
        return Err(AggregateError::NoTrainDays);
    }
    if tensor.slots() % slots_per_day != 0 {
        return Err(AggregateError::PartialDay {
            slots: tensor.slots(),
            per_day: slots_per_day,
        });
    }
    let total = tensor.slots() / slots_per_day;
    if train_days + test_days != total {
        return Err(AggregateError::DayBudget {
            train: train_days,
            test: test_days,
            total,
        });
    }
    let cut = train_days * slots_per_day;
    Ok((tensor.slice_slots(0, cut), tensor.slice_slots(cut, tensor.slots())))
}
