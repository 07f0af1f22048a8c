//! Partition schemes: uniform lon/lat grids and zone polygons.
//!
//! All geometry is planar in degrees. Only area ratios are ever consumed
//! downstream, so no projection is applied.

mod clip;
mod geojson;
mod grid;
mod zone;

pub use clip::{clip_ring_to_rect, ring_signed_area};
pub use geojson::{read_zones_geojson, write_zones_geojson, zones_from_geojson, zones_to_geojson};
pub use grid::GridScheme;
pub use zone::{intersection_fractions, synthetic_zones, Containment, FractionMap, Polygon, Zone, ZoneScheme};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coordinate snap tolerance in degrees used by clipping and containment.
pub const SNAP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("grid dimensions must be positive, got {w}x{h}")]
    NonPositiveDimensions { w: usize, h: usize },
    #[error("degenerate bounding box: {0}")]
    DegenerateBBox(String),
    #[error("invalid geometry for zone {zone_id}: {reason}")]
    InvalidGeometry { zone_id: i64, reason: String },
    #[error("zones {a} and {b} overlap")]
    OverlappingZones { a: i64, b: i64 },
    #[error("duplicate zone_id {0}")]
    DuplicateZoneId(i64),
    #[error("GeoJSON: {0}")]
    GeoJson(String),
    #[error("io: {0}")]
    Io(String),
}

/// A longitude/latitude position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl BBox {
    pub fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64) -> Result<Self, GeoError> {
        let b = Self {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
        };
        b.validate()?;
        Ok(b)
    }

    /// The study extent used throughout the original analysis.
    pub fn shenzhen() -> Self {
        Self {
            lon_min: 113.775,
            lon_max: 114.629,
            lat_min: 22.443,
            lat_max: 22.855,
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let all_finite = [self.lon_min, self.lon_max, self.lat_min, self.lat_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.lon_min >= self.lon_max || self.lat_min >= self.lat_max {
            return Err(GeoError::DegenerateBBox(format!(
                "[{}, {}] x [{}, {}]",
                self.lon_min, self.lon_max, self.lat_min, self.lat_max
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.lon_max - self.lon_min
    }

    pub fn height(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> LonLat {
        LonLat::new(
            0.5 * (self.lon_min + self.lon_max),
            0.5 * (self.lat_min + self.lat_max),
        )
    }

    /// Closed containment (edges included).
    pub fn contains(&self, p: LonLat) -> bool {
        p.lon >= self.lon_min && p.lon <= self.lon_max && p.lat >= self.lat_min && p.lat <= self.lat_max
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.lon_min <= other.lon_max
            && other.lon_min <= self.lon_max
            && self.lat_min <= other.lat_max
            && other.lat_min <= self.lat_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Grid,
    Zone,
}

/// A region within a partition scheme: a row-major grid cell index or a zone ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionId {
    pub kind: SchemeKind,
    pub index: usize,
}

impl RegionId {
    pub fn cell(index: usize) -> Self {
        Self {
            kind: SchemeKind::Grid,
            index,
        }
    }

    pub fn zone(index: usize) -> Self {
        Self {
            kind: SchemeKind::Zone,
            index,
        }
    }
}

/// Something that can resolve a point to the region containing it.
pub trait PointResolver {
    fn region_count(&self) -> usize;
    fn assign_point(&self, p: LonLat) -> Option<RegionId>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_bbox_rejected() {
        assert!(BBox::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(BBox::new(f64::NAN, 1.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, 1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn shenzhen_extent_is_valid() {
        BBox::shenzhen().validate().unwrap();
    }
}
