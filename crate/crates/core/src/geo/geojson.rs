//! Zone input/output as a GeoJSON FeatureCollection.
//!
//! Each feature is a Polygon or MultiPolygon with an integer `zone_id` property.

use std::path::Path;

use serde_json::{json, Value};

use super::{GeoError, LonLat, Polygon, Zone, ZoneScheme};

fn err(msg: impl Into<String>) -> GeoError {
    GeoError::GeoJson(msg.into())
}

fn parse_ring(v: &Value) -> Result<Vec<LonLat>, GeoError> {
    let arr = v.as_array().ok_or_else(|| err("ring is not an array"))?;
    arr.iter()
        .map(|pos| {
            let p = pos.as_array().ok_or_else(|| err("position is not an array"))?;
            match (p.first().and_then(Value::as_f64), p.get(1).and_then(Value::as_f64)) {
                (Some(lon), Some(lat)) => Ok(LonLat::new(lon, lat)),
                _ => Err(err("position needs two numbers")),
            }
        })
        .collect()
}

fn parse_polygon(v: &Value) -> Result<Polygon, GeoError> {
    let rings = v.as_array().ok_or_else(|| err("polygon coordinates are not an array"))?;
    let (ext, holes) = rings.split_first().ok_or_else(|| err("polygon without rings"))?;
    Ok(Polygon::new(
        parse_ring(ext)?,
        holes.iter().map(parse_ring).collect::<Result<_, _>>()?,
    ))
}

pub fn zones_from_geojson(doc: &Value) -> Result<ZoneScheme, GeoError> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(err("expected a FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| err("missing features"))?;
    let mut zones = Vec::with_capacity(features.len());
    for (k, f) in features.iter().enumerate() {
        let zone_id = f
            .get("properties")
            .and_then(|p| p.get("zone_id"))
            .and_then(Value::as_i64)
            .ok_or_else(|| err(format!("feature {k} lacks an integer zone_id")))?;
        let geom = f.get("geometry").ok_or_else(|| err(format!("feature {k} lacks geometry")))?;
        let coords = geom
            .get("coordinates")
            .ok_or_else(|| err(format!("feature {k} lacks coordinates")))?;
        let polygons = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![parse_polygon(coords)?],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| err("multipolygon coordinates are not an array"))?
                .iter()
                .map(parse_polygon)
                .collect::<Result<_, _>>()?,
            other => return Err(err(format!("feature {k}: unsupported geometry {other:?}"))),
        };
        zones.push(Zone { zone_id, polygons });
    }
    ZoneScheme::new(zones)
}

fn ring_json(ring: &[LonLat]) -> Value {
    let mut pts: Vec<Value> = ring.iter().map(|p| json!([p.lon, p.lat])).collect();
    if let Some(first) = ring.first() {
        pts.push(json!([first.lon, first.lat]));
    }
    Value::Array(pts)
}

pub fn zones_to_geojson(zones: &ZoneScheme) -> Value {
    let features: Vec<Value> = zones
        .zones()
        .iter()
        .map(|z| {
            let polys: Vec<Value> = z
                .polygons
                .iter()
                .map(|p| Value::Array(p.rings().map(ring_json).collect()))
                .collect();
            let geometry = if polys.len() == 1 {
                json!({"type": "Polygon", "coordinates": polys[0]})
            } else {
                json!({"type": "MultiPolygon", "coordinates": polys})
            };
            json!({"type": "Feature", "properties": {"zone_id": z.zone_id}, "geometry": geometry})
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn read_zones_geojson(path: &Path) -> Result<ZoneScheme, GeoError> {
    let text = std::fs::read_to_string(path).map_err(|e| GeoError::Io(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    zones_from_geojson(&doc)
}

pub fn write_zones_geojson(path: &Path, zones: &ZoneScheme) -> Result<(), GeoError> {
    let text = serde_json::to_string(&zones_to_geojson(zones)).map_err(|e| err(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| GeoError::Io(format!("{}: {e}", path.display())))
}
