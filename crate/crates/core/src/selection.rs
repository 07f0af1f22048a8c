//! Server-side resolution of point, rectangle, and lasso selections made in
//! the map, scatter, or attribution view, with cross-scale expansion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Scale, Shape};
use crate::geo::{Containment, LonLat, Polygon};
use crate::layout::dyadic_children;
use crate::store::RunData;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("malformed geometry: {0}")]
    Malformed(String),
    #[error("{0}")]
    NotFound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Map,
    Scatter,
    Attribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    Point,
    Rect,
    Lasso,
    Ids,
}

/// Coordinates are lon/lat on the map, (z_value, z_lag) on the scatter, and
/// plot-local x/y in an attribution plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionRequest {
    #[serde(default)]
    pub run: Option<String>,
    pub shape: Shape,
    pub scale: Scale,
    pub view: View,
    pub tool: Tool,
    #[serde(default)]
    pub point: Option<[f64; 2]>,
    /// Two opposite corners `[x0, y0, x1, y1]`.
    #[serde(default)]
    pub rect: Option<[f64; 4]>,
    #[serde(default)]
    pub lasso: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub ids: Option<Vec<usize>>,
    /// Attribution plot within the scale; defaults to 0.
    #[serde(default)]
    pub subset_index: Option<usize>,
    #[serde(default)]
    pub expand_to: Vec<Scale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub shape: Shape,
    pub scale: Scale,
    pub view: View,
    pub tool: Tool,
    pub ids: Vec<usize>,
    /// Descendants at each requested finer scale.
    pub expanded: BTreeMap<String, Vec<usize>>,
}

enum Geometry {
    Point(f64, f64),
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Lasso(Polygon),
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn geometry(req: &SelectionRequest) -> Result<Option<Geometry>, SelectionError> {
    let bad = |m: &str| SelectionError::Malformed(m.into());
    Ok(match req.tool {
        Tool::Point => {
            let p = req.point.ok_or_else(|| bad("point tool needs `point`"))?;
            if !finite(&p) {
                return Err(bad("non-finite point"));
            }
            Some(Geometry::Point(p[0], p[1]))
        }
        Tool::Rect => {
            let r = req.rect.ok_or_else(|| bad("rect tool needs `rect`"))?;
            if !finite(&r) {
                return Err(bad("non-finite rect"));
            }
            Some(Geometry::Rect { x0: r[0].min(r[2]), y0: r[1].min(r[3]), x1: r[0].max(r[2]), y1: r[1].max(r[3]) })
        }
        Tool::Lasso => {
            let ring = req.lasso.as_ref().ok_or_else(|| bad("lasso tool needs `lasso`"))?;
            if ring.len() < 3 {
                return Err(bad("lasso needs at least 3 vertices"));
            }
            if !ring.iter().all(|p| finite(p)) {
                return Err(bad("non-finite lasso vertex"));
            }
            // planar even-odd test; the coordinate names are incidental
            Some(Geometry::Lasso(Polygon::new(ring.iter().map(|p| LonLat::new(p[0], p[1])).collect(), Vec::new())))
        }
        Tool::Ids => None,
    })
}

fn inside(g: &Geometry, x: f64, y: f64) -> bool {
    match g {
        Geometry::Point(..) => false,
        Geometry::Rect { x0, y0, x1, y1 } => x >= *x0 && x <= *x1 && y >= *y0 && y <= *y1,
        Geometry::Lasso(poly) => poly.locate(LonLat::new(x, y)) != Containment::Outside,
    }
}

/// Cells of `to` covered by cell `index` of `from`; `to` must refine `from` by integer factors.
pub fn expand(index: usize, from: Scale, to: Scale) -> Result<Vec<usize>, SelectionError> {
    if to.w % from.w != 0 || to.h % from.h != 0 || to.w < from.w || to.h < from.h {
        return Err(SelectionError::Malformed(format!("scale {to} does not refine {from}")));
    }
    Ok(dyadic_children(index, from.w, to.w, to.h, from.h))
}

pub fn resolve_selection(req: &SelectionRequest, run: &RunData) -> Result<SelectionResult, SelectionError> {
    let combo = run.combo(req.shape, req.scale).map_err(|e| SelectionError::NotFound(e.to_string()))?;
    let cells = combo.grid.cell_count();
    let geom = geometry(req)?;

    let mut ids: Vec<usize> = match (&geom, req.view) {
        (None, _) => {
            let ids = req.ids.clone().ok_or_else(|| SelectionError::Malformed("ids tool needs `ids`".into()))?;
            if let Some(bad) = ids.iter().find(|&&i| i >= cells) {
                return Err(SelectionError::Malformed(format!("region {bad} is outside the {} scheme", req.scale)));
            }
            ids
        }
        (Some(Geometry::Point(x, y)), View::Map) => combo.grid.assign(LonLat::new(*x, *y)).into_iter().collect(),
        (Some(g), View::Map) => (0..cells)
            .filter(|&i| {
                let c = combo.grid.cell_center(i);
                inside(g, c.lon, c.lat)
            })
            .collect(),
        (Some(g), View::Scatter) => {
            let pts = combo.scatter.points.iter().filter(|p| p.colorable);
            match g {
                Geometry::Point(x, y) => pts
                    .map(|p| ((p.z_value - x).hypot(p.z_lag - y), p.region.index))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(_, id)| id)
                    .into_iter()
                    .collect(),
                _ => pts.filter(|p| inside(g, p.z_value, p.z_lag)).map(|p| p.region.index).collect(),
            }
        }
        (Some(g), View::Attribution) => {
            let layout = run
                .layouts
                .get(&req.shape)
                .ok_or_else(|| SelectionError::NotFound(format!("no layout for shape {}", req.shape)))?;
            let subset = req.subset_index.unwrap_or(0);
            let label = req.scale.to_string();
            let plot = layout
                .plots_at(&label)
                .find(|p| p.subset_index == subset)
                .ok_or_else(|| SelectionError::NotFound(format!("no plot {subset} at {label}")))?;
            match g {
                Geometry::Point(x, y) => plot
                    .dots
                    .iter()
                    .map(|d| ((d.x - x).hypot(d.y - y), d))
                    .filter(|(dist, d)| *dist <= d.diameter / 2.0)
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.region_id.cmp(&b.1.region_id)))
                    .map(|(_, d)| d.region_id)
                    .into_iter()
                    .collect(),
                _ => plot.dots.iter().filter(|d| inside(g, d.x, d.y)).map(|d| d.region_id).collect(),
            }
        }
    };
    ids.sort_unstable();
    ids.dedup();

    let mut expanded = BTreeMap::new();
    for &to in &req.expand_to {
        let mut out = Vec::new();
        for &i in &ids {
            out.extend(expand(i, req.scale, to)?);
        }
        out.sort_unstable();
        out.dedup();
        expanded.insert(to.to_string(), out);
    }
    Ok(SelectionResult { shape: req.shape, scale: req.scale, view: req.view, tool: req.tool, ids, expanded })
}
