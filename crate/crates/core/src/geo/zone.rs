use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use robust::{orient2d, Coord};
use serde::{Deserialize, Serialize};

use super::clip::{clip_ring_to_lat_strip, clip_ring_to_lon_strip, ring_signed_area};
use super::{BBox, GeoError, GridScheme, LonLat, PointResolver, RegionId};

/// A simple polygon with optional holes. Rings are stored open (no repeated closing vertex).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<LonLat>,
    pub holes: Vec<Vec<LonLat>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Boundary,
    Outside,
}

impl Polygon {
    pub fn new(exterior: Vec<LonLat>, holes: Vec<Vec<LonLat>>) -> Self {
        Self {
            exterior: open_ring(exterior),
            holes: holes.into_iter().map(open_ring).collect(),
        }
    }

    pub fn rings(&self) -> impl Iterator<Item = &[LonLat]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior).abs()
            - self.holes.iter().map(|h| ring_signed_area(h).abs()).sum::<f64>()
    }

    pub fn bbox(&self) -> BBox {
        ring_bbox(&self.exterior)
    }

    /// Even-odd containment over all rings, with boundary detection.
    pub fn locate(&self, p: LonLat) -> Containment {
        let mut inside = false;
        for ring in self.rings() {
            let n = ring.len();
            for i in 0..n {
                let a = ring[i];
                let b = ring[(i + 1) % n];
                if on_segment(a, b, p) {
                    return Containment::Boundary;
                }
                if (a.lat > p.lat) != (b.lat > p.lat) {
                    let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                    if p.lon < x {
                        inside = !inside;
                    }
                }
            }
        }
        if inside {
            Containment::Inside
        } else {
            Containment::Outside
        }
    }

    /// A point strictly inside the polygon, found on a horizontal scanline
    /// that avoids every vertex.
    pub fn interior_point(&self) -> Option<LonLat> {
        let mut lats: Vec<f64> = self.rings().flatten().map(|p| p.lat).collect();
        lats.sort_by(f64::total_cmp);
        lats.dedup();
        let mut best: Option<LonLat> = None;
        let mut best_width = 0.0;
        for pair in lats.windows(2) {
            let y = 0.5 * (pair[0] + pair[1]);
            let mut xs = Vec::new();
            for ring in self.rings() {
                let n = ring.len();
                for i in 0..n {
                    let a = ring[i];
                    let b = ring[(i + 1) % n];
                    if (a.lat > y) != (b.lat > y) {
                        xs.push(a.lon + (y - a.lat) * (b.lon - a.lon) / (b.lat - a.lat));
                    }
                }
            }
            xs.sort_by(f64::total_cmp);
            for span in xs.chunks_exact(2) {
                let width = span[1] - span[0];
                if width > best_width {
                    best_width = width;
                    best = Some(LonLat::new(0.5 * (span[0] + span[1]), y));
                }
            }
        }
        best
    }

    fn validate(&self, zone_id: i64) -> Result<(), GeoError> {
        let bad = |reason: String| GeoError::InvalidGeometry { zone_id, reason };
        for (k, ring) in self.rings().enumerate() {
            if ring.len() < 3 {
                return Err(bad(format!("ring {k} has fewer than 3 vertices")));
            }
            if ring.iter().any(|p| !p.lon.is_finite() || !p.lat.is_finite()) {
                return Err(bad(format!("ring {k} has non-finite coordinates")));
            }
            if ring_signed_area(ring) == 0.0 {
                return Err(bad(format!("ring {k} has zero area")));
            }
            if let Some((i, j)) = ring_self_intersection(ring) {
                return Err(bad(format!("ring {k} self-intersects at edges {i} and {j}")));
            }
        }
        for (k, hole) in self.holes.iter().enumerate() {
            let outer = Polygon {
                exterior: self.exterior.clone(),
                holes: Vec::new(),
            };
            if hole.iter().any(|&p| outer.locate(p) == Containment::Outside) {
                return Err(bad(format!("hole {k} lies outside the exterior ring")));
            }
        }
        if self.area() <= 0.0 {
            return Err(bad("non-positive area".into()));
        }
        Ok(())
    }
}

fn open_ring(mut ring: Vec<LonLat>) -> Vec<LonLat> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    ring
}

fn ring_bbox(ring: &[LonLat]) -> BBox {
    let mut b = BBox {
        lon_min: f64::INFINITY,
        lon_max: f64::NEG_INFINITY,
        lat_min: f64::INFINITY,
        lat_max: f64::NEG_INFINITY,
    };
    for p in ring {
        b.lon_min = b.lon_min.min(p.lon);
        b.lon_max = b.lon_max.max(p.lon);
        b.lat_min = b.lat_min.min(p.lat);
        b.lat_max = b.lat_max.max(p.lat);
    }
    b
}

fn rc(p: LonLat) -> Coord<f64> {
    Coord { x: p.lon, y: p.lat }
}

fn orient(a: LonLat, b: LonLat, c: LonLat) -> i8 {
    let v = orient2d(rc(a), rc(b), rc(c));
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn within_box(a: LonLat, b: LonLat, p: LonLat) -> bool {
    p.lon >= a.lon.min(b.lon) && p.lon <= a.lon.max(b.lon) && p.lat >= a.lat.min(b.lat) && p.lat <= a.lat.max(b.lat)
}

fn on_segment(a: LonLat, b: LonLat, p: LonLat) -> bool {
    orient(a, b, p) == 0 && within_box(a, b, p)
}

/// Whether segments share any point (touching and collinear overlap included).
fn segments_intersect(a: LonLat, b: LonLat, c: LonLat, d: LonLat) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 {
        return true;
    }
    (o1 == 0 && within_box(a, b, c))
        || (o2 == 0 && within_box(a, b, d))
        || (o3 == 0 && within_box(c, d, a))
        || (o4 == 0 && within_box(c, d, b))
}

/// Whether segment interiors cross at a single point.
fn segments_cross_properly(a: LonLat, b: LonLat, c: LonLat, d: LonLat) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0 && o3 * o4 < 0
}

fn ring_self_intersection(ring: &[LonLat]) -> Option<(usize, usize)> {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in i + 1..n {
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Neighbouring edges may only share their common vertex.
                let shared = if j == i + 1 { b } else { a };
                let other_end = if j == i + 1 { d } else { c };
                let own_far = if j == i + 1 { a } else { b };
                if orient(own_far, shared, other_end) == 0
                    && (on_segment(own_far, shared, other_end) || on_segment(shared, other_end, own_far))
                {
                    return Some((i, j));
                }
            } else if segments_intersect(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub zone_id: i64,
    pub polygons: Vec<Polygon>,
}

impl Zone {
    pub fn area(&self) -> f64 {
        self.polygons.iter().map(Polygon::area).sum()
    }

    pub fn bbox(&self) -> BBox {
        let mut b = self.polygons[0].bbox();
        for p in &self.polygons[1..] {
            let o = p.bbox();
            b.lon_min = b.lon_min.min(o.lon_min);
            b.lon_max = b.lon_max.max(o.lon_max);
            b.lat_min = b.lat_min.min(o.lat_min);
            b.lat_max = b.lat_max.max(o.lat_max);
        }
        b
    }

    pub fn locate(&self, p: LonLat) -> Containment {
        let mut best = Containment::Outside;
        for poly in &self.polygons {
            match poly.locate(p) {
                Containment::Inside => return Containment::Inside,
                Containment::Boundary => best = Containment::Boundary,
                Containment::Outside => {}
            }
        }
        best
    }
}

const BUCKETS: usize = 64;

/// Validated, interior-disjoint zones ordered by `zone_id`; a zone's ordinal is its position.
#[derive(Debug, Clone)]
pub struct ZoneScheme {
    zones: Vec<Zone>,
    extent: BBox,
    buckets: Vec<Vec<usize>>,
}

impl ZoneScheme {
    pub fn new(mut zones: Vec<Zone>) -> Result<Self, GeoError> {
        if zones.is_empty() {
            return Err(GeoError::GeoJson("no zones".into()));
        }
        zones.sort_by_key(|z| z.zone_id);
        for pair in zones.windows(2) {
            if pair[0].zone_id == pair[1].zone_id {
                return Err(GeoError::DuplicateZoneId(pair[0].zone_id));
            }
        }
        for z in &zones {
            if z.polygons.is_empty() {
                return Err(GeoError::InvalidGeometry {
                    zone_id: z.zone_id,
                    reason: "no polygons".into(),
                });
            }
            for p in &z.polygons {
                p.validate(z.zone_id)?;
            }
        }
        check_disjoint(&zones)?;

        let mut extent = zones[0].bbox();
        for z in &zones[1..] {
            let b = z.bbox();
            extent.lon_min = extent.lon_min.min(b.lon_min);
            extent.lon_max = extent.lon_max.max(b.lon_max);
            extent.lat_min = extent.lat_min.min(b.lat_min);
            extent.lat_max = extent.lat_max.max(b.lat_max);
        }
        let mut scheme = Self {
            zones,
            extent,
            buckets: vec![Vec::new(); BUCKETS * BUCKETS],
        };
        for (ord, z) in scheme.zones.iter().enumerate() {
            let b = z.bbox();
            let (c0, r0) = scheme.bucket_of(b.lon_min, b.lat_min);
            let (c1, r1) = scheme.bucket_of(b.lon_max, b.lat_max);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    scheme.buckets[r * BUCKETS + c].push(ord);
                }
            }
        }
        Ok(scheme)
    }

    fn bucket_of(&self, lon: f64, lat: f64) -> (usize, usize) {
        let e = &self.extent;
        let fx = ((lon - e.lon_min) / (e.lon_max - e.lon_min).max(f64::MIN_POSITIVE) * BUCKETS as f64).floor();
        let fy = ((lat - e.lat_min) / (e.lat_max - e.lat_min).max(f64::MIN_POSITIVE) * BUCKETS as f64).floor();
        (
            (fx.max(0.0) as usize).min(BUCKETS - 1),
            (fy.max(0.0) as usize).min(BUCKETS - 1),
        )
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    pub fn extent(&self) -> BBox {
        self.extent
    }

    pub fn ordinal_of(&self, zone_id: i64) -> Option<usize> {
        self.zones.binary_search_by_key(&zone_id, |z| z.zone_id).ok()
    }
}

impl PointResolver for ZoneScheme {
    fn region_count(&self) -> usize {
        self.zones.len()
    }

    /// Interior hits win outright; on shared boundaries the lowest `zone_id` wins.
    fn assign_point(&self, p: LonLat) -> Option<RegionId> {
        let e = &self.extent;
        if p.lon < e.lon_min || p.lon > e.lon_max || p.lat < e.lat_min || p.lat > e.lat_max {
            return None;
        }
        let (c, r) = self.bucket_of(p.lon, p.lat);
        let mut boundary_hit: Option<usize> = None;
        for &ord in &self.buckets[r * BUCKETS + c] {
            match self.zones[ord].locate(p) {
                Containment::Inside => return Some(RegionId::zone(ord)),
                Containment::Boundary => {
                    boundary_hit = Some(boundary_hit.map_or(ord, |b| b.min(ord)));
                }
                Containment::Outside => {}
            }
        }
        boundary_hit.map(RegionId::zone)
    }
}

fn polygons_overlap(a: &Polygon, b: &Polygon) -> bool {
    if !a.bbox().intersects(&b.bbox()) {
        return false;
    }
    for ra in a.rings() {
        for rb in b.rings() {
            for i in 0..ra.len() {
                let (p, q) = (ra[i], ra[(i + 1) % ra.len()]);
                for j in 0..rb.len() {
                    if segments_cross_properly(p, q, rb[j], rb[(j + 1) % rb.len()]) {
                        return true;
                    }
                }
            }
        }
    }
    let probes = |src: &Polygon, dst: &Polygon| {
        src.rings().flatten().any(|&p| dst.locate(p) == Containment::Inside)
            || src
            .interior_point()
            .is_some_and(|ip| dst.locate(ip) == Containment::Inside)
    };
    probes(a, b) || probes(b, a)
}

fn check_disjoint(zones: &[Zone]) -> Result<(), GeoError> {
    let mut order: Vec<(f64, usize)> = zones.iter().enumerate().map(|(i, z)| (z.bbox().lon_min, i)).collect();
    order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let boxes: Vec<BBox> = zones.iter().map(Zone::bbox).collect();
    for (k, &(_, i)) in order.iter().enumerate() {
        for &(lon_min_j, j) in &order[k + 1..] {
            if lon_min_j > boxes[i].lon_max {
                break;
            }
            if !boxes[i].intersects(&boxes[j]) {
                continue;
            }
            let hit = zones[i]
                .polygons
                .iter()
                .any(|pa| zones[j].polygons.iter().any(|pb| polygons_overlap(pa, pb)));
            if hit {
                let (a, b) = (zones[i].zone_id.min(zones[j].zone_id), zones[i].zone_id.max(zones[j].zone_id));
                return Err(GeoError::OverlappingZones { a, b });
            }
        }
    }
    Ok(())
}

/// Area fractions `S(zone ∩ cell) / S(zone)` for every zone/cell pair with positive overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionMap {
    pub grid_w: usize,
    pub grid_h: usize,
    /// Per zone ordinal, `(cell, fraction)` sorted by cell.
    pub per_zone: Vec<Vec<(usize, f64)>>,
    /// Per zone ordinal, share of the zone's area falling outside the grid bbox.
    pub outside: Vec<f64>,
}

impl FractionMap {
    pub fn zone_count(&self) -> usize {
        self.per_zone.len()
    }

    pub fn fraction(&self, zone: usize, cell: usize) -> f64 {
        let entries = &self.per_zone[zone];
        entries
            .binary_search_by_key(&cell, |e| e.0)
            .map(|k| entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn zone_total(&self, zone: usize) -> f64 {
        self.per_zone[zone].iter().map(|e| e.1).sum()
    }
}

fn cell_range(lo: f64, hi: f64, n: usize, edge: impl Fn(usize) -> f64) -> Option<(usize, usize)> {
    if hi < edge(0) || lo > edge(n) {
        return None;
    }
    let mut first = 0;
    while first + 1 < n && edge(first + 1) <= lo {
        first += 1;
    }
    let mut last = first;
    while last + 1 < n && edge(last + 1) < hi {
        last += 1;
    }
    Some((first, last))
}

fn ring_cell_areas(ring: &[LonLat], grid: &GridScheme, sign: f64, acc: &mut BTreeMap<usize, f64>) {
    let b = ring_bbox(ring);
    let Some((c0, c1)) = cell_range(b.lon_min, b.lon_max, grid.w, |k| grid.col_edge(k)) else {
        return;
    };
    let Some((r0, r1)) = cell_range(b.lat_min, b.lat_max, grid.h, |k| grid.row_edge(k)) else {
        return;
    };
    for c in c0..=c1 {
        let strip = clip_ring_to_lon_strip(ring, grid.col_edge(c), grid.col_edge(c + 1));
        if strip.len() < 3 {
            continue;
        }
        for r in r0..=r1 {
            let piece = clip_ring_to_lat_strip(&strip, grid.row_edge(r), grid.row_edge(r + 1));
            let a = ring_signed_area(&piece) * sign;
            if a != 0.0 {
                *acc.entry(grid.index(c, r)).or_insert(0.0) += a;
            }
        }
    }
}

/// Computes zone-to-cell area fractions by exact clipping in planar lon/lat.
///
/// Zone mass falling outside the grid's bbox is dropped; it is reported per
/// zone in [`FractionMap::outside`] and logged.
pub fn intersection_fractions(zones: &ZoneScheme, grid: &GridScheme) -> FractionMap {
    let per: Vec<(Vec<(usize, f64)>, f64)> = zones
        .zones()
        .par_iter()
        .map(|zone| {
            let total = zone.area();
            let mut acc = BTreeMap::new();
            for poly in &zone.polygons {
                let ext_sign = ring_signed_area(&poly.exterior).signum();
                ring_cell_areas(&poly.exterior, grid, ext_sign, &mut acc);
                for hole in &poly.holes {
                    let hole_sign = -ring_signed_area(hole).signum();
                    ring_cell_areas(hole, grid, hole_sign, &mut acc);
                }
            }
            let entries: Vec<(usize, f64)> = acc
                .into_iter()
                .filter(|&(_, a)| a > 0.0)
                .map(|(cell, a)| (cell, a / total))
                .collect();
            let inside: f64 = entries.iter().map(|e| e.1).sum();
            (entries, (1.0 - inside).max(0.0))
        })
        .collect();

    let mut per_zone = Vec::with_capacity(per.len());
    let mut outside = Vec::with_capacity(per.len());
    for (ord, (entries, out)) in per.into_iter().enumerate() {
        if out > 1e-9 {
            log::warn!(
                "zone {} has {:.3}% of its area outside the grid extent; that mass is dropped",
                zones.zones()[ord].zone_id,
                out * 100.0
            );
        }
        per_zone.push(entries);
        outside.push(out);
    }
    FractionMap {
        grid_w: grid.w,
        grid_h: grid.h,
        per_zone,
        outside,
    }
}

/// Builds an irregular tessellation of `bbox` from a jittered `nx` x `ny` lattice.
///
/// Interior lattice vertices move by up to `jitter` cell sizes (clamped to
/// 0.25 so quads stay simple); boundary vertices slide along their edge.
pub fn synthetic_zones(bbox: BBox, nx: usize, ny: usize, jitter: f64, seed: u64) -> Result<ZoneScheme, GeoError> {
    if nx == 0 || ny == 0 {
        return Err(GeoError::NonPositiveDimensions { w: nx, h: ny });
    }
    bbox.validate()?;
    let jitter = jitter.clamp(0.0, 0.25);
    let dx = bbox.width() / nx as f64;
    let dy = bbox.height() / ny as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut verts = vec![LonLat::new(0.0, 0.0); (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            let mut lon = if i == nx { bbox.lon_max } else { bbox.lon_min + dx * i as f64 };
            let mut lat = if j == ny { bbox.lat_max } else { bbox.lat_min + dy * j as f64 };
            let jx: f64 = rng.random_range(-1.0..=1.0) * jitter * dx;
            let jy: f64 = rng.random_range(-1.0..=1.0) * jitter * dy;
            if i > 0 && i < nx {
                lon += jx;
            }
            if j > 0 && j < ny {
                lat += jy;
            }
            verts[j * (nx + 1) + i] = LonLat::new(lon, lat);
        }
    }
    let v = |i: usize, j: usize| verts[j * (nx + 1) + i];
    let mut zones = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            zones.push(Zone {
                zone_id: (j * nx + i + 1) as i64,
                polygons: vec![Polygon::new(vec![v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)], Vec::new())],
            });
        }
    }
    ZoneScheme::new(zones)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<LonLat> {
        v.iter().map(|&(x, y)| LonLat::new(x, y)).collect()
    }

    fn square_zone(id: i64, x0: f64, y0: f64, x1: f64, y1: f64) -> Zone {
        Zone {
            zone_id: id,
            polygons: vec![Polygon::new(pts(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)]), vec![])],
        }
    }

    fn grid2x2() -> GridScheme {
        GridScheme::build(BBox::new(0.0, 2.0, 0.0, 2.0).unwrap(), 2, 2).unwrap()
    }

    #[test]
    fn square_over_four_cells_splits_evenly() {
        let zs = ZoneScheme::new(vec![square_zone(1, 0.0, 0.0, 2.0, 2.0)]).unwrap();
        let f = intersection_fractions(&zs, &grid2x2());
        assert_eq!(f.per_zone[0], vec![(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)]);
    }

    #[test]
    fn zone_equal_to_cell_is_identity() {
        let zs = ZoneScheme::new(vec![square_zone(7, 1.0, 0.0, 2.0, 1.0)]).unwrap();
        let f = intersection_fractions(&zs, &grid2x2());
        assert_eq!(f.per_zone[0], vec![(1, 1.0)]);
        assert_eq!(f.fraction(0, 0), 0.0);
    }

    #[test]
    fn hole_reduces_area_and_fractions_sum_to_one() {
        let zone = Zone {
            zone_id: 3,
            polygons: vec![Polygon::new(
                pts(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]),
                vec![pts(&[(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75)])],
            )],
        };
        assert!((zone.area() - 3.75).abs() < 1e-15);
        let zs = ZoneScheme::new(vec![zone]).unwrap();
        let f = intersection_fractions(&zs, &grid2x2());
        assert!((f.zone_total(0) - 1.0).abs() < 1e-12);
        assert!((f.fraction(0, 0) - 0.75 / 3.75).abs() < 1e-12);
    }

    #[test]
    fn zone_partly_outside_bbox_drops_mass() {
        let zs = ZoneScheme::new(vec![square_zone(1, 1.0, 1.0, 3.0, 2.0)]).unwrap();
        let f = intersection_fractions(&zs, &grid2x2());
        assert!((f.zone_total(0) - 0.5).abs() < 1e-12);
        assert!((f.outside[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bowtie_is_rejected() {
        let z = Zone {
            zone_id: 9,
            polygons: vec![Polygon::new(pts(&[(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]), vec![])],
        };
        match ZoneScheme::new(vec![z]) {
            Err(GeoError::InvalidGeometry { zone_id: 9, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlapping_zones_are_rejected() {
        let r = ZoneScheme::new(vec![square_zone(1, 0.0, 0.0, 1.0, 1.0), square_zone(2, 0.5, 0.5, 1.5, 1.5)]);
        assert_eq!(r.unwrap_err(), GeoError::OverlappingZones { a: 1, b: 2 });
        let r = ZoneScheme::new(vec![square_zone(1, 0.0, 0.0, 1.0, 1.0), square_zone(2, 0.0, 0.0, 1.0, 1.0)]);
        assert!(matches!(r, Err(GeoError::OverlappingZones { .. })));
        let r = ZoneScheme::new(vec![square_zone(1, 0.0, 0.0, 3.0, 3.0), square_zone(2, 1.0, 1.0, 2.0, 2.0)]);
        assert!(matches!(r, Err(GeoError::OverlappingZones { .. })));
    }

    #[test]
    fn adjacent_zones_are_fine_and_boundary_ties_go_low() {
        let zs = ZoneScheme::new(vec![square_zone(5, 1.0, 0.0, 2.0, 1.0), square_zone(4, 0.0, 0.0, 1.0, 1.0)]).unwrap();
        assert_eq!(zs.zones()[0].zone_id, 4);
        assert_eq!(zs.assign_point(LonLat::new(1.0, 0.5)), Some(RegionId::zone(0)));
        assert_eq!(zs.assign_point(LonLat::new(1.5, 0.5)), Some(RegionId::zone(1)));
        assert_eq!(zs.assign_point(LonLat::new(5.0, 0.5)), None);
    }

    #[test]
    fn synthetic_zones_tile_the_bbox() {
        let bbox = BBox::shenzhen();
        let zs = synthetic_zones(bbox, 12, 8, 0.2, 3).unwrap();
        assert_eq!(zs.len(), 96);
        let total: f64 = zs.zones().iter().map(Zone::area).sum();
        assert!((total - bbox.area()).abs() / bbox.area() < 1e-12);
        let grid = GridScheme::build(bbox, 10, 5).unwrap();
        let f = intersection_fractions(&zs, &grid);
        for z in 0..zs.len() {
            assert!((f.zone_total(z) - 1.0).abs() < 1e-9);
        }
    }
}
