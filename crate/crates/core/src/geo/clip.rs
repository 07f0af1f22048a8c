//! Ring clipping against axis-aligned rectangles.
//!
//! Sutherland–Hodgman against each of the four half-planes. Concave input
//! rings may produce zero-width bridges along the clip boundary; those
//! contribute no signed area, so the area of the output is exact up to
//! rounding.

use super::{BBox, LonLat, SNAP_TOLERANCE};

/// Shoelace signed area of an implicitly closed ring (positive when CCW).
pub fn ring_signed_area(ring: &[LonLat]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    // Shift to the first vertex to limit cancellation at large lon/lat.
    let o = ring[0];
    let mut acc = 0.0;
    for i in 1..n - 1 {
        let a = ring[i];
        let b = ring[i + 1];
        acc += (a.lon - o.lon) * (b.lat - o.lat) - (b.lon - o.lon) * (a.lat - o.lat);
    }
    0.5 * acc
}

#[derive(Clone, Copy)]
enum Axis {
    Lon,
    Lat,
}

#[derive(Clone, Copy)]
enum Keep {
    AtLeast,
    AtMost,
}

fn coord(p: LonLat, axis: Axis) -> f64 {
    match axis {
        Axis::Lon => p.lon,
        Axis::Lat => p.lat,
    }
}

fn inside(p: LonLat, axis: Axis, bound: f64, keep: Keep) -> bool {
    let v = coord(p, axis);
    match keep {
        Keep::AtLeast => v >= bound - SNAP_TOLERANCE,
        Keep::AtMost => v <= bound + SNAP_TOLERANCE,
    }
}

fn crossing(a: LonLat, b: LonLat, axis: Axis, bound: f64) -> LonLat {
    let (va, vb) = (coord(a, axis), coord(b, axis));
    let t = (bound - va) / (vb - va);
    match axis {
        Axis::Lon => LonLat::new(bound, a.lat + t * (b.lat - a.lat)),
        Axis::Lat => LonLat::new(a.lon + t * (b.lon - a.lon), bound),
    }
}

fn clip_half_plane(ring: &[LonLat], axis: Axis, bound: f64, keep: Keep, out: &mut Vec<LonLat>) {
    out.clear();
    let n = ring.len();
    if n == 0 {
        return;
    }
    let mut prev = ring[n - 1];
    let mut prev_in = inside(prev, axis, bound, keep);
    for &cur in ring {
        let cur_in = inside(cur, axis, bound, keep);
        if cur_in {
            if !prev_in {
                out.push(crossing(prev, cur, axis, bound));
            }
            out.push(snap(cur, axis, bound));
        } else if prev_in {
            out.push(crossing(prev, cur, axis, bound));
        }
        prev = cur;
        prev_in = cur_in;
    }
}

/// Pulls vertices lying within the snap tolerance onto the clip line.
fn snap(p: LonLat, axis: Axis, bound: f64) -> LonLat {
    match axis {
        Axis::Lon if (p.lon - bound).abs() <= SNAP_TOLERANCE => LonLat::new(bound, p.lat),
        Axis::Lat if (p.lat - bound).abs() <= SNAP_TOLERANCE => LonLat::new(p.lon, bound),
        _ => p,
    }
}

/// Clips a ring to the vertical strip `lon_lo <= lon <= lon_hi`.
pub(crate) fn clip_ring_to_lon_strip(ring: &[LonLat], lon_lo: f64, lon_hi: f64) -> Vec<LonLat> {
    let mut a = Vec::with_capacity(ring.len() + 4);
    let mut b = Vec::with_capacity(ring.len() + 4);
    clip_half_plane(ring, Axis::Lon, lon_lo, Keep::AtLeast, &mut a);
    clip_half_plane(&a, Axis::Lon, lon_hi, Keep::AtMost, &mut b);
    b
}

/// Clips a ring to the horizontal strip `lat_lo <= lat <= lat_hi`.
pub(crate) fn clip_ring_to_lat_strip(ring: &[LonLat], lat_lo: f64, lat_hi: f64) -> Vec<LonLat> {
    let mut a = Vec::with_capacity(ring.len() + 4);
    let mut b = Vec::with_capacity(ring.len() + 4);
    clip_half_plane(ring, Axis::Lat, lat_lo, Keep::AtLeast, &mut a);
    clip_half_plane(&a, Axis::Lat, lat_hi, Keep::AtMost, &mut b);
    b
}

/// Clips a ring (either orientation) to a rectangle; the result keeps the input orientation.
pub fn clip_ring_to_rect(ring: &[LonLat], rect: &BBox) -> Vec<LonLat> {
    let strip = clip_ring_to_lon_strip(ring, rect.lon_min, rect.lon_max);
    clip_ring_to_lat_strip(&strip, rect.lat_min, rect.lat_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(pts: &[(f64, f64)]) -> Vec<LonLat> {
        pts.iter().map(|&(x, y)| LonLat::new(x, y)).collect()
    }

    #[test]
    fn square_area_sign_follows_orientation() {
        let ccw = ring(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
        let cw: Vec<_> = ccw.iter().rev().copied().collect();
        assert_eq!(ring_signed_area(&ccw), 4.0);
        assert_eq!(ring_signed_area(&cw), -4.0);
    }

    #[test]
    fn clip_square_to_quadrant() {
        let sq = ring(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
        let rect = BBox::new(1.0, 3.0, 1.0, 3.0).unwrap();
        let c = clip_ring_to_rect(&sq, &rect);
        assert_eq!(ring_signed_area(&c), 1.0);
    }

    #[test]
    fn concave_ring_clipped_area_is_exact() {
        // U shape: 3x2 block with a 1x1 notch cut from the top middle.
        let u = ring(&[
            (0.0, 0.0),
            (3.0, 0.0),
            (3.0, 2.0),
            (2.0, 2.0),
            (2.0, 1.0),
            (1.0, 1.0),
            (1.0, 2.0),
            (0.0, 2.0),
        ]);
        let rect = BBox::new(0.0, 3.0, 1.0, 2.0).unwrap();
        let c = clip_ring_to_rect(&u, &rect);
        assert!((ring_signed_area(&c) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_clip_is_empty_area() {
        let sq = ring(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let rect = BBox::new(5.0, 6.0, 5.0, 6.0).unwrap();
        assert_eq!(ring_signed_area(&clip_ring_to_rect(&sq, &rect)), 0.0);
    }
}
