//! Generators and independently coded oracles shared by the integration suites.
#![allow(dead_code)]

use maup_core::geo::{BBox, LonLat, Polygon, Zone, ZoneScheme};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

// ---------------------------------------------------------------- geometry

fn pts(v: &[(f64, f64)]) -> Vec<LonLat> {
    v.iter().map(|&(x, y)| LonLat::new(x, y)).collect()
}

pub fn zone(id: i64, ring: &[(f64, f64)], holes: &[Vec<(f64, f64)>]) -> Zone {
    Zone { zone_id: id, polygons: vec![Polygon::new(pts(ring), holes.iter().map(|h| pts(h)).collect())] }
}

/// A random sub-box strictly inside `b`.
pub fn inner_box<R: Rng>(rng: &mut R, b: BBox) -> BBox {
    let (w, h) = (b.lon_max - b.lon_min, b.lat_max - b.lat_min);
    let x0 = b.lon_min + w * rng.random_range(0.0..0.3);
    let x1 = b.lon_max - w * rng.random_range(0.0..0.3);
    let y0 = b.lat_min + h * rng.random_range(0.0..0.3);
    let y1 = b.lat_max - h * rng.random_range(0.0..0.3);
    BBox { lon_min: x0, lon_max: x1, lat_min: y0, lat_max: y1 }
}

/// A star-shaped (generally concave) ring around `(cx, cy)` with radii in `[rmin, rmax]`.
pub fn star<R: Rng>(rng: &mut R, cx: f64, cy: f64, rmin: f64, rmax: f64, ccw: bool) -> Vec<(f64, f64)> {
    // one vertex per sector, jittered within its middle half, keeps every
    // angular gap under pi so the ring is simple and clears a small central hole
    let n = rng.random_range(5..=12);
    let sector = std::f64::consts::TAU / n as f64;
    let angles: Vec<f64> = (0..n).map(|k| (k as f64 + rng.random_range(0.25..0.75)) * sector).collect();
    let mut ring: Vec<(f64, f64)> = angles
        .iter()
        .map(|&a| {
            let r = rng.random_range(rmin..=rmax);
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    if !ccw {
        ring.reverse();
    }
    ring
}

/// Disjoint star zones, one per lattice cell of a random sub-box of `b`; some carry a hole.
pub fn random_star_zones<R: Rng>(rng: &mut R, b: BBox) -> ZoneScheme {
    let sub = inner_box(rng, b);
    let (nx, ny) = (rng.random_range(1..=6), rng.random_range(1..=6));
    let (cw, ch) = ((sub.lon_max - sub.lon_min) / nx as f64, (sub.lat_max - sub.lat_min) / ny as f64);
    let r = cw.min(ch) / 2.0;
    let mut zones = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if rng.random_bool(0.2) {
                continue;
            }
            let (cx, cy) = (sub.lon_min + (i as f64 + 0.5) * cw, sub.lat_min + (j as f64 + 0.5) * ch);
            let ccw = rng.random_bool(0.5);
            let ring = star(rng, cx, cy, 0.35 * r, 0.95 * r, ccw);
            let holes = if rng.random_bool(0.3) {
                let hr = 0.1 * r;
                vec![vec![(cx - hr, cy - hr), (cx + hr, cy - hr), (cx + hr, cy + hr), (cx - hr, cy + hr)]]
            } else {
                Vec::new()
            };
            zones.push(zone((j * nx + i) as i64, &ring, &holes));
        }
    }
    if zones.is_empty() {
        let (cx, cy) = ((sub.lon_min + sub.lon_max) / 2.0, (sub.lat_min + sub.lat_max) / 2.0);
        zones.push(zone(0, &star(rng, cx, cy, 0.35 * r, 0.95 * r, true), &[]));
    }
    ZoneScheme::new(zones).expect("disjoint stars")
}

/// A random bbox somewhere on the globe, not too thin.
pub fn random_bbox<R: Rng>(rng: &mut R) -> BBox {
    let x0 = rng.random_range(-170.0..160.0);
    let y0 = rng.random_range(-80.0..70.0);
    BBox {
        lon_min: x0,
        lon_max: x0 + rng.random_range(0.05..8.0),
        lat_min: y0,
        lat_max: y0 + rng.random_range(0.05..8.0),
    }
}

/// Ray-casting containment, written without reference to the library's predicate.
pub fn contains(rings: &[Vec<LonLat>], x: f64, y: f64) -> bool {
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        let mut j = n - 1;
        for i in 0..n {
            let (pi, pj) = (ring[i], ring[j]);
            if (pi.lat > y) != (pj.lat > y) && x < (pj.lon - pi.lon) * (y - pi.lat) / (pj.lat - pi.lat) + pi.lon {
                inside = !inside;
            }
            j = i;
        }
    }
    inside
}

/// Stratified point sampling of `zone` over its bbox on an `m x m` lattice:
/// returns the share of interior samples falling in each of `w x h` equal cells of `grid`.
pub fn sampled_fractions<R: Rng>(rng: &mut R, zone: &Zone, grid: BBox, w: usize, h: usize, m: usize) -> Vec<f64> {
    let rings: Vec<Vec<LonLat>> = zone.polygons.iter().flat_map(|p| p.rings().map(|r| r.to_vec())).collect();
    let b = zone.bbox();
    let (sw, sh) = ((b.lon_max - b.lon_min) / m as f64, (b.lat_max - b.lat_min) / m as f64);
    let (gw, gh) = ((grid.lon_max - grid.lon_min) / w as f64, (grid.lat_max - grid.lat_min) / h as f64);
    let mut hits = vec![0u64; w * h];
    let mut inside = 0u64;
    for j in 0..m {
        for i in 0..m {
            let x = b.lon_min + (i as f64 + rng.random::<f64>()) * sw;
            let y = b.lat_min + (j as f64 + rng.random::<f64>()) * sh;
            if !contains(&rings, x, y) {
                continue;
            }
            inside += 1;
            let c = (((x - grid.lon_min) / gw) as usize).min(w - 1);
            let r = (((y - grid.lat_min) / gh) as usize).min(h - 1);
            hits[r * w + c] += 1;
        }
    }
    hits.iter().map(|&k| k as f64 / inside as f64).collect()
}

// ---------------------------------------------------------------- metrics

/// Neumaier-compensated sum.
pub fn ksum(it: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Series shapes seen in practice: sparse counts, dense counts, and continuous values,
/// with predictions that are noisy copies, shifted copies, or unrelated.
pub fn fuzz_series_pair(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(2..600);
    let rate = [0.3, 4.0, 60.0][rng.random_range(0..3)];
    let pois = Poisson::new(rate).unwrap();
    let x: Vec<f64> = match rng.random_range(0..3) {
        0 | 1 => (0..n).map(|_| pois.sample(rng)).collect(),
        _ => (0..n).map(|_| rng.random_range(0.0..1000.0)).collect(),
    };
    let y: Vec<f64> = match rng.random_range(0..3) {
        0 => x.iter().map(|v| (v + rng.random_range(-3.0..3.0) * rate.sqrt()).max(0.0)).collect(),
        1 => x.iter().map(|v| v * rng.random_range(0.5..1.5)).collect(),
        _ => (0..n).map(|_| pois.sample(rng)).collect(),
    };
    (x, y)
}

pub struct OracleMetrics {
    pub prmse: Option<f64>,
    pub u: Option<f64>,
    pub corr: Option<f64>,
}

/// Textbook definitions evaluated term by term with compensated sums.
pub fn metric_oracle(x: &[f64], y: &[f64]) -> OracleMetrics {
    let n = x.len() as f64;
    let mx = ksum(x.iter().copied()) / n;
    let my = ksum(y.iter().copied()) / n;
    let mse = ksum(x.iter().zip(y).map(|(a, b)| (b - a) * (b - a))) / n;
    let rms_x = (ksum(x.iter().map(|a| a * a)) / n).sqrt();
    let rms_y = (ksum(y.iter().map(|b| b * b)) / n).sqrt();
    let prmse = (mx > 0.0).then(|| mse.sqrt() / mx);
    let u = (rms_x + rms_y > 0.0).then(|| mse.sqrt() / (rms_x + rms_y));
    let cov = ksum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let vx = ksum(x.iter().map(|a| (a - mx) * (a - mx)));
    let vy = ksum(y.iter().map(|b| (b - my) * (b - my)));
    let corr = (vx > 0.0 && vy > 0.0).then(|| if exact_zero_cov(x, y) { 0.0 } else { cov / (vx.sqrt() * vy.sqrt()) });
    OracleMetrics { prmse, u, corr }
}

/// For integer series the covariance numerator `n·Σxy − Σx·Σy` is computed exactly.
fn exact_zero_cov(x: &[f64], y: &[f64]) -> bool {
    let int = |s: &[f64]| s.iter().all(|v| v.fract() == 0.0 && v.abs() < 1e9);
    if !int(x) || !int(y) {
        return false;
    }
    let n = x.len() as i128;
    let sx: i128 = x.iter().map(|&v| v as i128).sum();
    let sy: i128 = y.iter().map(|&v| v as i128).sum();
    let sxy: i128 = x.iter().zip(y).map(|(&a, &b)| a as i128 * b as i128).sum();
    n * sxy == sx * sy
}

/// Relative error; against an exact zero it is the absolute error, since no relative scale exists.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return a.abs();
    }
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ---------------------------------------------------------------- layout

/// Direct evaluation of the packing objective for the columns cut at `cuts`.
pub fn layout_objective(d: &[f64], cuts: &[usize], w: f64, h: f64) -> f64 {
    let mut bounds = vec![0];
    bounds.extend_from_slice(cuts);
    bounds.push(d.len());
    let cols: Vec<&[f64]> = bounds.windows(2).map(|b| &d[b[0]..b[1]]).collect();
    let heights: Vec<f64> = cols.iter().map(|c| c.iter().sum()).collect();
    let widths: Vec<f64> = cols.iter().map(|c| c.iter().cloned().fold(f64::MIN, f64::max)).collect();
    let mean = heights.iter().sum::<f64>() / heights.len() as f64;
    heights.iter().map(|x| (x - mean).abs()).sum::<f64>() + (widths.iter().sum::<f64>() / mean - w / h).abs()
}

pub fn cuts_of(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .scan(0, |s, c| {
            *s += c;
            Some(*s)
        })
        .take(counts.len().saturating_sub(1))
        .collect()
}

/// Minimum over all 2^(k-1) contiguous partitions, with the minimizing counts.
pub fn layout_brute_force(d: &[f64], w: f64, h: f64) -> (f64, Vec<usize>) {
    let k = d.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << (k - 1)) {
        let cuts: Vec<usize> = (1..k).filter(|&i| mask & (1 << (i - 1)) != 0).collect();
        let f = layout_objective(d, &cuts, w, h);
        if f < best.0 {
            let mut counts = Vec::new();
            let mut prev = 0;
            for &c in cuts.iter().chain(std::iter::once(&k)) {
                counts.push(c - prev);
                prev = c;
            }
            best = (f, counts);
        }
    }
    best
}

// ---------------------------------------------------------------- association

/// Global I from its definition with explicit queen neighbor loops.
pub fn moran_oracle(v: &[f64], w: usize, h: usize, row_standardized: bool) -> f64 {
    let n = v.len() as f64;
    let mean = ksum(v.iter().copied()) / n;
    let z: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let (mut num, mut s0) = (0.0, 0.0);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut nb = Vec::new();
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if (dr, dc) != (0, 0) && rr >= 0 && cc >= 0 && rr < h as isize && cc < w as isize {
                        nb.push(rr as usize * w + cc as usize);
                    }
                }
            }
            let wt = if row_standardized { 1.0 / nb.len() as f64 } else { 1.0 };
            let i = r as usize * w + c as usize;
            for j in nb {
                num += wt * z[i] * z[j];
                s0 += wt;
            }
        }
    }
    n / s0 * num / ksum(z.iter().map(|x| x * x))
}
