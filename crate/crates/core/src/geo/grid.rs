use serde::{Deserialize, Serialize};

use super::{BBox, GeoError, LonLat, PointResolver, RegionId};

/// A uniform `w` x `h` grid over a bounding box.
///
/// Cell `(col, row) = (0, 0)` sits at `(lon_min, lat_min)`; cell indices are
/// row-major, `index = row * w + col`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScheme {
    pub bbox: BBox,
    pub w: usize,
    pub h: usize,
}

impl GridScheme {
    pub fn build(bbox: BBox, w: usize, h: usize) -> Result<Self, GeoError> {
        if w == 0 || h == 0 {
            return Err(GeoError::NonPositiveDimensions { w, h });
        }
        bbox.validate()?;
        Ok(Self { bbox, w, h })
    }

    pub fn cell_count(&self) -> usize {
        self.w * self.h
    }

    pub fn cell_width(&self) -> f64 {
        self.bbox.width() / self.w as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.bbox.height() / self.h as f64
    }

    /// Longitude of the `k`-th vertical grid line, `0 <= k <= w`.
    pub fn col_edge(&self, k: usize) -> f64 {
        if k >= self.w {
            return self.bbox.lon_max;
        }
        self.bbox.lon_min + self.bbox.width() * k as f64 / self.w as f64
    }

    /// Latitude of the `k`-th horizontal grid line, `0 <= k <= h`.
    pub fn row_edge(&self, k: usize) -> f64 {
        if k >= self.h {
            return self.bbox.lat_max;
        }
        self.bbox.lat_min + self.bbox.height() * k as f64 / self.h as f64
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        debug_assert!(col < self.w && row < self.h);
        row * self.w + col
    }

    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.w, index / self.w)
    }

    pub fn cell_bbox(&self, index: usize) -> BBox {
        let (c, r) = self.col_row(index);
        BBox {
            lon_min: self.col_edge(c),
            lon_max: self.col_edge(c + 1),
            lat_min: self.row_edge(r),
            lat_max: self.row_edge(r + 1),
        }
    }

    pub fn cell_center(&self, index: usize) -> LonLat {
        self.cell_bbox(index).center()
    }

    /// `"50x25"` style label.
    pub fn scale_label(&self) -> String {
        format!("{}x{}", self.w, self.h)
    }

    /// Column holding `lon`, with shared edges going to the higher column
    /// and the max edge folded into the last column.
    fn locate(value: f64, min: f64, extent: f64, n: usize, edge: impl Fn(usize) -> f64) -> usize {
        let mut k = (((value - min) / extent) * n as f64).floor();
        if k < 0.0 {
            k = 0.0;
        }
        let mut k = (k as usize).min(n - 1);
        // floor() on the scaled value can land one off near an edge; settle
        // against the same edges cell_bbox reports.
        while k > 0 && value < edge(k) {
            k -= 1;
        }
        while k + 1 < n && value >= edge(k + 1) {
            k += 1;
        }
        k
    }

    pub fn assign(&self, p: LonLat) -> Option<usize> {
        if !self.bbox.contains(p) {
            return None;
        }
        let col = Self::locate(p.lon, self.bbox.lon_min, self.bbox.width(), self.w, |k| self.col_edge(k));
        let row = Self::locate(p.lat, self.bbox.lat_min, self.bbox.height(), self.h, |k| self.row_edge(k));
        Some(self.index(col, row))
    }

    /// Returns the finer grid's cells covering coarse cell `index`, assuming
    /// `finer` refines `self` by an integer factor along both axes.
    pub fn children_in(&self, index: usize, finer: &GridScheme) -> Vec<usize> {
        let fx = finer.w / self.w;
        let fy = finer.h / self.h;
        let (c, r) = self.col_row(index);
        let mut out = Vec::with_capacity(fx * fy);
        for b in 0..fy {
            for a in 0..fx {
                out.push(finer.index(fx * c + a, fy * r + b));
            }
        }
        out.sort_unstable();
        out
    }

    pub fn refines(&self, coarse: &GridScheme) -> bool {
        self.bbox == coarse.bbox
            && self.w >= coarse.w
            && self.h >= coarse.h
            && self.w % coarse.w == 0
            && self.h % coarse.h == 0
    }
}

impl PointResolver for GridScheme {
    fn region_count(&self) -> usize {
        self.cell_count()
    }

    fn assign_point(&self, p: LonLat) -> Option<RegionId> {
        self.assign(p).map(RegionId::cell)
    }
}
