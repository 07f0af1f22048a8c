//! Error-attribution dot plots: regions sorted by mean absolute error are
//! packed as volume-sized dots into contiguous columns whose heights and
//! overall aspect ratio match an enclosing rectangle, then arranged as a
//! hierarchy of plots across dyadic grid scales.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::RegionId;
use crate::metrics::{Metric, RegionDiagnostics};

/// Smallest dot diameter, in display units.
pub const D_MIN: f64 = 1.0;
/// Enclosing rectangle of the coarsest plot.
pub const ROOT_WIDTH: f64 = 1200.0;
pub const ROOT_HEIGHT: f64 = 400.0;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("no dots to lay out")]
    Empty,
    #[error("enclosure must be positive, got {w}x{h}")]
    BadEnclosure { w: f64, h: f64 },
    #[error("missing scale: {0}")]
    MissingScale(String),
    #[error("scale {found} does not refine {coarse} by a factor of two")]
    NotDyadic { coarse: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotSpec {
    pub region: RegionId,
    pub diameter: f64,
    pub sort_key: f64,
    pub volume: f64,
    pub prmse: Option<f64>,
    pub u: Option<f64>,
    pub corr: Option<f64>,
}

impl DotSpec {
    pub fn color_value(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Prmse => self.prmse,
            Metric::U => self.u,
            Metric::Corr => self.corr,
        }
    }
}

/// Ascending by mean absolute error, ties by region index; `diameter = D_MIN + gamma * volume`.
pub fn sort_regions(diag: &[RegionDiagnostics], gamma: f64) -> Vec<DotSpec> {
    let mut dots: Vec<DotSpec> = diag
        .iter()
        .map(|d| DotSpec {
            region: d.region,
            diameter: D_MIN + gamma * d.mean_volume.max(0.0),
            sort_key: d.mean_abs_error,
            volume: d.mean_volume,
            prmse: d.prmse,
            u: d.u,
            corr: d.corr,
        })
        .collect();
    dots.sort_by(|a, b| a.sort_key.total_cmp(&b.sort_key).then(a.region.index.cmp(&b.region.index)));
    dots
}

/// Scale factor that gives the largest coarsest-scale dot a diameter of `h / 12`.
pub fn diameter_gamma(coarsest: &[RegionDiagnostics], h: f64) -> f64 {
    let vmax = coarsest.iter().map(|d| d.mean_volume).fold(0.0, f64::max);
    if vmax > 0.0 {
        (h / 12.0 - D_MIN).max(0.0) / vmax
    } else {
        0.0
    }
}

/// `Σ_i |H_i - H̄| + |Σ_i W_i / H̄ - W/H|` for column heights `H_i` and widths `W_i`.
pub fn objective_from_columns(heights: &[f64], widths: &[f64], w: f64, h: f64) -> f64 {
    let n = heights.len() as f64;
    let hbar = heights.iter().sum::<f64>() / n;
    let spread: f64 = heights.iter().map(|x| (x - hbar).abs()).sum();
    spread + (widths.iter().sum::<f64>() / hbar - w / h).abs()
}

/// Objective of splitting `diameters` into contiguous columns of sizes `counts`.
pub fn layout_objective(diameters: &[f64], counts: &[usize], w: f64, h: f64) -> f64 {
    let mut heights = Vec::with_capacity(counts.len());
    let mut widths = Vec::with_capacity(counts.len());
    let mut start = 0;
    for &c in counts {
        let col = &diameters[start..start + c];
        heights.push(col.iter().sum());
        widths.push(col.iter().copied().fold(0.0, f64::max));
        start += c;
    }
    objective_from_columns(&heights, &widths, w, h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedDot {
    pub dot: DotSpec,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotLayout {
    pub width: f64,
    pub height: f64,
    pub counts: Vec<usize>,
    pub objective: f64,
    /// Accepted local-search moves.
    pub iterations: usize,
    /// Column-major, top to bottom within a column.
    pub dots: Vec<PlacedDot>,
}

impl DotLayout {
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn empty(width: f64, height: f64) -> Self {
        Self { width, height, counts: Vec::new(), objective: 0.0, iterations: 0, dots: Vec::new() }
    }
}

struct Solver<'a> {
    d: &'a [f64],
    prefix: Vec<f64>,
    w: f64,
    h: f64,
}

impl<'a> Solver<'a> {
    fn new(d: &'a [f64], w: f64, h: f64) -> Self {
        let mut prefix = Vec::with_capacity(d.len() + 1);
        prefix.push(0.0);
        for x in d {
            prefix.push(prefix.last().unwrap() + x);
        }
        Self { d, prefix, w, h }
    }

    fn column(&self, start: usize, count: usize) -> (f64, f64) {
        let height = self.prefix[start + count] - self.prefix[start];
        let width = self.d[start..start + count].iter().copied().fold(0.0, f64::max);
        (height, width)
    }

    /// Column boundaries placed where the prefix sum is nearest `i * D / n`.
    fn greedy(&self, n: usize) -> Vec<usize> {
        let k = self.d.len();
        let total = self.prefix[k];
        let mut counts = Vec::with_capacity(n);
        let mut prev = 0;
        for i in 1..n {
            let target = total * i as f64 / n as f64;
            let lo = prev + 1;
            let hi = k - (n - i);
            // prefix is strictly increasing, so the nearest value brackets the insertion point
            let at = lo + self.prefix[lo..=hi].partition_point(|&p| p < target);
            let mut best = at.min(hi);
            if at > lo && (self.prefix[at - 1] - target).abs() <= (self.prefix[best] - target).abs() {
                best = at - 1;
            }
            counts.push(best - prev);
            prev = best;
        }
        counts.push(k - prev);
        counts
    }

    fn columns(&self, counts: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut hs = Vec::with_capacity(counts.len());
        let mut ws = Vec::with_capacity(counts.len());
        let mut start = 0;
        for &c in counts {
            let (h, w) = self.column(start, c);
            hs.push(h);
            ws.push(w);
            start += c;
        }
        (hs, ws)
    }

    fn objective(&self, counts: &[usize]) -> f64 {
        let (hs, ws) = self.columns(counts);
        objective_from_columns(&hs, &ws, self.w, self.h)
    }

    /// First improving neighbor, scanning boundary moves left to right then `n+1`, `n-1`.
    fn improve(&self, counts: &[usize], current: f64) -> Option<(Vec<usize>, f64)> {
        let k = self.d.len();
        let (hs, ws) = self.columns(counts);
        let mut starts = Vec::with_capacity(counts.len());
        let mut s = 0;
        for &c in counts {
            starts.push(s);
            s += c;
        }
        // boundary moves keep the total height, so H̄ is fixed and only two terms change
        let n = counts.len() as f64;
        let hbar = hs.iter().sum::<f64>() / n;
        let spread: f64 = hs.iter().map(|x| (x - hbar).abs()).sum();
        let wsum: f64 = ws.iter().sum();
        let aspect = self.w / self.h;
        for i in 0..counts.len().saturating_sub(1) {
            for delta in [-1isize, 1] {
                // delta = -1 moves the last dot of column i right; +1 pulls the first dot of column i+1 left
                let ci = counts[i] as isize + delta;
                let cj = counts[i + 1] as isize - delta;
                if ci < 1 || cj < 1 {
                    continue;
                }
                let (hi, wi) = self.column(starts[i], ci as usize);
                let (hj, wj) = self.column(starts[i] + ci as usize, cj as usize);
                let spread2 = spread - (hs[i] - hbar).abs() - (hs[i + 1] - hbar).abs() + (hi - hbar).abs() + (hj - hbar).abs();
                let wsum2 = wsum - ws[i] - ws[i + 1] + wi + wj;
                let approx = spread2 + (wsum2 / hbar - aspect).abs();
                if approx < current {
                    let mut c2 = counts.to_vec();
                    c2[i] = ci as usize;
                    c2[i + 1] = cj as usize;
                    // recompute exactly so accepted objectives carry no drift
                    let f = self.objective(&c2);
                    if f < current {
                        return Some((c2, f));
                    }
                }
            }
        }
        let n = counts.len();
        for m in [n + 1, n.wrapping_sub(1)] {
            if m >= 1 && m <= k {
                let c2 = self.greedy(m);
                let f = self.objective(&c2);
                if f < current {
                    return Some((c2, f));
                }
            }
        }
        None
    }
}

/// Packs `dots` (already in display order) into contiguous columns.
///
/// Starts from `n = round(sqrt(k W / H))` with greedy equal-height columns,
/// then accepts strictly improving boundary moves or `n ± 1` changes. When
/// those stall, the best greedy fill over every column count is tried as a
/// restart. Stops when nothing improves or `10 k` moves have been accepted.
pub fn optimize_layout(dots: &[DotSpec], w: f64, h: f64) -> Result<DotLayout, LayoutError> {
    if dots.is_empty() {
        return Err(LayoutError::Empty);
    }
    if !(w > 0.0 && h > 0.0) {
        return Err(LayoutError::BadEnclosure { w, h });
    }
    let d: Vec<f64> = dots.iter().map(|x| x.diameter).collect();
    let (counts, objective, iterations) = solve_counts(&d, w, h);
    Ok(place(dots, counts, objective, iterations, w, h))
}

/// Column counts, objective, and accepted moves for a diameter sequence.
pub fn solve_counts(d: &[f64], w: f64, h: f64) -> (Vec<usize>, f64, usize) {
    let (counts, f, trace) = solve_counts_traced(d, w, h);
    (counts, f, trace.len() - 1)
}

/// Like [`solve_counts`], also returning the objective after the initial fill and after every accepted move.
pub fn solve_counts_traced(d: &[f64], w: f64, h: f64) -> (Vec<usize>, f64, Vec<f64>) {
    let k = d.len();
    let solver = Solver::new(d, w, h);
    let n0 = ((k as f64 * w / h).sqrt().round() as usize).clamp(1, k);
    let mut counts = solver.greedy(n0);
    let mut f = solver.objective(&counts);
    let mut trace = vec![f];
    let mut iterations = 0;
    let budget = 10 * k;
    loop {
        while iterations < budget {
            match solver.improve(&counts, f) {
                Some((c, g)) => {
                    counts = c;
                    f = g;
                    iterations += 1;
                    trace.push(f);
                }
                None => break,
            }
        }
        if iterations >= budget {
            break;
        }
        // turbulence: restart from the best greedy fill over all column counts
        let kick = (1..=k)
            .filter(|&m| m != counts.len())
            .map(|m| {
                let c = solver.greedy(m);
                let g = solver.objective(&c);
                (c, g)
            })
            .filter(|(_, g)| *g < f)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match kick {
            Some((c, g)) => {
                counts = c;
                f = g;
                iterations += 1;
                trace.push(f);
            }
            None => break,
        }
    }
    (counts, f, trace)
}

fn place(dots: &[DotSpec], counts: Vec<usize>, objective: f64, iterations: usize, w: f64, h: f64) -> DotLayout {
    let mut placed = Vec::with_capacity(dots.len());
    let mut x0 = 0.0;
    let mut start = 0;
    for &c in &counts {
        let col = &dots[start..start + c];
        let width = col.iter().map(|d| d.diameter).fold(0.0, f64::max);
        let mut y = 0.0;
        for dot in col {
            placed.push(PlacedDot { dot: dot.clone(), x: x0 + width / 2.0, y: y + dot.diameter / 2.0 });
            y += dot.diameter;
        }
        x0 += width;
        start += c;
    }
    DotLayout { width: w, height: h, counts, objective, iterations, dots: placed }
}

/// Splits sorted dots into `parts` contiguous subsets of roughly equal volume.
///
/// Each dot joins the current subset, which closes once the cumulative volume
/// reaches its share; a dot that overflows a share stays in the subset it overflows.
pub fn volume_subsets(dots: &[DotSpec], parts: usize) -> Vec<Vec<DotSpec>> {
    let mut out = vec![Vec::new(); parts];
    if parts == 0 {
        return out;
    }
    let total: f64 = dots.iter().map(|d| d.volume.max(0.0)).sum();
    let mut cum = 0.0;
    let mut s = 0;
    for dot in dots {
        out[s].push(dot.clone());
        cum += dot.volume.max(0.0);
        if s + 1 < parts && total > 0.0 && cum >= (s + 1) as f64 / parts as f64 * total * (1.0 - 1e-12) {
            s += 1;
        }
    }
    if total == 0.0 {
        // nothing to balance: split by count instead
        out = vec![Vec::new(); parts];
        let per = dots.len().div_ceil(parts).max(1);
        for (i, dot) in dots.iter().enumerate() {
            out[(i / per).min(parts - 1)].push(dot.clone());
        }
    }
    out
}

/// Diagnostics of one grid scale.
#[derive(Debug, Clone, Copy)]
pub struct ScaleInput<'a> {
    pub w: usize,
    pub h: usize,
    pub diagnostics: &'a [RegionDiagnostics],
}

fn label(w: usize, h: usize) -> String {
    format!("{w}x{h}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotOut {
    pub scale: String,
    pub level: usize,
    pub subset_index: usize,
    #[serde(rename = "W")]
    pub width: f64,
    #[serde(rename = "H")]
    pub height: f64,
    pub objective: f64,
    pub counts: Vec<usize>,
    pub dots: Vec<DotOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotOut {
    pub region_id: usize,
    pub x: f64,
    pub y: f64,
    pub diameter: f64,
    pub volume: f64,
    pub mean_abs_error: f64,
    pub color_value: BTreeMap<Metric, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildLink {
    pub from: String,
    pub to: String,
    /// `children[i]` lists the finer-scale cells of coarse cell `i`.
    pub children: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyArrangement {
    pub scales: Vec<String>,
    pub gamma: f64,
    pub plots: Vec<PlotOut>,
    pub child_map: Vec<ChildLink>,
    /// Min/max of each metric across all scales; absent if no region defines it.
    pub color_range: BTreeMap<Metric, Option<ColorRange>>,
}

impl HierarchyArrangement {
    pub fn plots_at(&self, scale: &str) -> impl Iterator<Item = &PlotOut> {
        let scale = scale.to_string();
        self.plots.iter().filter(move |p| p.scale == scale)
    }

    /// Finer-scale descendants of `region` at `scale`, keyed by scale label.
    pub fn descendants(&self, scale: &str, region: usize) -> BTreeMap<String, Vec<usize>> {
        let mut out = BTreeMap::new();
        let mut frontier = vec![region];
        let mut from = scale.to_string();
        while let Some(link) = self.child_map.iter().find(|l| l.from == from) {
            let mut next: Vec<usize> = frontier
                .iter()
                .filter_map(|&i| link.children.get(i))
                .flatten()
                .copied()
                .collect();
            next.sort_unstable();
            out.insert(link.to.clone(), next.clone());
            frontier = next;
            from = link.to.clone();
        }
        out
    }
}

/// Cells of a `fw x fh` grid inside cell `index` of a `cw x ch` grid (row-major).
pub fn dyadic_children(index: usize, cw: usize, fw: usize, fh: usize, ch: usize) -> Vec<usize> {
    let (fx, fy) = (fw / cw, fh / ch);
    let (c, r) = (index % cw, index / cw);
    let mut out = Vec::with_capacity(fx * fy);
    for b in 0..fy {
        for a in 0..fx {
            out.push((fy * r + b) * fw + fx * c + a);
        }
    }
    out.sort_unstable();
    out
}

/// One plot at the coarsest scale, 4 at the next, 16 at the next, split by cumulative volume.
///
/// Scales must form a chain where each refines the previous by exactly two
/// along both axes. Level `l` subplots are `ROOT_WIDTH / 4^l` wide.
pub fn arrange_hierarchy(scales: &[ScaleInput<'_>]) -> Result<HierarchyArrangement, LayoutError> {
    if scales.is_empty() {
        return Err(LayoutError::MissingScale("no scales".into()));
    }
    let mut sorted: Vec<ScaleInput<'_>> = scales.to_vec();
    sorted.sort_by_key(|s| s.w * s.h);
    for pair in sorted.windows(2) {
        let (c, f) = (pair[0], pair[1]);
        if f.w != 2 * c.w || f.h != 2 * c.h {
            let missing = label(2 * c.w, 2 * c.h);
            if f.w % c.w == 0 && f.h % c.h == 0 && f.w > 2 * c.w {
                return Err(LayoutError::MissingScale(missing));
            }
            return Err(LayoutError::NotDyadic { coarse: label(c.w, c.h), found: label(f.w, f.h) });
        }
    }
    let gamma = diameter_gamma(sorted[0].diagnostics, ROOT_HEIGHT);

    let jobs: Vec<(usize, String, usize, Vec<DotSpec>, f64)> = sorted
        .iter()
        .enumerate()
        .flat_map(|(level, s)| {
            let parts = 4usize.pow(level as u32);
            let width = ROOT_WIDTH / parts as f64;
            let dots = sort_regions(s.diagnostics, gamma);
            volume_subsets(&dots, parts)
                .into_iter()
                .enumerate()
                .map(move |(i, sub)| (level, label(s.w, s.h), i, sub, width))
                .collect::<Vec<_>>()
        })
        .collect();

    let plots: Vec<PlotOut> = jobs
        .into_par_iter()
        .map(|(level, scale, subset_index, sub, width)| {
            let layout = if sub.is_empty() {
                DotLayout::empty(width, ROOT_HEIGHT)
            } else {
                optimize_layout(&sub, width, ROOT_HEIGHT).expect("non-empty subset with positive enclosure")
            };
            PlotOut {
                scale,
                level,
                subset_index,
                width,
                height: ROOT_HEIGHT,
                objective: layout.objective,
                counts: layout.counts.clone(),
                dots: layout
                    .dots
                    .iter()
                    .map(|p| DotOut {
                        region_id: p.dot.region.index,
                        x: p.x,
                        y: p.y,
                        diameter: p.dot.diameter,
                        volume: p.dot.volume,
                        mean_abs_error: p.dot.sort_key,
                        color_value: Metric::ALL.iter().map(|&m| (m, p.dot.color_value(m))).collect(),
                    })
                    .collect(),
            }
        })
        .collect();

    let child_map = sorted
        .windows(2)
        .map(|p| ChildLink {
            from: label(p[0].w, p[0].h),
            to: label(p[1].w, p[1].h),
            children: (0..p[0].w * p[0].h).map(|i| dyadic_children(i, p[0].w, p[1].w, p[1].h, p[0].h)).collect(),
        })
        .collect();

    let color_range = Metric::ALL
        .iter()
        .map(|&m| {
            let vals = sorted.iter().flat_map(|s| s.diagnostics.iter().filter_map(move |d| d.metric(m)));
            let range = vals.fold(None, |acc: Option<ColorRange>, v| {
                Some(match acc {
                    None => ColorRange { min: v, max: v },
                    Some(r) => ColorRange { min: r.min.min(v), max: r.max.max(v) },
                })
            });
            (m, range)
        })
        .collect();

    Ok(HierarchyArrangement {
        scales: sorted.iter().map(|s| label(s.w, s.h)).collect(),
        gamma,
        plots,
        child_map,
        color_range,
    })
}
