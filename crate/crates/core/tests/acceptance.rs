//! Headline acceptance suite: one PASS/FAIL line per criterion, written straight to
//! stdout so the lines survive test-output capture.
//!
//! The test passes when the set of failing criteria equals `KNOWN_DEVIATIONS`,
//! so an unexpected failure and an unexpected fix both fail the build.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use common::{cuts_of, fuzz_series_pair, layout_brute_force, layout_objective, metric_oracle, random_bbox, random_star_zones, rel_err};
use maup_core::aggregate::{rasterize, ZoneFlow};
use maup_core::assoc::{lisa, moran_global, AssocError, SpatialWeights, WeightMode};
use maup_core::config::{RunConfig, Scale, Shape};
use maup_core::geo::{intersection_fractions, synthetic_zones, GridScheme, RegionId};
use maup_core::layout::{optimize_layout, DotSpec};
use maup_core::metrics::series_diagnostics;
use maup_core::pipeline::run_pipeline;
use maup_core::service::Service;
use maup_core::store::{RunData, RunStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

/// Criteria expected to fail, with the reason recorded alongside the implementation.
///
/// `hand-cases`: the stated u for x=[1,2,3], y=[2,3,4] is 0.18981, but the metric's own
/// definition gives 1/(sqrt(29/3)+sqrt(14/3)) = 0.1897756..., 3.4e-5 away against a 1e-5
/// tolerance. The implementation follows the definition.
const KNOWN_DEVIATIONS: &[&str] = &["hand-cases"];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rasterization_conservation() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc1);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let b = random_bbox(&mut rng);
        let grid = GridScheme::build(b, rng.random_range(1..80), rng.random_range(1..80)).unwrap();
        let zones = if k % 2 == 0 {
            let sub = common::inner_box(&mut rng, b);
            synthetic_zones(sub, rng.random_range(1..30), rng.random_range(1..30), rng.random_range(0.0..0.25), rng.random()).unwrap()
        } else {
            random_star_zones(&mut rng, b)
        };
        let fm = intersection_fractions(&zones, &grid);
        let flow = ZoneFlow {
            counts: (0..zones.len()).map(|_| (0..4).map(|_| rng.random_range(0..1000u64)).collect()).collect(),
            slot_count: 4,
        };
        let raster = rasterize(&flow, &fm, &grid).unwrap();
        for s in 0..4 {
            let want = flow.slot_total(s) as f64;
            let got: f64 = raster.slot(s).iter().sum();
            worst = worst.max((got - want).abs() / want.max(1.0));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst <= 1e-9 && secs < 10.0, format!("100 instances, worst relative error {worst:.2e}, {secs:.2} s"))
}

fn metric_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc2);
    let mut worst = 0.0f64;
    let mut bounded = true;
    let mut definedness = true;
    for _ in 0..1000 {
        let (x, y) = fuzz_series_pair(&mut rng);
        let d = series_diagnostics(RegionId::cell(0), &x, &y);
        let o = metric_oracle(&x, &y);
        for (got, want) in [(d.prmse, o.prmse), (d.u, o.u), (d.corr, o.corr)] {
            match (got, want) {
                (Some(g), Some(w)) => worst = worst.max(rel_err(g, w)),
                (None, None) => {}
                _ => definedness = false,
            }
        }
        bounded &= d.u.is_none_or(|u| (0.0..=1.0).contains(&u)) && d.corr.is_none_or(|c| (-1.0..=1.0).contains(&c));
    }
    check(
        worst <= 1e-12 && bounded && definedness,
        format!("1000 series, worst relative error {worst:.2e}, ranges held: {bounded}, definedness agreed: {definedness}"),
    )
}

/// prmse and corr must be exact; u is reported against the stated value.
fn hand_cases() -> Outcome {
    let d = series_diagnostics(RegionId::cell(0), &[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]);
    let (p, u, c) = (d.prmse.unwrap(), d.u.unwrap(), d.corr.unwrap());
    let from_definition = 1.0 / ((29.0f64 / 3.0).sqrt() + (14.0f64 / 3.0).sqrt());
    assert_eq!(p, 0.5, "prmse hand case");
    assert_eq!(c, 1.0, "corr hand case");
    assert!((u - from_definition).abs() < 1e-15, "u must follow its definition");
    check(
        (u - 0.18981).abs() <= 1e-5,
        format!("prmse {p}, corr {c}, u {u:.7} vs stated 0.18981 (|diff| {:.1e}, tol 1e-5)", (u - 0.18981).abs()),
    )
}

fn moran_checkerboard() -> Outcome {
    let v: Vec<f64> = (0..9).map(|i| (i % 2) as f64).collect();
    let i = moran_global(&v, &SpatialWeights::queen(3, 3, WeightMode::Binary)).unwrap();
    let constant = moran_global(&[2.0; 9], &SpatialWeights::queen(3, 3, WeightMode::Binary));
    check(
        (i + 0.19).abs() <= 1e-12 && constant == Err(AssocError::ZeroVariance),
        format!("I = {i:.15}, constant field -> {constant:?}"),
    )
}

fn lisa_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc5);
    let wts = SpatialWeights::queen(20, 10, WeightMode::RowStandardized);
    let (mut slope_err, mut ratios) = (0.0f64, Vec::new());
    for _ in 0..100 {
        let v: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..100.0)).collect();
        let e: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..10.0)).collect();
        let (pts, summary) = lisa(&v, &e, &[true; 200], &wts).unwrap();
        let gi = moran_global(&v, &wts).unwrap();
        slope_err = slope_err.max((summary.regression_slope - gi).abs());
        ratios.push(pts.iter().map(|p| p.lisa).sum::<f64>() / 200.0 / gi);
    }
    let spread = ratios.iter().fold(0.0f64, |m, r| m.max((r - ratios[0]).abs()));
    check(
        slope_err <= 1e-9 && spread <= 1e-9,
        format!("100 fields, |slope - I| <= {slope_err:.1e}, mean(lisa)/I = {:.12} spread {spread:.1e}", ratios[0]),
    )
}

fn dots(d: &[f64]) -> Vec<DotSpec> {
    d.iter()
        .enumerate()
        .map(|(i, &x)| DotSpec { region: RegionId::cell(i), diameter: x, sort_key: i as f64, volume: x, prmse: None, u: None, corr: None })
        .collect()
}

fn layout_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc6);
    let mut good = 0;
    for _ in 0..100 {
        let k = rng.random_range(1..=10);
        let d: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..20.0)).collect();
        let w = rng.random_range(0.5..4.0);
        let (opt, _) = layout_brute_force(&d, w, 1.0);
        let l = optimize_layout(&dots(&d), w, 1.0).unwrap();
        let direct = layout_objective(&d, &cuts_of(&l.counts), w, 1.0);
        if (direct - l.objective).abs() <= 1e-9 * (1.0 + direct) && direct <= 1.1 * opt + 1e-12 {
            good += 1;
        }
    }
    let seeds: Vec<u64> = (0..10_000).collect();
    let intact = seeds
        .par_iter()
        .filter(|&&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0xacc6_0000);
            let k = rng.random_range(1..=200);
            let d: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..30.0)).collect();
            let l = optimize_layout(&dots(&d), rng.random_range(0.2..5.0), 1.0).unwrap();
            l.counts.iter().sum::<usize>() == k && l.dots.iter().map(|p| p.dot.region.index).eq(0..k)
        })
        .count();
    check(good >= 95 && intact == 10_000, format!("{good}/100 within 1.1x of exhaustive optimum, {intact}/10000 fuzzed layouts order-preserving with sum c = k"))
}

fn sixteen_square() -> Outcome {
    let d = vec![1.0; 16];
    let (opt, best) = layout_brute_force(&d, 1.0, 1.0);
    let l = optimize_layout(&dots(&d), 1.0, 1.0).unwrap();
    check(
        l.counts == vec![4, 4, 4, 4] && l.objective == 0.0 && best == l.counts && opt == 0.0,
        format!("n = {}, c = {:?}, objective {}, brute force {best:?} / {opt}", l.counts.len(), l.counts, l.objective),
    )
}

fn volume_error_correlation(run: &RunData) -> Outcome {
    let combo = run.combo(Shape::Grid, Scale { w: 50, h: 25 }).unwrap();
    let (x, y): (Vec<f64>, Vec<f64>) = combo.diagnostics.iter().map(|d| (d.mean_volume, d.mean_abs_error)).unzip();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let r = sxy / (sxx * syy).sqrt();
    check(r > 0.5, format!("grid 50x25, r(mean_abs_error, mean_volume) = {r:.4} over {} grids", x.len()))
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn quick_pipeline(a: &Path, b: &Path) -> Outcome {
    let mut cfg = RunConfig::quick(42);
    cfg.out_dir = a.to_path_buf();
    let t = Instant::now();
    let (dir_a, rows) = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    cfg.out_dir = b.to_path_buf();
    let (dir_b, _) = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let (sa, sb) = (snapshot(&dir_a), snapshot(&dir_b));
    check(
        secs < 60.0 && sa == sb && rows.len() == 4,
        format!("{} combinations in {secs:.2} s, {} files, byte-identical: {}", rows.len(), sa.len(), sa == sb),
    )
}

#[derive(Clone, Copy)]
enum K {
    Num,
    NumOrNull,
    Int,
    Str,
    Bool,
    Arr,
    Obj,
}

fn conforms(v: &Value, fields: &[(&str, K)]) -> Result<(), String> {
    for &(name, kind) in fields {
        let f = v.get(name).ok_or_else(|| format!("missing {name}"))?;
        let ok = match kind {
            K::Num => f.is_f64() || f.is_i64() || f.is_u64(),
            K::NumOrNull => f.is_null() || f.is_number(),
            K::Int => f.is_u64(),
            K::Str => f.is_string(),
            K::Bool => f.is_boolean(),
            K::Arr => f.is_array(),
            K::Obj => f.is_object(),
        };
        if !ok {
            return Err(format!("{name} has the wrong type: {f}"));
        }
    }
    Ok(())
}

fn each(v: &Value, key: &str, fields: &[(&str, K)]) -> Result<usize, String> {
    let arr = v[key].as_array().ok_or_else(|| format!("{key} is not an array"))?;
    for item in arr {
        conforms(item, fields).map_err(|e| format!("{key}[]: {e}"))?;
    }
    Ok(arr.len())
}

fn api_contract(svc: &Service) -> Outcome {
    let get = |t: &str| -> Result<Value, String> {
        let r = svc.handle("GET", t, b"");
        if r.status != 200 {
            return Err(format!("{t} -> {}", r.status));
        }
        serde_json::from_slice(&r.body).map_err(|e| format!("{t}: {e}"))
    };
    let mut checked = 0;
    let result = (|| -> Result<(), String> {
        let runs = get("/api/runs")?;
        each(&json!({ "r": runs }), "r", &[("run_id", K::Str), ("sealed", K::Bool), ("combos", K::Arr), ("days", K::Int)])?;
        checked += 1;
        for (shape, scale) in [("grid", "50x25"), ("grid", "100x50"), ("taz", "50x25"), ("taz", "100x50")] {
            let q = format!("shape={shape}&scale={scale}");
            let map = get(&format!("/api/map?{q}"))?;
            conforms(&map, &[("value_edges", K::Arr), ("error_edges", K::Arr), ("cells", K::Arr), ("w", K::Int), ("h", K::Int)])?;
            let n = each(&map, "cells", &[("region_id", K::Int), ("vsup", K::Obj), ("mean_volume", K::Num), ("mean_abs_error", K::Num), ("center", K::Arr)])?;
            for c in map["cells"].as_array().unwrap() {
                conforms(&c["vsup"], &[("level", K::Int), ("bin", K::Int)])?;
            }
            let sc = get(&format!("/api/scatter?{q}"))?;
            conforms(&sc, &[("points", K::Arr), ("global_i", K::NumOrNull), ("regression", K::Obj), ("p_value", K::NumOrNull), ("pearson_r", K::NumOrNull)])?;
            each(&sc, "points", &[("region_id", K::Int), ("z_value", K::Num), ("z_lag", K::Num), ("lisa", K::Num), ("z_error", K::Num), ("colorable", K::Bool)])?;
            let tm = get(&format!("/api/temporal?{q}&region={}", n - 1))?;
            conforms(&tm, &[("cells", K::Arr), ("observed", K::Arr), ("predicted", K::Arr), ("days", K::Int), ("slots_per_day", K::Int)])?;
            let rows = tm["cells"].as_array().unwrap();
            if rows.len() != 7 || rows.iter().any(|r| r.as_array().map(Vec::len) != Some(48)) {
                return Err("temporal matrix is not 7x48".into());
            }
            checked += 3;
        }
        for shape in ["grid", "taz"] {
            for metric in ["prmse", "u", "corr"] {
                let at = get(&format!("/api/attribution?shape={shape}&metric={metric}"))?;
                conforms(&at, &[("plots", K::Arr), ("child_map", K::Arr), ("scales", K::Arr), ("metric", K::Str)])?;
                each(&at, "plots", &[("scale", K::Str), ("subset_index", K::Int), ("W", K::Num), ("H", K::Num), ("dots", K::Arr)])?;
                for p in at["plots"].as_array().unwrap() {
                    each(p, "dots", &[("region_id", K::Int), ("x", K::Num), ("y", K::Num), ("diameter", K::Num), ("color_value", K::NumOrNull)])?;
                }
                checked += 1;
            }
        }
        conforms(&get("/api/meta")?, &[("manifest", K::Obj), ("meta", K::Obj)])?;
        checked += 1;
        if svc.handle("GET", "/api/nowhere", b"").status != 404 {
            return Err("unknown route is not 404".into());
        }
        Ok(())
    })();
    result?;

    // a rect spanning the centers of 2x2 coarse cells, expanded to the finest scale
    let (cw, ch) = ((114.629 - 113.775) / 50.0, (22.855 - 22.443) / 25.0);
    let (x0, y0) = (113.775 + 10.25 * cw, 22.443 + 5.25 * ch);
    let (x1, y1) = (113.775 + 11.75 * cw, 22.443 + 6.75 * ch);
    let body = json!({
        "shape": "grid", "scale": "50x25", "view": "map", "tool": "rect",
        "rect": [x0, y0, x1, y1], "expand_to": ["200x100"]
    });
    let r = svc.handle("POST", "/api/selection/resolve", body.to_string().as_bytes());
    let v: Value = serde_json::from_slice(&r.body).map_err(|e| e.to_string())?;
    let coarse = v["ids"].as_array().map_or(0, Vec::len);
    let fine = v["expanded"]["200x100"].as_array().map_or(0, Vec::len);
    checked += 1;
    check(
        r.status == 200 && coarse == 4 && fine == 64,
        format!("{checked} endpoint payloads schema-valid, 2x2 rect -> {coarse} ids -> {fine} ids at 200x100"),
    )
}

#[test]
fn acceptance() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pipeline = quick_pipeline(a.path(), b.path());
    let store = RunStore::open(a.path()).expect("quick run store");
    let run = store.run(Some("quick")).expect("quick run").clone();
    let svc = Service::new(store);

    let results: Vec<(&str, Outcome)> = vec![
        ("rasterization-conservation", rasterization_conservation()),
        ("metric-oracle", metric_oracle_equivalence()),
        ("hand-cases", hand_cases()),
        ("moran-checkerboard", moran_checkerboard()),
        ("lisa-consistency", lisa_consistency()),
        ("layout-optimality", layout_optimality()),
        ("layout-sixteen-square", sixteen_square()),
        ("volume-error-correlation", volume_error_correlation(&run)),
        ("quick-pipeline", pipeline),
        ("api-contract", api_contract(&svc)),
    ];

    let mut out = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (name, r) in &results {
        let line = match r {
            Ok(d) => format!("PASS {name}: {d}"),
            Err(d) => {
                failed.push(*name);
                let known = if KNOWN_DEVIATIONS.contains(name) { " [known deviation]" } else { "" };
                format!("FAIL {name}: {d}{known}")
            }
        };
        writeln!(out, "acceptance {line}").unwrap();
    }
    writeln!(out, "acceptance summary: {}/{} pass", results.len() - failed.len(), results.len()).unwrap();
    out.flush().unwrap();
    drop(out);
    assert_eq!(failed, KNOWN_DEVIATIONS, "failing criteria differ from the documented deviations");
}
