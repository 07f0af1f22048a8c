use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use maup_core::config::{RunConfig, Scale, Shape};
use maup_core::pipeline::{run_pipeline, Stage};
use maup_core::store::{combo_dir, Manifest, RunStore, OBSERVED_TEST};
use maup_core::tensor::FlowTensor;

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

#[test]
fn quick_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = RunConfig::quick(42);
    cfg.out_dir = a.path().to_path_buf();
    let t = Instant::now();
    let (dir_a, rows) = run_pipeline(&cfg).unwrap();
    eprintln!("quick run: {:?}", t.elapsed());
    assert_eq!(rows.len(), 4);
    cfg.out_dir = b.path().to_path_buf();
    let (dir_b, _) = run_pipeline(&cfg).unwrap();
    let (sa, sb) = (snapshot(&dir_a), snapshot(&dir_b));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{k} differs");
    }
    assert!(Manifest::is_sealed(&dir_a).unwrap());
    let store = RunStore::open(a.path()).unwrap();
    assert_eq!(store.runs.len(), 1);
}

#[test]
fn single_combination_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::quick(7);
    cfg.out_dir = tmp.path().to_path_buf();
    cfg.shapes = vec![Shape::Grid];
    cfg.scales = vec![Scale { w: 50, h: 25 }];
    let (dir, rows) = run_pipeline(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    let test = FlowTensor::read_file(&combo_dir(&dir, Shape::Grid, Scale { w: 50, h: 25 }).join(OBSERVED_TEST)).unwrap();
    assert_eq!(test.slots(), 336);
    assert_eq!((test.t_first(), test.t_last()), (336, 671));
}

#[test]
fn missing_taz_file_aborts_at_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::quick(7);
    cfg.out_dir = tmp.path().to_path_buf();
    cfg.taz = Some(maup_core::config::TazSource::File { path: tmp.path().join("nope.geojson") });
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Ingest));
    assert!(err.to_string().contains("missing taz file"));
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
}
