use std::path::Path;
use std::process::{Command, Output};

fn maup(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maup"))
        .args(args)
        .env("MAUP_OUT", out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn maup")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Grid-only quick args, small enough for a few seconds per run.
const SMALL: [&str; 5] = ["--quick", "--shapes", "grid", "--scales", "50x25"];

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a.csv"), tmp.path().join("b.csv"));
    for p in [&a, &b] {
        let o = maup(&["synth", "--seed", "42", "--days", "14", "--output", p.to_str().unwrap()], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert!(bytes.len() > 1000);
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let o = maup(&["synth", "--seed", "43", "--days", "14", "--output", b.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    assert_ne!(bytes, std::fs::read(&b).unwrap());
}

#[test]
fn synth_defaults_to_maup_out() {
    let tmp = tempfile::tempdir().unwrap();
    let o = maup(&["synth", "--days", "8"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("movements.csv").exists());
}

#[test]
fn evaluate_before_predict_fails_with_stage_exit() {
    let tmp = tempfile::tempdir().unwrap();
    for st in ["ingest", "aggregate"] {
        let o = maup(&[&[st][..], &SMALL[..]].concat(), tmp.path());
        assert!(o.status.success(), "{st}: {}", stderr(&o));
    }
    let o = maup(&[&["evaluate"][..], &SMALL[..]].concat(), tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("missing predictions"), "{}", stderr(&o));
}

#[test]
fn stage_by_stage_matches_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let staged = tmp.path().join("staged");
    let whole = tmp.path().join("whole");
    for st in ["ingest", "aggregate", "predict", "evaluate", "assoc", "layout", "seal"] {
        let o = maup(&[&[st][..], &SMALL[..]].concat(), &staged);
        assert!(o.status.success(), "{st}: {}", stderr(&o));
    }
    let o = maup(&[&["run"][..], &SMALL[..]].concat(), &whole);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with("shape  scale      rmse\ngrid   50x25 "), "{table}");

    for f in ["manifest.json", "meta.json", "config.json", "layout_grid.json", "grid_50x25/scatter.csv"] {
        assert_eq!(
            std::fs::read(staged.join("quick").join(f)).unwrap(),
            std::fs::read(whole.join("quick").join(f)).unwrap(),
            "{f}"
        );
    }

    // a sealed run refuses further stage writes
    let o = maup(&[&["evaluate"][..], &SMALL[..]].concat(), &staged);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("sealed"));
}

#[test]
fn rerunning_a_stage_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    for st in ["ingest", "aggregate", "predict", "evaluate"] {
        assert!(maup(&[&[st][..], &SMALL[..]].concat(), tmp.path()).status.success());
    }
    let p = tmp.path().join("quick/grid_50x25/diagnostics.csv");
    let before = std::fs::read(&p).unwrap();
    assert!(maup(&[&["evaluate"][..], &SMALL[..]].concat(), tmp.path()).status.success());
    assert_eq!(before, std::fs::read(&p).unwrap());
}

#[test]
fn export_scatter_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = maup(&["run", "--quick", "--shapes", "grid", "--scales", "50x25,100x50"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = maup(&["export", "--what", "scatter", "--shape", "grid", "--scale", "100x50", "--quick"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("region_id,z_value,z_lag,lisa,z_error"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty() && rows.len() <= 5000);
    assert!(rows.iter().all(|r| r.split(',').count() == 5));

    let o = maup(&["export", "--what", "vsup", "--shape", "grid", "--scale", "200x100", "--quick"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = maup(&["run", "--quick", "--scales", "64x32"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = maup(&["run", "--quick", "--days", "10", "--test-days", "12"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"days": 14, "bogus": 1}"#).unwrap();
    let o = maup(&["run", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config"));
    let o = maup(&["run", "--nope"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_taz_file_is_a_stage_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = maup(&["run", "--quick", "--scales", "50x25", "--taz", "/nonexistent/zones.geojson"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("ingest: missing taz file"), "{}", stderr(&o));
    assert!(!tmp.path().join("quick").exists());
}

#[test]
fn stage_without_ingest_reports_dependency() {
    let tmp = tempfile::tempdir().unwrap();
    let o = maup(&[&["predict"][..], &SMALL[..]].concat(), tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("run ingest first"));
}

#[test]
fn config_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "run_id": "from-file",
        "days": 14, "train_days": 7, "test_days": 7,
        "shapes": ["grid"], "scales": ["50x25"],
        "input": {"kind": "synthetic"},
        "predictor": {"kind": "slotwise_mean"},
        "seed": 3
    });
    let path = tmp.path().join("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = maup(&["run", "--config", path.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stored: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("from-file/config.json")).unwrap()).unwrap();
    assert_eq!(stored["seed"], 3);
    assert_eq!(stored["predictor"]["kind"], "slotwise_mean");
}
