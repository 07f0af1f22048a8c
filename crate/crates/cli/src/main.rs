//! `maup`: run the diagnostics pipeline, individual stages, or the API server.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;

use maup_core::config::{ConfigError, InputSource, RunConfig, Scale, Shape, TazSource};
use maup_core::geo::{synthetic_zones, write_zones_geojson, BBox};
use maup_core::ingest::write_movements_file;
use maup_core::pipeline::{self, export_artifact, format_rmse_table, load_run_config, ExportWhat, PipelineError};
use maup_core::service::{self, Service};
use maup_core::store::RunStore;
use maup_core::synth::{synth_generate, SynthSpec};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "maup", version, about = "Diagnose traffic-prediction error across spatial shapes and scales")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and seal the run.
    Run(ConfigArgs),
    /// Clean (or generate) movements into the run directory and persist the config.
    Ingest(ConfigArgs),
    /// Write a synthetic movement CSV.
    Synth(SynthArgs),
    /// Count flows per combination and split train/test.
    Aggregate(ConfigArgs),
    /// Produce predicted test tensors.
    Predict(ConfigArgs),
    /// Per-region metrics, palette bins, and global RMSE.
    Evaluate(ConfigArgs),
    /// Moran's I and LISA scatter per combination.
    Assoc(ConfigArgs),
    /// Hierarchical dot layouts per shape.
    Layout(ConfigArgs),
    /// Write metadata and mark the run immutable.
    Seal(ConfigArgs),
    /// Serve sealed runs over HTTP.
    Serve(ServeArgs),
    /// Print one stored artifact.
    Export(ExportArgs),
}

/// Stage commands after `ingest` only use `--out`/`--run-id` (or the values in
/// `--config`) to locate the run; the rest of the config comes from the run itself.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Run config JSON; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 14 synthetic days at 50x25 and 100x50 for both shapes.
    #[arg(long)]
    quick: bool,
    /// Output root; takes precedence over MAUP_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Span length; train days become days minus test days.
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    test_days: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    shapes: Vec<Shape>,
    #[arg(long, value_delimiter = ',')]
    scales: Vec<Scale>,
    /// Movement CSV to ingest instead of synthetic data.
    #[arg(long)]
    movements: Option<PathBuf>,
    /// Zone GeoJSON for the taz shape.
    #[arg(long)]
    taz: Option<PathBuf>,
    /// Shuffles for the permutation p-value of global I.
    #[arg(long)]
    permutations: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 14)]
    days: usize,
    /// Generator spec JSON; overrides --seed and --days.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Movement CSV path; defaults to `<out>/movements.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write a jittered zone tiling as GeoJSON.
    #[arg(long)]
    taz_output: Option<PathBuf>,
    #[arg(long, default_value_t = 41)]
    taz_nx: usize,
    #[arg(long, default_value_t = 26)]
    taz_ny: usize,
    #[arg(long, default_value_t = 0.2)]
    taz_jitter: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    addr: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// A sealed run directory or a directory of runs; defaults to the output root.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// diagnostics | scatter | vsup | layout | meta
    #[arg(long)]
    what: ExportWhat,
    #[arg(long, default_value = "grid")]
    shape: Shape,
    #[arg(long, default_value = "50x25")]
    scale: Scale,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    run: ConfigArgs,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Stage(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => CliError::Config(c.to_string()),
            other => CliError::Stage(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

/// `--out`, then MAUP_OUT, then the config's own value.
fn out_root(flag: Option<&Path>, fallback: PathBuf) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os("MAUP_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => fallback,
    }
}

fn build_config(a: &ConfigArgs) -> Result<RunConfig, CliError> {
    let seed = a.seed.unwrap_or(42);
    let mut cfg = match &a.config {
        Some(path) => {
            let mut c = RunConfig::from_file(path)?;
            if let Some(s) = a.seed {
                c.seed = s;
            }
            c
        }
        None if a.quick => RunConfig::quick(seed),
        None => RunConfig::full(seed),
    };
    if let Some(id) = &a.run_id {
        cfg.run_id = id.clone();
    }
    if let Some(t) = a.test_days {
        cfg.test_days = t;
        cfg.train_days = cfg.days.saturating_sub(t);
    }
    if let Some(d) = a.days {
        cfg.days = d;
        cfg.train_days = d.saturating_sub(cfg.test_days);
        if let InputSource::Synthetic { spec: Some(spec) } = &mut cfg.input {
            spec.days = d;
        }
    }
    if !a.shapes.is_empty() {
        cfg.shapes = a.shapes.clone();
    }
    if !a.scales.is_empty() {
        cfg.scales = a.scales.clone();
    }
    if let Some(p) = &a.movements {
        cfg.input = InputSource::Movements { path: p.clone() };
    }
    if let Some(p) = &a.taz {
        cfg.taz = Some(TazSource::File { path: p.clone() });
    }
    if let Some(n) = a.permutations {
        cfg.permutations = n;
    }
    cfg.out_dir = out_root(a.out.as_deref(), cfg.out_dir);
    let cfg = cfg.normalized();
    cfg.validate()?;
    Ok(cfg)
}

/// The config persisted in an existing run, located through the flags.
fn existing_run(a: &ConfigArgs) -> Result<(RunConfig, PathBuf), CliError> {
    let dir = build_config(a)?.run_dir();
    if !dir.join(maup_core::store::CONFIG).exists() {
        return Err(CliError::Stage(format!("missing run config in {} (run ingest first)", dir.display())));
    }
    Ok((load_run_config(&dir)?, dir))
}

fn stage(a: &ConfigArgs, f: impl FnOnce(&RunConfig, &Path) -> Result<(), PipelineError>) -> Result<(), CliError> {
    let (cfg, dir) = existing_run(a)?;
    f(&cfg, &dir)?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let spec = match &a.spec {
        Some(p) => SynthSpec::from_json_file(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => SynthSpec::default_with(a.seed, a.days),
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let base = RunConfig::quick(spec.seed);
    let records = synth_generate(&spec, &base.bbox, base.start).map_err(|e| CliError::Stage(e.to_string()))?;
    let output = match &a.output {
        Some(p) => p.clone(),
        None => out_root(a.out.as_deref(), base.out_dir).join("movements.csv"),
    };
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Stage(format!("{}: {e}", parent.display())))?;
    }
    write_movements_file(&output, &records).map_err(|e| CliError::Stage(e.to_string()))?;
    info!("synth: {} records to {}", records.len(), output.display());
    if let Some(taz) = &a.taz_output {
        let zones = synthetic_zones(BBox::shenzhen(), a.taz_nx, a.taz_ny, a.taz_jitter, spec.seed)
            .map_err(|e| CliError::Config(e.to_string()))?;
        write_zones_geojson(taz, &zones).map_err(|e| CliError::Stage(e.to_string()))?;
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let path = match &a.store {
        Some(p) => p.clone(),
        None => out_root(a.out.as_deref(), PathBuf::from("out")),
    };
    let store = RunStore::open(&path).map_err(|e| CliError::Stage(format!("serve: {e}")))?;
    let listener = service::bind((a.addr.as_str(), a.port)).map_err(|e| CliError::Stage(format!("serve: {e}")))?;
    let local = listener.local_addr().map_err(|e| CliError::Stage(format!("serve: {e}")))?;
    println!("listening on http://{local}");
    std::io::stdout().flush().ok();
    service::run(listener, Arc::new(Service::new(store)));
    Ok(())
}

fn export(a: &ExportArgs) -> Result<(), CliError> {
    let dir = build_config(&a.run)?.run_dir();
    let bytes = export_artifact(&dir, a.what, a.shape, a.scale)?;
    match &a.output {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Stage(format!("export: {}: {e}", p.display()))),
        None => std::io::stdout().write_all(&bytes).map_err(|e| CliError::Stage(format!("export: {e}"))),
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => {
            let cfg = build_config(&a)?;
            let (dir, rows) = pipeline::run_pipeline(&cfg)?;
            print!("{}", format_rmse_table(&rows));
            info!("sealed run at {}", dir.display());
            Ok(())
        }
        Command::Ingest(a) => {
            let cfg = build_config(&a)?;
            let report = pipeline::stage_ingest(&cfg, &cfg.run_dir())?;
            println!("ingest: {} rows read, {} retained", report.rows_read, report.retained);
            Ok(())
        }
        Command::Synth(a) => synth(&a),
        Command::Aggregate(a) => stage(&a, pipeline::stage_aggregate),
        Command::Predict(a) => stage(&a, pipeline::stage_predict),
        Command::Evaluate(a) => stage(&a, pipeline::stage_evaluate),
        Command::Assoc(a) => stage(&a, pipeline::stage_assoc),
        Command::Layout(a) => stage(&a, pipeline::stage_layout),
        Command::Seal(a) => {
            let (cfg, dir) = existing_run(&a)?;
            let rows = pipeline::stage_seal(&cfg, &dir)?;
            print!("{}", format_rmse_table(&rows));
            Ok(())
        }
        Command::Serve(a) => serve(&a),
        Command::Export(a) => export(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
