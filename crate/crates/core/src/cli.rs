//! Command-line entry point: `track`, `eval`, `synth` and `selftest`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evalsim::{evaluate_ope, load_sequence, save_results, save_sequence, synthesize_sequence, write_heatmap, FrameResult, SequenceBundle, SynthSpec};
use crate::selftest;
use crate::tracker::{track_sequence, HeatMaps, TrackerConfig, Variant};

/// Every tunable of a run; the config file holds these keys verbatim.
pub type RunConfig = TrackerConfig;

#[derive(Parser, Debug)]
#[command(name = "lsart", about = "Spatial-aware regression tracker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track one sequence directory.
    Track(RunArgs),
    /// Track every sequence under a directory and aggregate metrics.
    Eval(RunArgs),
    /// Render a synthetic sequence from a JSON spec.
    Synth(SynthArgs),
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long, visible_alias = "out")]
    output: PathBuf,
    #[arg(long)]
    dump_heatmaps: bool,
    /// baseline, cps, srk or full; `eval` also accepts `all`.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, visible_alias = "out")]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

/// Contents of `metrics.json` for one tracked sequence.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetrics {
    pub sequence: String,
    pub variant: Variant,
    pub precision_20: f64,
    pub auc: f64,
    pub mean_center_error: f64,
    pub mean_iou: f64,
    pub frames: usize,
    pub runtime_seconds: Option<f64>,
}

/// Mean metrics of one variant over an `eval` batch.
#[derive(Clone, Debug, Serialize)]
pub struct BatchMetrics {
    pub variant: Variant,
    pub sequences: usize,
    pub precision_20: f64,
    pub auc: f64,
    pub mean_center_error: f64,
    pub mean_iou: f64,
    pub frames: usize,
    pub runtime_seconds: Option<f64>,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 usage or config error, 2 data error,
/// 3 numeric failure.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Track(a) => track_cmd(&a),
        Command::Eval(a) => eval_cmd(&a),
        Command::Synth(a) => synth_cmd(&a),
        Command::Selftest => return selftest_cmd(),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric(_) | Error::Singular { .. } => 3,
        _ => 2,
    }
}

/// Reads the config file (if any), applies flag overrides and validates.
pub fn load_config(path: Option<&Path>, variant: Option<Variant>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = variant {
        cfg.variant = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_variants(arg: Option<&str>, allow_all: bool) -> Result<Option<Vec<Variant>>> {
    match arg {
        None => Ok(None),
        Some("all") if allow_all => Ok(Some(Variant::ALL.to_vec())),
        Some(s) => Ok(Some(vec![s.parse()?])),
    }
}

/// Tracks `seq` with `cfg` and writes results, metrics and optional heat
/// maps into `out`.
pub fn track_to_dir(seq: &SequenceBundle, cfg: &RunConfig, out: &Path, dump_heatmaps: bool) -> Result<RunMetrics> {
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let outputs = track_sequence(&seq.frames, seq.gt[0], cfg)?;
    if dump_heatmaps {
        for (i, o) in outputs.iter().enumerate() {
            dump(out, i + 1, &o.heatmaps)?;
        }
    }
    let results: Vec<_> = outputs.iter().map(|o| FrameResult { bbox: o.bbox, score: o.score }).collect();
    let elapsed = start.elapsed().as_secs_f64();
    let boxes: Vec<_> = results.iter().map(|r| r.bbox).collect();
    let m = evaluate_ope(&boxes, &seq.gt)?;
    let metrics = RunMetrics {
        sequence: seq.name.clone(),
        variant: cfg.variant,
        precision_20: m.precision_20,
        auc: m.auc,
        mean_center_error: m.mean_center_error,
        mean_iou: m.mean_iou,
        frames: m.frames,
        runtime_seconds: cfg.record_runtime.then_some(elapsed),
    };
    save_results(out, &results, &metrics)?;
    Ok(metrics)
}

fn dump(out: &Path, frame: usize, maps: &HeatMaps) -> Result<()> {
    for (tag, map) in [("krr", &maps.krr), ("cnn", &maps.cnn), ("fused", &maps.fused)] {
        write_heatmap(&out.join(format!("heatmap_{frame:05}_{tag}.pgm")), map)?;
    }
    Ok(())
}

fn track_cmd(a: &RunArgs) -> Result<()> {
    let variant = parse_variants(a.variant.as_deref(), false)?.map(|v| v[0]);
    let cfg = load_config(a.config.as_deref(), variant, a.seed)?;
    let seq = load_sequence(&a.sequence)?;
    let m = track_to_dir(&seq, &cfg, &a.output, a.dump_heatmaps)?;
    println!(
        "{}: precision@20 {:.4}, auc {:.4}, mean center error {:.2} px over {} frames",
        m.sequence, m.precision_20, m.auc, m.mean_center_error, m.frames
    );
    Ok(())
}

/// Sequence directories directly under `root`, sorted by name.
fn sequence_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::MissingFile(root.to_path_buf()));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("groundtruth.txt").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingFile(root.join("*/groundtruth.txt")));
    }
    Ok(dirs)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn eval_cmd(a: &RunArgs) -> Result<()> {
    let variants = parse_variants(a.variant.as_deref(), true)?;
    let base = load_config(a.config.as_deref(), None, a.seed)?;
    let variants = variants.unwrap_or_else(|| vec![base.variant]);
    let dirs = sequence_dirs(&a.sequence)?;
    let seqs = dirs.iter().map(|d| load_sequence(d)).collect::<Result<Vec<_>>>()?;
    let many = variants.len() > 1;
    let mut batches = Vec::new();
    for &v in &variants {
        let cfg = base.for_variant(v);
        let root = if many { a.output.join(v.name()) } else { a.output.clone() };
        let start = Instant::now();
        let runs = seqs
            .iter()
            .map(|s| track_to_dir(s, &cfg, &root.join(&s.name), a.dump_heatmaps))
            .collect::<Result<Vec<_>>>()?;
        let batch = BatchMetrics {
            variant: v,
            sequences: runs.len(),
            precision_20: mean(runs.iter().map(|r| r.precision_20)),
            auc: mean(runs.iter().map(|r| r.auc)),
            mean_center_error: mean(runs.iter().map(|r| r.mean_center_error)),
            mean_iou: mean(runs.iter().map(|r| r.mean_iou)),
            frames: runs.iter().map(|r| r.frames).sum(),
            runtime_seconds: cfg.record_runtime.then(|| start.elapsed().as_secs_f64()),
        };
        println!("{}: mean precision@20 {:.4}, mean auc {:.4} over {} sequences", v, batch.precision_20, batch.auc, batch.sequences);
        fs::create_dir_all(&root)?;
        fs::write(root.join("metrics.json"), serde_json::to_string_pretty(&batch)? + "\n")?;
        batches.push(batch);
    }
    if many {
        let table: serde_json::Map<String, serde_json::Value> =
            batches.iter().map(|b| (b.variant.name().to_string(), serde_json::to_value(b).unwrap_or_default())).collect();
        fs::write(a.output.join("ablation.json"), serde_json::to_string_pretty(&table)? + "\n")?;
    }
    Ok(())
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&a.spec).map_err(|_| Error::MissingFile(a.spec.clone()))?;
    let mut spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::Spec(format!("{}: {e}", a.spec.display())))?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let seq = synthesize_sequence(&spec)?;
    save_sequence(&seq, &a.output)?;
    println!("wrote {} frames to {}", seq.frames.len(), a.output.display());
    Ok(())
}

fn selftest_cmd() -> i32 {
    let results = selftest::run_all();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        0
    } else {
        3
    }
}
