//! Command-line surface: argument parsing, run directories and exit codes.

mod config;
pub mod eval;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{EvalConfig, RunConfig};
pub use eval::{evaluate, load_csv_dataset, load_task_dirs, par_map, EvalDataset};
pub use manifest::Manifest;

use crate::backbone::{pretrain, write_loss_log, Backbone, Dropout};
use crate::error::{Error, Result};
use crate::heads::{check_heads, diagnose, train_head, write_head_log, HeadParams, HeadRegistry};
use crate::metrics::{auroc, bench_inference, render};
use crate::numerics::{RandomSource, Tensor};
use crate::simulator::export::write_task;
use crate::simulator::{generate_task, task_stream};
use crate::streams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const CHECKPOINT_FILE: &str = "backbone.fmx";
pub const PRETRAIN_LOG_FILE: &str = "pretrain_log.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const DIAGNOSIS_CSV: &str = "diagnosis.csv";
pub const DIAGNOSIS_JSON: &str = "diagnosis.json";
pub const TIMING_JSON: &str = "timing.json";

pub fn head_file(name: &str) -> String {
    format!("head_{name}.fmxh")
}

pub fn head_log_file(name: &str) -> String {
    format!("head_{name}_log.csv")
}

#[derive(Debug, Parser)]
#[command(name = "fomox", version, about = "In-context outlier detection with diagnostic heads")]
pub struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; required by simulate, pretrain and train-head.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for dataset-level work.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic task directories.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        n_tasks: usize,
    },
    /// Pretrain the backbone on simulated tasks.
    Pretrain {
        #[arg(long)]
        out: PathBuf,
        /// Overrides `pretrain.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train one diagnostic head on the frozen backbone.
    TrainHead {
        #[arg(long)]
        checkpoint: PathBuf,
        /// One of: severity, uncertainty, auroc, threshold.
        #[arg(long)]
        head: String,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `head_training.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score task directories or a labeled CSV and write a report.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-query and dataset-level diagnosis of one dataset.
    Diagnose {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time inference with and without the heads attached.
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        /// Overrides `eval.bench_reps`.
        #[arg(long)]
        reps: Option<usize>,
        /// Also write the timings here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Head file; repeat to attach several.
    #[arg(long = "head")]
    pub heads: Vec<PathBuf>,
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["tasks", "csv"])))]
pub struct InputArgs {
    /// A task directory, or a directory of task directories.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Labeled CSV file; requires --label-column.
    #[arg(long, requires = "label_column")]
    pub csv: Option<PathBuf>,
    #[arg(long, requires = "csv")]
    pub label_column: Option<String>,
}

/// Errors carrying their exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Run(Error::NonFinite(_)) => EXIT_NUMERIC,
            Failure::Run(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Run(e) => write!(f, "{e}"),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    Ok(cfg)
}

fn required_seed(cli: &Cli, cmd: &str) -> std::result::Result<u64, Failure> {
    cli.seed.ok_or_else(|| Failure::Usage(format!("{cmd} requires --seed")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn execute(cli: &Cli) -> Outcome {
    if cli.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    match &cli.command {
        Command::Simulate { out, n_tasks } => {
            let seed = required_seed(cli, "simulate")?;
            simulate(&resolve_config(cli)?, seed, out, *n_tasks)
        }
        Command::Pretrain { out, epochs } => {
            let seed = required_seed(cli, "pretrain")?;
            let mut cfg = resolve_config(cli)?;
            if let Some(e) = epochs {
                cfg.pretrain.epochs = *e;
            }
            pretrain_cmd(&cfg, seed, out)
        }
        Command::TrainHead {
            checkpoint,
            head,
            out,
            epochs,
        } => {
            if HeadRegistry::builtin().get(head).is_none() {
                return Err(Failure::Usage(format!(
                    "unknown head `{head}`; expected one of {}",
                    HeadRegistry::builtin().names().join(", ")
                )));
            }
            let seed = required_seed(cli, "train-head")?;
            let mut cfg = resolve_config(cli)?;
            if let Some(e) = epochs {
                cfg.head_training.epochs = *e;
            }
            train_head_cmd(&cfg, seed, checkpoint, head, out)
        }
        Command::Eval { model, input, out } => eval_cmd(&resolve_config(cli)?, cli.threads, model, input, out),
        Command::Diagnose { model, input, out } => diagnose_cmd(&resolve_config(cli)?, model, input, out),
        Command::Bench { model, reps, out } => {
            let mut cfg = resolve_config(cli)?;
            if let Some(r) = reps {
                if *r < 10 {
                    return Err(Failure::Usage(format!("--reps must be at least 10, got {r}")));
                }
                cfg.eval.bench_reps = *r;
            }
            bench_cmd(&cfg, model, out.as_deref())
        }
    }
}

fn simulate(cfg: &RunConfig, seed: u64, out: &Path, n_tasks: usize) -> Outcome {
    create_dir(out)?;
    let mut manifest = Manifest::new("simulate", seed, cfg)?;
    for id in 0..n_tasks {
        let (h, task) = generate_task(&cfg.simulator, &task_stream(seed, streams::SIMULATE, id as u64), None)?;
        let dir = out.join(format!("task_{id:05}"));
        create_dir(&dir)?;
        for p in write_task(&dir, &h, &task)? {
            manifest.add_artifact(out, &p)?;
        }
    }
    manifest.write(out)?;
    println!("wrote {n_tasks} task(s) to {}", out.display());
    Ok(())
}

/// Mean AUROC of the detector over `n` tasks from the evaluation stream.
fn validation_auroc(b: &Backbone, cfg: &RunConfig, seed: u64) -> Result<Option<f64>> {
    let mut sum = Vec::new();
    for id in 0..cfg.eval.validation_tasks as u64 {
        let (_, t) = generate_task(&cfg.simulator, &task_stream(seed, streams::EVAL_TASKS, id), None)?;
        let out = b.score(&t.context, &t.queries, Dropout::Off)?;
        sum.extend(auroc(&out.p_outlier, &t.labels).ok());
    }
    Ok((!sum.is_empty()).then(|| sum.iter().sum::<f64>() / sum.len() as f64))
}

fn pretrain_cmd(cfg: &RunConfig, seed: u64, out: &Path) -> Outcome {
    create_dir(out)?;
    let (b, log) = pretrain(&cfg.backbone, &cfg.simulator, &cfg.pretrain, seed, |e| {
        println!("epoch {} loss {:.6} lr {:.3e}", e.epoch, e.mean_loss, e.lr);
    })?;
    let ckpt = out.join(CHECKPOINT_FILE);
    b.save(&ckpt)?;
    let log_path = out.join(PRETRAIN_LOG_FILE);
    write_loss_log(&log_path, &log)?;
    let metric = if log.is_empty() { None } else { validation_auroc(&b, cfg, seed)? };
    let mut manifest = Manifest::new("pretrain", seed, cfg)?;
    manifest.add_artifact(out, &ckpt)?;
    manifest.add_artifact(out, &log_path)?;
    manifest.write(out)?;
    println!("validation auroc: {}", render_metric(metric));
    Ok(())
}

fn render_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn train_head_cmd(cfg: &RunConfig, seed: u64, checkpoint: &Path, name: &str, out: &Path) -> Outcome {
    let b = Backbone::load(checkpoint)?;
    create_dir(out)?;
    let registry = HeadRegistry::builtin();
    let head = registry.get(name).expect("checked by the caller");
    let (hp, log) = train_head(head, &b, &cfg.simulator, &cfg.head_training, seed, |e| {
        println!("epoch {} loss {:.6} val {} lr {:.3e}", e.epoch, e.loss, render_metric(e.val_metric), e.lr);
    })?;
    let head_path = out.join(head_file(name));
    hp.save(&head_path)?;
    let log_path = out.join(head_log_file(name));
    write_head_log(&log_path, &log)?;
    let mut manifest = Manifest::new("train-head", seed, cfg)?;
    manifest.add_input(checkpoint)?;
    manifest.add_artifact(out, &head_path)?;
    manifest.add_artifact(out, &log_path)?;
    manifest.write(out)?;
    println!("final validation metric: {}", render_metric(log.last().and_then(|e| e.val_metric)));
    Ok(())
}

fn load_model(model: &ModelArgs) -> Result<(Backbone, Vec<HeadParams>)> {
    let b = Backbone::load(&model.checkpoint)?;
    let heads = model.heads.iter().map(|p| HeadParams::load(p)).collect::<Result<Vec<_>>>()?;
    check_heads(&b, &heads)?;
    Ok((b, heads))
}

fn load_inputs(cfg: &RunConfig, seed: u64, input: &InputArgs, d_max: usize) -> Result<Vec<EvalDataset>> {
    match (&input.tasks, &input.csv, &input.label_column) {
        (Some(dir), _, _) => load_task_dirs(dir, d_max),
        (None, Some(csv), Some(label)) => {
            let mut rng = RandomSource::new(seed, streams::SPLIT);
            let (data, dropped) = load_csv_dataset(csv, label, cfg.eval.context_fraction, d_max, &mut rng)?;
            if dropped > 0 {
                println!("dropped {dropped} row(s) with non-finite values");
            }
            Ok(vec![data])
        }
        _ => unreachable!("clap enforces one input source"),
    }
}

fn add_model_inputs(manifest: &mut Manifest, model: &ModelArgs) -> Result<()> {
    manifest.add_input(&model.checkpoint)?;
    model.heads.iter().try_for_each(|h| manifest.add_input(h))
}

fn eval_cmd(cfg: &RunConfig, threads: usize, model: &ModelArgs, input: &InputArgs, out: &Path) -> Outcome {
    let seed = cfg.seed.unwrap_or(0);
    let (b, heads) = load_model(model)?;
    let datasets = load_inputs(cfg, seed, input, b.config.d_max)?;
    let rng = RandomSource::new(seed, streams::TEACHER);
    let report = evaluate(&b, &heads, &datasets, &cfg.head_training, &rng, threads)?;
    create_dir(out)?;
    let (json, csv) = (out.join(REPORT_JSON), out.join(REPORT_CSV));
    report.write(&json, &csv)?;
    let mut manifest = Manifest::new("eval", seed, cfg)?;
    add_model_inputs(&mut manifest, model)?;
    manifest.add_artifact(out, &json)?;
    manifest.add_artifact(out, &csv)?;
    manifest.write(out)?;
    println!("datasets {} queries {} auroc {}", report.n_datasets, report.n_queries, render(report.auroc));
    if let Some(s) = &report.severity {
        println!("balanced accuracy {}", render(s.balanced_accuracy));
    }
    for (k, v) in &report.spearman {
        println!("spearman {k} {}", render(*v));
    }
    Ok(())
}

fn diagnose_cmd(cfg: &RunConfig, model: &ModelArgs, input: &InputArgs, out: &Path) -> Outcome {
    let seed = cfg.seed.unwrap_or(0);
    let (b, heads) = load_model(model)?;
    let datasets = load_inputs(cfg, seed, input, b.config.d_max)?;
    let [data] = datasets.as_slice() else {
        return Err(Failure::Usage(format!("diagnose takes one dataset, found {}", datasets.len())));
    };
    let d = diagnose(&b, &heads, &data.context, &data.queries)?;
    create_dir(out)?;
    let (csv, json) = (out.join(DIAGNOSIS_CSV), out.join(DIAGNOSIS_JSON));
    d.write(&csv, &json)?;
    let mut manifest = Manifest::new("diagnose", seed, cfg)?;
    add_model_inputs(&mut manifest, model)?;
    manifest.add_artifact(out, &csv)?;
    manifest.add_artifact(out, &json)?;
    manifest.write(out)?;
    println!("{}", d.summary_line());
    Ok(())
}

/// Synthetic tasks whose context holds `eval.bench_context` points.
pub fn bench_tasks(cfg: &RunConfig, seed: u64) -> Result<Vec<(Tensor, Tensor)>> {
    let mut sim = cfg.simulator.clone();
    sim.n_context = cfg.eval.bench_context;
    sim.n_inlier_pool = sim.n_inlier_pool.max(sim.n_context + sim.n_query_inliers());
    (0..cfg.eval.bench_tasks as u64)
        .map(|id| {
            let (_, t) = generate_task(&sim, &task_stream(seed, streams::EVAL_TASKS, id), None)?;
            Ok((t.context, t.queries))
        })
        .collect()
}

fn bench_cmd(cfg: &RunConfig, model: &ModelArgs, out: Option<&Path>) -> Outcome {
    let (b, heads) = load_model(model)?;
    let tasks = bench_tasks(cfg, cfg.seed.unwrap_or(0))?;
    let timing = bench_inference(&b, &heads, &tasks, cfg.eval.bench_reps)?.timing();
    println!(
        "backbone {:.1} ns/sample (mad {:.1} ns), with {} head(s) {:.1} ns/sample, overhead {:.3}%",
        timing.backbone_ns_per_sample,
        timing.backbone_mad_ns,
        heads.len(),
        timing.with_heads_ns_per_sample,
        100.0 * timing.relative_overhead
    );
    if let Some(dir) = out {
        create_dir(dir)?;
        let path = dir.join(TIMING_JSON);
        let mut text = serde_json::to_string_pretty(&timing).map_err(Error::from)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(args: &[&str]) -> i32 {
        run(std::iter::once("fomox").chain(args.iter().copied()))
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(code(&[]), EXIT_USAGE);
        assert_eq!(code(&["simulate", "--out", "/nonexistent/x"]), EXIT_USAGE);
        assert_eq!(code(&["frobnicate"]), EXIT_USAGE);
        assert_eq!(code(&["--seed", "1", "train-head", "--checkpoint", "x", "--head", "nope", "--out", "y"]), EXIT_USAGE);
        assert_eq!(code(&["--help"]), EXIT_OK);
    }

    #[test]
    fn failures_map_to_codes() {
        assert_eq!(Failure::Run(Error::NonFinite("x".into())).exit_code(), EXIT_NUMERIC);
        assert_eq!(Failure::Run(Error::Capacity { d: 3, d_max: 2 }).exit_code(), EXIT_IO);
        assert_eq!(Failure::Usage("x".into()).exit_code(), EXIT_USAGE);
    }

    #[test]
    fn zero_tasks_gives_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sim");
        assert_eq!(code(&["--seed", "3", "simulate", "--out", out.to_str().unwrap(), "--n-tasks", "0"]), EXIT_OK);
        let m = Manifest::read(&out).unwrap();
        assert!(m.artifacts.is_empty());
    }
}
