//! `fractalssm` command-line harness.
//!
//! Exit codes: 0 success, 1 verification or training failure, 2 usage
//! error, 3 I/O or domain error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fractalssm::csr::{build_skip_graph_with, max_window_misalignment, CsrConfig, RoundOutcome};
use fractalssm::curve::{generate_order, CurveKind, GridShape, ScanOrder};
use fractalssm::model::{
    build_model, eval_resolution_transfer, evaluate_at, load_checkpoint, save_checkpoint, train, BlockConfig, MetricRow,
    SynthTask, TaskKind, TrainConfig, TrainError,
};
use fractalssm::rng::DEFAULT_SEED;
use fractalssm::sds::{compute_sds, export_heatmap, Aggregation, SdsError};
use fractalssm::verify::{run_suite, Suite, VerifyOptions};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Failed(String),
    /// Stdout was closed by the reader, e.g. `| head`.
    #[error("stdout closed")]
    Closed,
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Closed => 0,
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 3,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

fn emit(text: &str) -> Result<()> {
    io::stdout().lock().write_all(text.as_bytes()).map_err(|e| match e.kind() {
        io::ErrorKind::BrokenPipe => CliError::Closed,
        _ => domain(e),
    })
}

macro_rules! out {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))?
    };
}

#[derive(Parser)]
#[command(
    name = "fractalssm",
    version,
    about = "Space-filling curves, skip routing and a small state-space classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scan order as `index,x,y` CSV.
    Curve(CurveArgs),
    /// Locality scores and threshold coverage for a scan order.
    Sds(SdsArgs),
    /// Build the skip-edge graph for a scan order.
    Csr(CsrArgs),
    /// Run seeded oracle and property suites.
    Verify(VerifyArgs),
    /// Train a classifier on a synthetic task.
    Train(TrainArgs),
    /// Evaluate checkpoints, or run the fractal versus raster transfer study.
    Eval(EvalArgs),
}

fn parse_kind(s: &str) -> std::result::Result<CurveKind, String> {
    s.parse().map_err(|e: fractalssm::curve::CurveError| e.to_string())
}

#[derive(Args)]
struct CurveArgs {
    /// hilbert, coil, meurthe, raster, zigzag, local or local:<w>
    #[arg(long, value_parser = parse_kind, default_value = "hilbert")]
    kind: CurveKind,
    #[arg(long)]
    size: usize,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SdsArgs {
    #[arg(long, value_parser = parse_kind, default_value = "hilbert")]
    kind: CurveKind,
    #[arg(long)]
    size: usize,
    /// Comma-separated ascending thresholds.
    #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "1.5")]
    thresholds: Vec<f64>,
    /// mean or sum
    #[arg(long, default_value = "mean")]
    aggregation: String,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_pgm: Option<PathBuf>,
}

#[derive(Args)]
struct CsrArgs {
    #[arg(long)]
    size: usize,
    #[arg(long, value_parser = parse_kind, default_value = "hilbert")]
    kind: CurveKind,
    /// Construction rounds; defaults to ceil(log2 N).
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out_dot: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Ssm,
    Grad,
    Rope,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteArg,
    /// Random instances per check; suite default when absent.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// fractal (hilbert), raster, or any curve kind
    #[arg(long, value_parser = parse_kind, default_value = "fractal")]
    order: CurveKind,
    #[arg(long, default_value_t = 8)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    d_state: usize,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[arg(long, default_value_t = 16)]
    mlp_hidden: usize,
    /// Disable skip-edge routing (plain recurrence).
    #[arg(long)]
    no_csr: bool,
    /// Disable rotary positions.
    #[arg(long)]
    no_prc: bool,
}

#[derive(Args, Clone)]
struct TaskArgs {
    #[arg(long, default_value = "stripes")]
    task: TaskKind,
    #[arg(long, default_value_t = 8)]
    train_size: usize,
    /// Evaluation grid side; twice the train size when absent.
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0.25)]
    noise: f64,
    /// Labels independent of the image.
    #[arg(long)]
    shuffle_labels: bool,
}

#[derive(Args, Clone)]
struct OptimArgs {
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    /// Global gradient-norm clip; 0 disables it.
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    #[arg(long, default_value_t = 128)]
    train_count: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    task: TaskArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Metrics CSV (`step,loss,acc`).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Checkpoint written after the last step.
    #[arg(long)]
    ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoints to evaluate; without any, the transfer study runs.
    #[arg(long)]
    ckpt: Vec<PathBuf>,
    /// Held-out images per evaluation.
    #[arg(long, default_value_t = 256)]
    eval_count: usize,
    /// Seeds of the transfer study, starting at `--seed`.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    task: TaskArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// JSON report of the transfer study.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn order_for(kind: CurveKind, size: usize) -> Result<ScanOrder> {
    let shape = GridShape::square(size).map_err(usage)?;
    generate_order(kind, shape).map_err(usage)
}

fn cmd_curve(a: &CurveArgs) -> Result<()> {
    let order = order_for(a.kind, a.size)?;
    let mut seen = vec![false; order.len()];
    for c in order.cells() {
        let k = c.y * a.size + c.x;
        if seen[k] {
            return Err(CliError::Failed(format!("cell ({}, {}) visited twice", c.x, c.y)));
        }
        seen[k] = true;
    }
    let csv = order.to_csv();
    match &a.out {
        Some(p) => {
            write_file(p, csv.as_bytes())?;
            out!(
                "{} {}x{}: {} cells, bijective, written to {}",
                order.kind(),
                a.size,
                a.size,
                order.len(),
                p.display()
            );
        }
        None => emit(&csv)?,
    }
    Ok(())
}

fn cmd_sds(a: &SdsArgs) -> Result<()> {
    if a.thresholds.is_empty() {
        return Err(usage("at least one threshold is required"));
    }
    let aggregation: Aggregation = a.aggregation.parse().map_err(|e: SdsError| usage(e))?;
    let order = order_for(a.kind, a.size)?;
    let report = compute_sds(&order, aggregation)
        .and_then(|r| r.with_table(&a.thresholds))
        .map_err(|e| match e {
            SdsError::EmptyThresholds | SdsError::UnsortedThresholds => usage(e),
            other => domain(other),
        })?;
    emit(&report.table_text())?;
    if let Some(p) = &a.out_json {
        let text = serde_json::to_string_pretty(&report.to_json()).map_err(domain)?;
        write_file(p, text.as_bytes())?;
    }
    if let Some(p) = &a.out_pgm {
        export_heatmap(&report, None, p).map_err(domain)?;
    }
    Ok(())
}

fn cmd_csr(a: &CsrArgs) -> Result<()> {
    let order = order_for(a.kind, a.size)?;
    let config = CsrConfig {
        iterations: a.iterations,
        ..CsrConfig::default()
    };
    let build = build_skip_graph_with(&order, &config);
    let g = &build.graph;
    out!("{} {}x{}: {} skip edges", order.kind(), a.size, a.size, g.skips().len());
    for round in &build.rounds {
        match round {
            RoundOutcome::Added {
                source,
                target,
                score,
                ratio,
            } => {
                let (s, t) = (order.cell(*source), order.cell(*target));
                out!(
                    "  {source} -> {target}  ({},{}) -> ({},{})  score {score:.4}  ratio {ratio:.4}",
                    s.x,
                    s.y,
                    t.x,
                    t.y
                );
            }
            RoundOutcome::Skipped => {
                out!("  (round skipped: every candidate is already an edge)")
            }
        }
    }
    out!("max window misalignment: {}", max_window_misalignment(&order, g));
    if let Some(p) = &a.out_dot {
        write_file(p, g.to_dot().as_bytes())?;
    }
    if let Some(p) = &a.out_json {
        let text = serde_json::to_string_pretty(&g.to_json()).map_err(domain)?;
        write_file(p, text.as_bytes())?;
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let suite = match a.suite {
        SuiteArg::Ssm => Suite::Ssm,
        SuiteArg::Grad => Suite::Grad,
        SuiteArg::Rope => Suite::Rope,
        SuiteArg::All => Suite::All,
    };
    let opts = VerifyOptions {
        seed: a.seed,
        seeds: a.seeds,
        n_max: a.n_max,
    };
    let report = run_suite(suite, &opts).map_err(usage)?;
    for c in &report.checks {
        out!(
            "{:<40} {:>5} instances  max err {:.3e}  tol {:.0e}  {}",
            c.name,
            c.instances,
            c.max_err,
            c.tolerance,
            if c.pass { "ok" } else { "FAILED" }
        );
        if !c.pass {
            out!("  violating seed {} (worst), {} failing", c.worst_seed, c.failing_seeds.len());
        }
    }
    if let Some(p) = &a.out {
        write_file(p, report.to_json_pretty().as_bytes())?;
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Failed("verification failed".into()))
    }
}

fn block_config(m: &ModelArgs, classes: usize, seed: u64) -> BlockConfig {
    BlockConfig {
        d_model: m.d_model,
        d_state: m.d_state,
        n_blocks: m.blocks,
        curve: m.order,
        use_csr: !m.no_csr,
        use_prc: !m.no_prc,
        seed,
        classes,
        mlp_hidden: m.mlp_hidden,
    }
}

fn synth_task(t: &TaskArgs, seed: u64) -> SynthTask {
    SynthTask {
        kind: t.task,
        train_size: t.train_size,
        test_size: t.test_size.unwrap_or(2 * t.train_size),
        classes: t.classes,
        shuffle_labels: t.shuffle_labels,
        noise: t.noise,
        seed,
    }
}

fn train_config(o: &OptimArgs) -> TrainConfig {
    TrainConfig {
        steps: o.steps,
        lr: o.lr,
        momentum: o.momentum,
        clip_norm: (o.clip > 0.0).then_some(o.clip),
        train_count: o.train_count,
        ..TrainConfig::default()
    }
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::DivergedLoss { .. } => CliError::Failed(e.to_string()),
        TrainError::NoSteps => usage(e),
        TrainError::Model(m) => usage(m),
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let config = block_config(&a.model, a.task.classes, a.seed);
    let task = synth_task(&a.task, a.seed);
    let cfg = train_config(&a.optim);
    let mut model = build_model(&config).map_err(usage)?;
    let rows = train(&mut model, &task, &cfg).map_err(train_error)?;
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    out!(
        "{} {}x{}: {} steps, loss {:.6} -> {:.6}, train acc {:.3} -> {:.3}",
        config.curve,
        task.train_size,
        task.train_size,
        rows.len(),
        first.loss,
        last.loss,
        first.acc,
        last.acc
    );
    if let Some(p) = &a.metrics {
        let mut buf = Vec::new();
        MetricRow::write_csv(&rows, &mut buf).map_err(domain)?;
        write_file(p, &buf)?;
    }
    if let Some(p) = &a.ckpt {
        save_checkpoint(p, &model, Some(&task), rows.len()).map_err(domain)?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    if a.ckpt.is_empty() {
        return transfer_study(a);
    }
    for path in &a.ckpt {
        let ck = load_checkpoint(path).map_err(domain)?;
        let task = ck
            .task
            .ok_or_else(|| domain(format!("{}: checkpoint carries no task", path.display())))?;
        let test = a.task.test_size.unwrap_or(task.test_size);
        let at_train = evaluate_at(&ck.model, &task, task.train_size, a.eval_count).map_err(usage)?;
        let at_test = evaluate_at(&ck.model, &task, test, a.eval_count).map_err(usage)?;
        out!(
            "{:<10} acc@{}x{} {:.4}  acc@{}x{} {:.4}",
            ck.model.config.curve,
            task.train_size,
            task.train_size,
            at_train,
            test,
            test,
            at_test
        );
    }
    Ok(())
}

fn transfer_study(a: &EvalArgs) -> Result<()> {
    let task = synth_task(&a.task, a.seed);
    let fractal = block_config(&a.model, a.task.classes, a.seed);
    if !fractal.curve.is_fractal() {
        return Err(usage(format!(
            "--order must be a fractal curve for the transfer study, got {}",
            fractal.curve
        )));
    }
    let raster = BlockConfig {
        curve: CurveKind::Raster,
        ..fractal.clone()
    };
    let cfg = TrainConfig {
        eval_count: a.eval_count,
        ..train_config(&a.optim)
    };
    let seeds: Vec<u64> = (0..a.seeds).map(|i| a.seed.wrapping_add(i)).collect();
    let report = eval_resolution_transfer(&fractal, &raster, &task, &cfg, &seeds).map_err(train_error)?;
    out!(
        "seed                  {:>8} {:>8} {:>8} {:>8}",
        "frac@tr",
        "frac@te",
        "rast@tr",
        "rast@te"
    );
    for s in &report.per_seed {
        out!(
            "{:<20}  {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            s.seed,
            s.fractal_train,
            s.fractal_test,
            s.raster_train,
            s.raster_test
        );
    }
    out!(
        "{:<20}  {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
        "mean",
        report.mean_fractal_train,
        report.mean_fractal_test,
        report.mean_raster_train,
        report.mean_raster_test
    );
    if let Some(p) = &a.out {
        let text = serde_json::to_string_pretty(&report).map_err(domain)?;
        write_file(p, text.as_bytes())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Curve(a) => cmd_curve(a),
        Command::Sds(a) => cmd_sds(a),
        Command::Csr(a) => cmd_csr(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Closed) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
