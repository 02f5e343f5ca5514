use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mergeplan_core::comm_model::{
    coefficients_for, fit_model, read_measurements, AllReduceAlgorithm, AllReduceModel, ModelFile, ModelSource,
    NetworkParams, TreeStartup,
};
use mergeplan_core::planner::{brute_force_plan, optimal_plan, PlanExport, DEFAULT_BRUTE_FORCE_MAX_LAYERS};
use mergeplan_core::sweep::{evaluate_strategy, run_sweep, Strategy};
use mergeplan_core::timeline::{evaluate, speedup, MergePlan};
use mergeplan_core::trace::{load_trace_file, resnet50_like, save_trace, ModelTrace};
use mergeplan_core::Error;

/// Fitted ring all-reduce line of the reference 16-worker cluster, used to
/// derive default network parameters for sweeps.
const REFERENCE_FIT: (f64, f64, u32) = (9.72e-4, 1.97e-9, 16);

const EXIT_INPUT: u8 = 2;
const EXIT_PLANNER: u8 = 3;
const EXIT_GUARD: u8 = 4;
const EXIT_ALL_ROWS_FAILED: u8 = 5;

#[derive(Parser)]
#[command(name = "mergeplan", version, about = "Plan gradient merging and simulate data-parallel iteration timelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an all-reduce cost model from measurements, or derive one from
    /// network parameters.
    Fit(FitArgs),
    /// Compute the optimal merge plan for a trace.
    Plan(PlanArgs),
    /// Simulate one strategy and print a summary line.
    Simulate(SimulateArgs),
    /// Evaluate all strategies across worker counts.
    Sweep(SweepArgs),
    /// Write the bundled synthetic trace.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct NetworkArgs {
    /// Per-message latency in seconds.
    #[arg(long)]
    alpha: Option<f64>,
    /// Per-byte transfer time in seconds.
    #[arg(long)]
    beta: Option<f64>,
    /// Per-byte reduction time in seconds.
    #[arg(long)]
    gamma: Option<f64>,
    /// Use the unscaled startup term for double binary trees.
    #[arg(long)]
    literal_tree: bool,
}

impl NetworkArgs {
    fn tree_startup(&self) -> TreeStartup {
        if self.literal_tree {
            TreeStartup::Literal
        } else {
            TreeStartup::AlphaCorrected
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header `size_bytes,time_us`.
    #[arg(conflicts_with_all = ["algo", "alpha", "beta", "gamma"])]
    measurements: Option<PathBuf>,
    #[arg(long, required_unless_present = "measurements")]
    algo: Option<AllReduceAlgorithm>,
    #[arg(long, required_unless_present = "measurements")]
    workers: Option<u32>,
    #[command(flatten)]
    net: NetworkArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    trace: PathBuf,
    model: PathBuf,
    /// Cross-check against exhaustive search.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    trace: PathBuf,
    model: PathBuf,
    #[arg(long)]
    strategy: Strategy,
    /// Worker count, needed for the speedup figure.
    #[arg(long)]
    workers: Option<u32>,
    /// Timeline export path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    trace: PathBuf,
    #[arg(long, default_value = "ring")]
    algo: AllReduceAlgorithm,
    /// `LO..HI` for powers of two between the bounds, or a comma list.
    #[arg(long, default_value = "4..2048")]
    workers: String,
    #[command(flatten)]
    net: NetworkArgs,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format JSON output path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::SearchTooLarge { .. } => EXIT_GUARD,
            Error::PlannerRejected(_) | Error::InvalidPlan(_) | Error::LayerOutOfRange { .. } | Error::ZeroCompute => {
                EXIT_PLANNER
            }
            _ => EXIT_INPUT,
        };
        Self::new(code, err.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(err: io::Error) -> Self {
        Self::new(EXIT_INPUT, err.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Synth { out } => with_output(out.as_deref(), |w| Ok(save_trace(&resnet50_like(), w)?)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn open(path: &Path) -> std::result::Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

/// Runs `write` against the named file, or stdout when no path is given.
fn with_output(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> CmdResult) -> CmdResult {
    match path {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
            let mut out = BufWriter::new(file);
            write(&mut out)?;
            out.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            write(&mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn load_trace(path: &Path) -> std::result::Result<ModelTrace, Failure> {
    let loaded = load_trace_file(path)?;
    warn_all(&loaded.warnings);
    Ok(loaded.trace)
}

fn load_model(path: &Path) -> std::result::Result<AllReduceModel, Failure> {
    let file = ModelFile::read(open(path)?)?;
    warn_all(&file.warnings);
    Ok(file.model()?)
}

fn cmd_fit(args: FitArgs) -> CmdResult {
    let file = match (&args.measurements, args.algo, args.workers) {
        (Some(path), _, _) => {
            let model = fit_model(&read_measurements(open(path)?)?)?;
            ModelFile::new(model, ModelSource::Fit, Vec::new())
        }
        (None, Some(algo), Some(workers)) => {
            let (Some(alpha), Some(beta)) = (args.net.alpha, args.net.beta) else {
                return Err(Failure::new(EXIT_INPUT, "--alpha and --beta are required without a measurements file"));
            };
            let net = NetworkParams::new(alpha, beta, args.net.gamma.unwrap_or(0.0), workers)?;
            let derived = coefficients_for(algo, &net, args.net.tree_startup())?;
            warn_all(&derived.warnings);
            ModelFile::new(derived.model, ModelSource::ClosedForm, derived.warnings)
        }
        _ => return Err(Failure::new(EXIT_INPUT, "need a measurements file or --algo and --workers")),
    };
    with_output(args.out.as_deref(), |w| Ok(file.write(w)?))
}

fn cmd_plan(args: PlanArgs) -> CmdResult {
    let trace = load_trace(&args.trace)?;
    let comm = load_model(&args.model)?;
    let plan = optimal_plan(&trace, &comm)?;
    let export = PlanExport::new(&trace, &plan, &comm)?;
    if args.oracle {
        let predicted = evaluate(&trace, &plan, &comm)?.iteration_time;
        let (_, best) = brute_force_plan(&trace, &comm, DEFAULT_BRUTE_FORCE_MAX_LAYERS)?;
        if (predicted - best).abs() > 1e-9 {
            return Err(Failure::new(
                EXIT_PLANNER,
                format!("oracle mismatch: planner {predicted:e} s, exhaustive minimum {best:e} s"),
            ));
        }
        eprintln!("oracle agrees: {best:e} s");
    }
    with_output(args.out.as_deref(), |w| Ok(export.write(w)?))
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let trace = load_trace(&args.trace)?;
    let comm = load_model(&args.model)?;
    let outcome = evaluate_strategy(&trace, &comm, args.strategy)?;

    let mut summary = format!(
        "strategy={} iter_time_us={} comm_nonoverlap_us={}",
        args.strategy,
        outcome.iteration_time * 1e6,
        outcome.comm_nonoverlap * 1e6
    );
    if let Some(n) = args.workers {
        let s = speedup(n, trace.forward_time(), trace.total_backward_time(), outcome.comm_nonoverlap)?;
        summary.push_str(&format!(" speedup={s}"));
    }
    println!("{summary}");

    if let Some(path) = args.out.as_deref() {
        // The naive strategy has no overlap; its timeline is written as the
        // all-normal schedule.
        let plan = outcome.plan.unwrap_or_else(|| MergePlan::all_normal(trace.len()));
        let tl = evaluate(&trace, &plan, &comm)?;
        with_output(Some(path), |w| Ok(tl.write_json(w)?))?;
    }
    Ok(())
}

/// Parses `LO..HI` (powers of two from LO doubling up to HI) or `a,b,c`.
fn parse_worker_counts(raw: &str) -> std::result::Result<Vec<u32>, Failure> {
    let raw = raw.trim();
    let bad = |what: &str| Failure::new(EXIT_INPUT, format!("bad worker count {what:?} in {raw:?}"));
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((lo, hi)) = raw.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(|_| bad(lo))?;
        let hi: u32 = hi.trim().parse().map_err(|_| bad(hi))?;
        if lo == 0 {
            return Err(bad("0"));
        }
        let mut counts = Vec::new();
        let mut n = lo;
        while n <= hi {
            counts.push(n);
            match n.checked_mul(2) {
                Some(next) => n = next,
                None => break,
            }
        }
        return Ok(counts);
    }
    raw.split(',')
        .map(|part| part.trim().parse().map_err(|_| bad(part)))
        .collect()
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let trace = load_trace(&args.trace)?;
    let counts = parse_worker_counts(&args.workers)?;
    let (a, b, n) = REFERENCE_FIT;
    let reference = NetworkParams::from_ring_fit(&AllReduceModel::new(a, b)?, n)?;
    let net = NetworkParams::new(
        args.net.alpha.unwrap_or(reference.alpha),
        args.net.beta.unwrap_or(reference.beta),
        args.net.gamma.unwrap_or(reference.gamma),
        n,
    )?;

    let result = run_sweep(&trace, &net, args.algo, args.net.tree_startup(), &counts)?;
    warn_all(&result.warnings);
    for f in &result.failures {
        eprintln!("warning: N={} failed: {}", f.n_workers, f.message);
    }
    if result.rows.is_empty() {
        return Err(Failure::new(EXIT_ALL_ROWS_FAILED, "every worker count failed"));
    }
    with_output(args.out.as_deref(), |w| Ok(result.write_csv(w)?))?;
    if let Some(path) = args.json.as_deref() {
        with_output(Some(path), |w| Ok(result.write_json(w)?))?;
    }
    Ok(())
}
