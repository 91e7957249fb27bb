use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use expanal_core::catalog;
use expanal_core::expsum::{relative_errors, synthesize, CoefficientAccess, Coverage, ErrorReport, ExponentialSum};
use expanal_core::formats::{GridFile, SignalFile};
use expanal_core::rational::{PoleMethod, RationalConfig};
use expanal_core::recursive::{recover_recursive, RecursiveConfig};
use expanal_core::sparse::{recover_sparse, LineKind, SparseConfig, SparseGridPlan};
use expanal_core::{Complex64, Error};

#[derive(Parser)]
#[command(name = "expanal", version, about = "Recover multivariate exponential sums from Fourier coefficients")]
struct Cli {
    /// Seed for every randomized choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize exact Fourier coefficients of a signal.
    Generate(GenerateArgs),
    /// Recover an exponential sum from a coefficient grid.
    Recover(RecoverArgs),
    /// Compare a recovered sum against the true one.
    Compare(CompareArgs),
    /// Write the sparse-grid index set as CSV.
    PlotGrid(PlotGridArgs),
}

#[derive(clap::Args)]
struct GenerateArgs {
    /// Signal file: {"d", "P", "gamma", "lambda"}.
    #[arg(long, conflicts_with_all = ["builtin", "random"])]
    signal: Option<PathBuf>,
    /// Built-in benchmark signal (f1 to f7).
    #[arg(long, conflicts_with = "random")]
    builtin: Option<String>,
    /// Random signal of the given dimension and order, written as "d,M".
    #[arg(long, value_parser = parse_pair)]
    random: Option<(usize, usize)>,
    /// Where to write the random signal.
    #[arg(long, requires = "random")]
    signal_out: Option<PathBuf>,
    /// Period; defaults to the signal's own.
    #[arg(long)]
    period: Option<f64>,
    /// Half-width N of the index box.
    #[arg(long)]
    n: Option<usize>,
    /// "full" or "sparse:<tau>".
    #[arg(long, default_value = "full")]
    coverage: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq, Debug)]
#[serde(rename_all = "lowercase")]
enum Method {
    Sparse,
    Recursive,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoleArg {
    Eigen,
    Loewner,
}

#[derive(clap::Args)]
struct RecoverArgs {
    /// Coefficient grid file.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Relative AAA tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Diagonal shift; must agree with the grid's coverage.
    #[arg(long)]
    tau: Option<usize>,
    #[arg(long, value_enum, default_value = "eigen")]
    poles: PoleArg,
    /// True signal; adds the error report to the result.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Leave out the wall time so repeated runs produce identical files.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct CompareArgs {
    /// True signal file.
    #[arg(long)]
    truth: PathBuf,
    /// Result file from `recover`, or a signal file.
    #[arg(long)]
    result: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PlotGridArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    tau: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected \"d,M\"")?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e.root_cause() {
        Error::DegenerateFrequency { .. } | Error::DegenerateSample { .. } => 2,
        Error::BadParameters(_) | Error::InvalidSum(_) | Error::ShapeMismatch(_) | Error::NonFinite { .. } => 1,
        _ => 3,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: exit_code_for(&e), message: e.to_string() }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |e: std::io::Error| Failure::input(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::input(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Random sum whose poles stay away from the integers and from each other.
fn random_signal(dim: usize, order: usize, period: f64, n: usize, seed: u64) -> ExponentialSum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (n as f64 / 2.0).max(1.0);
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    while rows.len() < order {
        let row: Vec<Complex64> = (0..dim)
            .map(|_| loop {
                let re: f64 = rng.random_range(-half..half);
                if (re - re.round()).abs() >= 0.1 {
                    let b = Complex64::new(re, rng.random_range(-1.0..1.0));
                    break expanal_core::expsum::pole_to_frequency(b, period);
                }
            })
            .collect();
        if rows.iter().all(|r| r.iter().zip(&row).all(|(a, b)| (a - b).norm() > 0.1)) {
            rows.push(row);
        }
    }
    let gamma = (0..order)
        .map(|_| Complex64::from_polar(rng.random_range(0.5..2.0), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    ExponentialSum::new(rows, gamma).expect("random rows are distinct and coefficients nonzero")
}

fn cmd_generate(args: &GenerateArgs, seed: u64) -> Result<(), Failure> {
    let coverage: Coverage = args.coverage.parse().map_err(|e: Error| Failure::input(e.to_string()))?;
    let (sum, file_period, default_n) = if let Some(path) = &args.signal {
        let file: SignalFile = read_json(path)?;
        (file.to_sum().map_err(|e| Failure::input(e.to_string()))?, file.period, None)
    } else if let Some(name) = &args.builtin {
        let b = catalog::by_name(name).ok_or_else(|| Failure::input(format!("unknown builtin signal '{name}'")))?;
        (b.sum, Some(b.period), Some(b.n))
    } else if let Some((dim, order)) = args.random {
        if dim == 0 || order == 0 {
            return Err(Failure::input("random signal needs d >= 1 and M >= 1"));
        }
        let period = args.period.unwrap_or(1.0);
        let n = args.n.unwrap_or(2 * order + 4);
        let sum = random_signal(dim, order, period, n, seed);
        if let Some(out) = &args.signal_out {
            write_json(out, &SignalFile::from_sum(&sum, Some(period)))?;
        }
        (sum, Some(period), Some(n))
    } else {
        return Err(Failure::input("one of --signal, --builtin or --random is required"));
    };
    let period = args.period.or(file_period).ok_or_else(|| Failure::input("no period given"))?;
    let n = args.n.or(default_n).ok_or_else(|| Failure::input("--n is required"))?;
    let source = synthesize(&sum, period, n, coverage)?;
    write_json(&args.out, &GridFile::from_source(&source))?;
    eprintln!("wrote {} coefficients ({} samples counted per line) to {}", source.len(), source.sample_count(), args.out.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ErrorSummary {
    e_lambda: f64,
    e_gamma: f64,
    e_f: f64,
    matched_permutation: Vec<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order_mismatch: Option<(usize, usize)>,
}

impl From<&ErrorReport> for ErrorSummary {
    fn from(r: &ErrorReport) -> Self {
        Self {
            e_lambda: r.e_lambda,
            e_gamma: r.e_gamma,
            e_f: r.e_f,
            matched_permutation: r.matched_permutation.clone(),
            order_mismatch: r.order_mismatch,
        }
    }
}

fn cmd_recover(args: &RecoverArgs) -> Result<(), Failure> {
    let grid: GridFile = read_json(&args.grid)?;
    let source = grid.to_source().map_err(|e| Failure::input(e.to_string()))?;
    let truth = match &args.truth {
        Some(path) => {
            let file: SignalFile = read_json(path)?;
            Some(file.to_sum().map_err(|e| Failure::input(e.to_string()))?)
        }
        None => None,
    };
    let rational = RationalConfig {
        tol: args.tol,
        pole_method: match args.poles {
            PoleArg::Eigen => PoleMethod::Eigen,
            PoleArg::Loewner => PoleMethod::Loewner,
        },
        ..RationalConfig::default()
    };

    let mismatch = |msg: String| Failure { code: 4, message: msg };
    let started = Instant::now();
    let outcome: Result<(ExponentialSum, Value), Error> = match (args.method, source.coverage()) {
        (Method::Sparse, Coverage::SparseLines { tau }) => {
            if let Some(t) = args.tau.filter(|&t| t != tau) {
                return Err(mismatch(format!("--tau {t} does not match the grid's coverage sparse:{tau}")));
            }
            let config = SparseConfig { rational, ..SparseConfig::new(tau) };
            recover_sparse(&source, &config).map(|rec| {
                let traces: Vec<_> = rec.axes.iter().map(|a| &a.trace).collect();
                (rec.sum, json!({ "aaa": traces, "pairing": rec.certificate }))
            })
        }
        (Method::Recursive, Coverage::Full) => {
            let config = RecursiveConfig { rational, ..RecursiveConfig::default() };
            recover_recursive(&source, &config).map(|rec| {
                let traces: Vec<_> = rec.traces.iter().map(|(path, t)| json!({ "path": path, "trace": t })).collect();
                (rec.sum, json!({ "aaa": traces, "tree": rec.tree, "residual": rec.residual }))
            })
        }
        (method, coverage) => {
            return Err(mismatch(format!(
                "method {} cannot run on coverage {coverage}",
                match method {
                    Method::Sparse => "sparse",
                    Method::Recursive => "recursive",
                }
            )))
        }
    };
    let wall_time = started.elapsed().as_secs_f64();

    let mut result = serde_json::Map::new();
    result.insert("method".into(), json!(args.method));
    let failure = match outcome {
        Ok((sum, diagnostics)) => {
            result.insert("status".into(), json!("ok"));
            result.insert("order".into(), json!(sum.order()));
            result.insert("recovered".into(), json!(SignalFile::from_sum(&sum, Some(source.period()))));
            if let Some(truth) = &truth {
                let report = relative_errors(truth, &sum).map_err(|e| Failure::input(e.to_string()))?;
                result.insert("errors".into(), json!(ErrorSummary::from(&report)));
            }
            result.insert("diagnostics".into(), diagnostics);
            None
        }
        Err(e) => {
            result.insert("status".into(), json!("failed"));
            result.insert("error".into(), json!({ "name": e.name(), "message": e.to_string() }));
            Some(Failure::from(e))
        }
    };
    if !args.no_timing {
        result.insert("wall_time".into(), json!(wall_time));
    }
    write_json(&args.out, &Value::Object(result))?;
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn cmd_compare(args: &CompareArgs) -> Result<(), Failure> {
    let truth: SignalFile = read_json(&args.truth)?;
    let truth = truth.to_sum().map_err(|e| Failure::input(e.to_string()))?;
    let value: Value = read_json(&args.result)?;
    let recovered = value.get("recovered").cloned().unwrap_or(value);
    let recovered: SignalFile =
        serde_json::from_value(recovered).map_err(|e| Failure::input(format!("{}: {e}", args.result.display())))?;
    let recovered = recovered.to_sum().map_err(|e| Failure::input(e.to_string()))?;
    let report = relative_errors(&truth, &recovered).map_err(|e| Failure::input(e.to_string()))?;
    println!("{:<12} {:<12} {:<12}", "e(Lambda)", "e(gamma)", "e(f)");
    println!("{:<12.4e} {:<12.4e} {:<12.4e}", report.e_lambda, report.e_gamma, report.e_f);
    if let Some((t, r)) = report.order_mismatch {
        println!("order mismatch: truth {t}, recovered {r}");
    }
    if let Some(path) = &args.json {
        write_json(path, &ErrorSummary::from(&report))?;
    }
    Ok(())
}

fn cmd_plot_grid(args: &PlotGridArgs) -> Result<(), Failure> {
    let plan = SparseGridPlan::new(args.d, args.n, args.tau).map_err(|e| Failure::input(e.to_string()))?;
    let mut csv = String::from("category,line");
    for axis in 1..=args.d {
        csv.push_str(&format!(",k{axis}"));
    }
    csv.push('\n');
    for (number, line) in plan.lines().iter().enumerate() {
        let category = match line.kind {
            LineKind::Axis => "axis",
            LineKind::Diagonal => "diagonal",
        };
        for idx in &line.indices {
            csv.push_str(&format!("{category},{}", number + 1));
            for k in idx {
                csv.push_str(&format!(",{k}"));
            }
            csv.push('\n');
        }
    }
    match &args.out {
        Some(path) => write_atomic(path, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("EXPANAL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if a pool already exists, which cannot happen this early.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    configure_threads();
    let outcome = match &cli.command {
        Command::Generate(args) => cmd_generate(args, cli.seed),
        Command::Recover(args) => cmd_recover(args),
        Command::Compare(args) => cmd_compare(args),
        Command::PlotGrid(args) => cmd_plot_grid(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
