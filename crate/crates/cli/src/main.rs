//! `exot`: batch front end for exchangeable transport values, maps,
//! finite-dimensional experiments and log-concavity audits.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 no
//! exchangeable Monge map. Failures print a JSON object on stderr.

mod svg;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use exot::definetti::{parse_mixture, ExchangeableMixture};
use exot::dist1d::{parse_dist, QuantileGrid, DEFAULT_GRID};
use exot::findim_approx::{
    convergence_experiment, ConvergenceTable, Estimator, ExchangeableGaussian, ExperimentConfig,
};
use exot::logconcave_audit::{audit, counterexample_projection, AuditReport, UniformityVerdict};
use exot::outer_ot::{
    apply_exchangeable_map, exchangeable_value, monge_solvability, Backend, SolvabilityVerdict,
};
use exot::wasserstein1d::caffarelli_check;
use exot::{Dist1D, Error};
use serde_json::json;
use thiserror::Error as ThisError;

#[derive(Debug, Parser)]
#[command(
    name = "exot",
    version,
    about = "Exchangeable optimal transport between de Finetti mixtures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exchangeable transport value between two mixtures.
    Value(ValueArgs),
    /// Decide whether an exchangeable Monge map exists and optionally apply it.
    Map(MapArgs),
    /// Replicated finite-dimensional estimates against the exchangeable value.
    Approx(ApproxArgs),
    /// Log-concavity moduli of the projections of an exchangeable Gaussian.
    Audit(AuditArgs),
    /// Lipschitz estimate of a 1D optimal map against its contraction bound.
    Caffarelli(CaffarelliArgs),
}

#[derive(Debug, Args)]
struct Pair {
    /// Source mixture JSON.
    mu: PathBuf,
    /// Target mixture JSON.
    nu: PathBuf,
    /// Number of quantile cells.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendKind {
    Exact,
    Entropic,
}

#[derive(Debug, Args)]
struct ValueArgs {
    #[command(flatten)]
    pair: Pair,
    #[arg(long, value_enum, default_value = "exact")]
    backend: BackendKind,
    /// Entropic regularization strength.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Marginal residual at which Sinkhorn stops.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Directory receiving coupling.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MapArgs {
    #[command(flatten)]
    pair: Pair,
    /// Read prefix rows as CSV from stdin and print their images.
    #[arg(long)]
    transform: bool,
    /// Directory receiving verdict.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorKind {
    PlugIn,
    Debiased,
}

#[derive(Debug, Args)]
struct ApproxArgs {
    #[command(flatten)]
    pair: Pair,
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    /// Rows per sample cloud.
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = exot::findim_approx::DEFAULT_REPLICATIONS)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "debiased")]
    estimator: EstimatorKind,
    /// Directory receiving convergence.csv, convergence.svg and convergence.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(
        long,
        required_unless_present = "counterexample",
        conflicts_with = "counterexample"
    )]
    sigma2: Option<f64>,
    #[arg(
        long,
        required_unless_present = "counterexample",
        conflicts_with = "counterexample"
    )]
    rho: Option<f64>,
    /// Projection of the standard Gaussian potential mixed over a common shift.
    #[arg(long)]
    counterexample: bool,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    n_list: Vec<usize>,
    /// Directory receiving modulus.csv, modulus.svg and audit.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CaffarelliArgs {
    /// Source distribution JSON.
    source: PathBuf,
    /// Target distribution JSON.
    target: PathBuf,
    /// Upper bound on the source potential's second derivative.
    #[arg(long = "C")]
    c_upper: f64,
    /// Lower bound on the target potential's second derivative.
    #[arg(long = "c")]
    c_lower: f64,
    #[arg(long, default_value_t = 2000)]
    probes: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, ThisError)]
enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("no exchangeable Monge map")]
    Infeasible(serde_json::Value),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if !e.is_input_error() => 3,
            CliError::Infeasible(_) => 4,
            _ => 2,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Lib(Error::Schema { path, message }) => {
                json!({"error": "schema", "path": path, "message": message})
            }
            CliError::Lib(e) if !e.is_input_error() => {
                json!({"error": "solver", "message": e.to_string()})
            }
            CliError::Lib(e) => json!({"error": "input", "message": e.to_string()}),
            CliError::Io { path, message } => {
                json!({"error": "io", "path": path, "message": message})
            }
            CliError::Usage(m) => json!({"error": "usage", "message": m}),
            CliError::Infeasible(witness) => {
                json!({"error": "monge_infeasible", "message": self.to_string(), "witness": witness})
            }
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn load_mixture(path: &Path) -> CliResult<ExchangeableMixture> {
    Ok(parse_mixture(&read(path)?)?)
}

fn load_dist(path: &Path) -> CliResult<Dist1D> {
    Ok(parse_dist(&read(path)?)?)
}

/// Ensure `dir` exists before any computation starts.
fn prepare_out(dir: &Option<PathBuf>) -> CliResult<()> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    Ok(())
}

/// Write every file through a temporary in the same directory, then rename.
fn write_outputs(dir: &Option<PathBuf>, files: &[(&str, String)]) -> CliResult<()> {
    let Some(dir) = dir else { return Ok(()) };
    for (name, contents) in files {
        let target = dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(dir, e))?;
        tmp.write_all(contents.as_bytes())
            .map_err(|e| io_error(&target, e))?;
        tmp.persist(&target)
            .map_err(|e| io_error(&target, e.error))?;
    }
    Ok(())
}

fn grid(count: usize) -> CliResult<QuantileGrid> {
    Ok(QuantileGrid::new(count)?)
}

/// Shortest round-trip form of `v` rounded to 12 significant digits.
fn sig12(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    format!("{:?}", rounded + 0.0)
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn cmd_value(args: ValueArgs) -> CliResult<()> {
    let mu = load_mixture(&args.pair.mu)?;
    let nu = load_mixture(&args.pair.nu)?;
    let grid = grid(args.pair.grid)?;
    let backend = match args.backend {
        BackendKind::Exact => Backend::Exact,
        BackendKind::Entropic => Backend::Entropic {
            epsilon: args.epsilon,
            max_iter: args.max_iter,
            tol: args.tol,
        },
    };
    prepare_out(&args.out)?;
    let v = exchangeable_value(&mu, &nu, &grid, backend)?;
    println!("value: {}", sig12(v.value));
    write_outputs(&args.out, &[("coupling.csv", v.coupling.to_csv(&v.cost))])
}

fn parse_row(record: &csv::StringRecord, line: usize) -> CliResult<Vec<f64>> {
    record
        .iter()
        .map(|field| {
            field.parse::<f64>().map_err(|_| {
                CliError::Usage(format!("stdin line {line}: {field:?} is not a number"))
            })
        })
        .collect()
}

fn cmd_map(args: MapArgs) -> CliResult<()> {
    let mu = load_mixture(&args.pair.mu)?;
    let nu = load_mixture(&args.pair.nu)?;
    let grid = grid(args.pair.grid)?;
    prepare_out(&args.out)?;
    let v = exchangeable_value(&mu, &nu, &grid, Backend::Exact)?;
    let verdict = monge_solvability(&mu, &nu, &v.coupling);
    let report = verdict.to_json();
    write_outputs(&args.out, &[("verdict.json", pretty(&report))])?;
    let map = match verdict {
        SolvabilityVerdict::Solvable(map) => map,
        SolvabilityVerdict::NotSolvable(_) => {
            print!("{}", pretty(&report));
            return Err(CliError::Infeasible(report["reason"].clone()));
        }
    };
    if !args.transform {
        print!("{}", pretty(&report));
        return Ok(());
    }
    let mut input = String::new();
    io::stdin()
        .read_to_string(&mut input)
        .map_err(|e| io_error(Path::new("<stdin>"), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::Usage(format!("stdin line {}: {e}", line + 1)))?;
        rows.push(parse_row(&record, line + 1)?);
    }
    let mut out = String::new();
    for row in &rows {
        let mapped = apply_exchangeable_map(&map, &mu, row)?;
        let fields: Vec<String> = mapped.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

fn convergence_chart(table: &ConvergenceTable) -> String {
    svg::Chart {
        title: "Finite-dimensional estimates".into(),
        x_label: "n".into(),
        y_label: "estimate".into(),
        series: vec![svg::Series {
            label: "mean with 95% CI".into(),
            points: table.rows.iter().map(|r| (r.n as f64, r.mean)).collect(),
            errors: Some(table.rows.iter().map(|r| r.half_width).collect()),
        }],
        reference: Some((table.reference, "exchangeable value".into())),
    }
    .render()
}

fn cmd_approx(args: ApproxArgs) -> CliResult<()> {
    let mu = load_mixture(&args.pair.mu)?;
    let nu = load_mixture(&args.pair.nu)?;
    let cfg = ExperimentConfig {
        n_list: args.n_list,
        sample_size: args.samples,
        replications: args.reps,
        seed: args.seed,
        estimator: match args.estimator {
            EstimatorKind::PlugIn => Estimator::PlugIn,
            EstimatorKind::Debiased => Estimator::Debiased,
        },
        grid: grid(args.pair.grid)?,
    };
    prepare_out(&args.out)?;
    let table = convergence_experiment(&mu, &nu, &cfg)?;
    println!("reference: {}", sig12(table.reference));
    for r in &table.rows {
        println!(
            "n={} mean={} half_width={}",
            r.n,
            sig12(r.mean),
            sig12(r.half_width)
        );
    }
    println!("trend: {}", sig12(table.trend));
    write_outputs(
        &args.out,
        &[
            ("convergence.csv", table.to_csv()),
            ("convergence.svg", convergence_chart(&table)),
            ("convergence.json", pretty(&table)),
        ],
    )
}

fn modulus_chart(report: &AuditReport) -> String {
    svg::Chart {
        title: "Log-concavity modulus of projections".into(),
        x_label: "n".into(),
        y_label: "kappa_n".into(),
        series: vec![svg::Series {
            label: "kappa_n".into(),
            points: report
                .curve
                .rows
                .iter()
                .map(|&(n, k)| (n as f64, k))
                .collect(),
            errors: None,
        }],
        reference: Some((0.0, "0".into())),
    }
    .render()
}

fn cmd_audit(args: AuditArgs) -> CliResult<()> {
    let family = if args.counterexample {
        counterexample_projection(&Dist1D::gaussian(0.0, 1.0)?, 1)?
    } else {
        let (sigma2, rho) = (args.sigma2.unwrap_or(1.0), args.rho.unwrap_or(0.0));
        ExchangeableGaussian::new(sigma2, rho, 0.0)?
    };
    prepare_out(&args.out)?;
    let report = audit(&family, &args.n_list)?;
    let kappas: Vec<String> = report
        .curve
        .rows
        .iter()
        .map(|r| format!("{:?}", r.1))
        .collect();
    println!("kappa: {}", kappas.join(","));
    println!("infimum: {:?}", report.infimum);
    if let Some(rate) = report.divergence_rate {
        println!(
            "n*kappa_n limit: {} (expected {})",
            sig12(rate.estimate),
            sig12(rate.expected)
        );
    }
    let uniform = report.verdict == UniformityVerdict::Uniform;
    println!("uniform: {}", if uniform { "yes" } else { "no" });
    write_outputs(
        &args.out,
        &[
            ("modulus.csv", report.curve.to_csv()),
            ("modulus.svg", modulus_chart(&report)),
            ("audit.json", pretty(&report)),
        ],
    )
}

fn cmd_caffarelli(args: CaffarelliArgs) -> CliResult<()> {
    let source = load_dist(&args.source)?;
    let target = load_dist(&args.target)?;
    let report = caffarelli_check(
        &source,
        &target,
        args.c_upper,
        args.c_lower,
        args.probes,
        args.seed,
    )?;
    print!("{}", pretty(&report));
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("EXOT_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "EXOT_THREADS must be a positive integer, got {value:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Value(a) => cmd_value(a),
        Command::Map(a) => cmd_map(a),
        Command::Approx(a) => cmd_approx(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Caffarelli(a) => cmd_caffarelli(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
