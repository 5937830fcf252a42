//! `mkrr`: run regression experiments and bound-verification suites.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use manifold_krr::harness::output::{write_bounds_csv, write_trials_csv};
use manifold_krr::harness::{
    any_asserted_failure, report_bounds, BoundRow, BoundSuite, ExperimentConfig, RunOptions, SweepResult,
};
use manifold_krr::regression::assumption_constants;
use manifold_krr::{Error, KernelFamily, KernelSpec, ManifoldKind, SpectralManifold};

const EXIT_USAGE: u8 = 1;
const EXIT_VIOLATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "mkrr", version, about = "Kernel ridge regression on compact manifolds")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run all trials of a single-point configuration.
    Regress(RunArgs),
    /// Run trials over the n (and Ω) grid and fit log-log slopes.
    Sweep(RunArgs),
    /// Run a bound-verification suite.
    Bounds(BoundsArgs),
    /// Print the constants K_p, R_p, t_{p+1}, γ, γ' for a kernel and p.
    Constants(ConstantsArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// JSON experiment configuration.
    config: PathBuf,
    /// CSV output path; overrides `out` in the config. `-` writes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary path (default: the CSV path with a `.json` extension).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the kernel truncation tolerance.
    #[arg(long)]
    tau: Option<f64>,
    /// Record per-trial wall time (makes the CSV non-reproducible).
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args, Debug)]
struct BoundsArgs {
    /// weyl, heat-diag, heat-tail, comparison, gram, tail-op or all.
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Bandlimited,
    Heat,
    Sobolev,
}

#[derive(clap::Args, Debug)]
struct ConstantsArgs {
    /// circle, torus<m>, sphere2 or sphere3.
    #[arg(long)]
    manifold: String,
    #[arg(long, value_enum)]
    kernel: Family,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    /// Number of leading eigenfunctions; must not split an eigen-level.
    #[arg(long)]
    p: usize,
    #[arg(long)]
    tau: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let outcome = match cli.command {
        Command::Regress(args) => run(args, true),
        Command::Sweep(args) => run(args, false),
        Command::Bounds(args) => bounds(args),
        Command::Constants(args) => constants(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical { .. } | Error::TruncationInfeasible(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn run(args: RunArgs, single: bool) -> Result<u8, Error> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(tau) = args.tau {
        config.kernel.set_tau(tau);
    }
    config.validate()?;
    if single {
        let manifold = config.manifold()?;
        if config.n_values().len() != 1 || config.kernel.omega_grid(&manifold).len() > 1 {
            return Err(Error::Config("regress takes a single n and Ω; use sweep for grids".into()));
        }
    }
    let result = manifold_krr::harness::run_sweep(&config, RunOptions { wall_clock: args.wall_clock })?;

    let out = args.out.or_else(|| config.out.as_ref().map(PathBuf::from));
    match &out {
        Some(path) if path.as_os_str() != "-" => write_trials_csv(&result.records, create(path)?)?,
        _ => write_trials_csv(&result.records, io::stdout().lock())?,
    }
    let summary = args.summary.or_else(|| out.filter(|p| p.as_os_str() != "-").map(|p| p.with_extension("json")));
    if let Some(path) = summary {
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &summary_json(&result))?;
        writeln!(w)?;
        w.flush()?;
    }
    report_sweep(&result);

    Ok(if result.failures() > 0 {
        EXIT_NUMERICAL
    } else if result.coverage_violated() {
        EXIT_VIOLATION
    } else {
        0
    })
}

/// The sweep without the per-trial records, which live in the CSV.
fn summary_json(result: &SweepResult) -> serde_json::Value {
    let mut value = serde_json::to_value(result).expect("sweep result serializes");
    if let Some(obj) = value.as_object_mut() {
        obj.remove("records");
        obj.insert("failures".into(), result.failures().into());
        obj.insert("coverage_violated".into(), result.coverage_violated().into());
    }
    value
}

fn report_sweep(result: &SweepResult) {
    for p in &result.points {
        let omega = p.omega.map(|o| format!(" omega={o}")).unwrap_or_default();
        let coverage = match (p.coverage, p.coverage_floor) {
            (Some(c), Some(f)) => format!(" coverage={c:.3} (floor {f:.3})"),
            _ => " coverage=ungated".into(),
        };
        eprintln!(
            "n={}{omega} median={:.4e} q05={:.4e} q95={:.4e} bound={:.4e}{coverage} failures={}",
            p.n, p.median_error, p.q05_error, p.q95_error, p.bound_total, p.failures
        );
    }
    for (i, s) in result.slopes_vs_n.iter().enumerate() {
        if s.is_finite() {
            eprintln!("slope[{i}] = {s:.4}");
        }
    }
}

fn bounds(args: BoundsArgs) -> Result<u8, Error> {
    let suites: Vec<BoundSuite> =
        if args.suite == "all" { BoundSuite::ALL.to_vec() } else { vec![args.suite.parse()?] };
    let mut rows: Vec<BoundRow> = Vec::new();
    for suite in suites {
        rows.extend(report_bounds(suite, args.seed)?);
    }
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    match args.format {
        Format::Csv => write_bounds_csv(&rows, sink)?,
        Format::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &rows)?;
            writeln!(sink)?;
            sink.flush()?;
        }
    }
    let asserted = rows.iter().filter(|r| r.report.asserted_failure()).count();
    let skipped = rows.iter().filter(|r| !r.report.applicable()).count();
    eprintln!("{} rows, {asserted} asserted violations, {skipped} not applicable", rows.len());
    Ok(if any_asserted_failure(&rows) { EXIT_VIOLATION } else { 0 })
}

fn constants(args: ConstantsArgs) -> Result<u8, Error> {
    let kind: ManifoldKind = args.manifold.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    let manifold = SpectralManifold::new(kind)?;
    let missing = |name: &str| Error::Config(format!("--{name} is required for this kernel"));
    let family = match args.kernel {
        Family::Bandlimited => KernelFamily::Bandlimited { omega: args.omega.ok_or_else(|| missing("omega"))? },
        Family::Heat => KernelFamily::Heat { t: args.t.ok_or_else(|| missing("t"))? },
        Family::Sobolev => KernelFamily::Sobolev { s: args.s.ok_or_else(|| missing("s"))? },
    };
    let spec = match args.tau {
        Some(tau) => KernelSpec::with_tolerance(manifold, family, tau)?,
        None => KernelSpec::new(manifold, family)?,
    };
    let inputs = assumption_constants(&manifold, &spec, args.p)?;
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &inputs)?;
    writeln!(out)?;
    Ok(0)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}
