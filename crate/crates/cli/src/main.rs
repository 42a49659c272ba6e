//! Command-line driver for the spectral experiments: builds complexes and
//! profiles from flags, runs the requested solver, and emits CSV or JSON
//! reports with a reproducibility header.
//!
//! Exit codes: 0 on success, 2 on configuration errors (bad flags,
//! unreadable or invalid input files), 3 on solver-stage failures.  Every
//! failure prints a machine-readable JSON record to stderr; if an output
//! file was already written it is named there as a partial result.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conformal_spectra::cover::{comparison_trials, mcgowan_bound, CoverData};
use conformal_spectra::eigen::{coexact_spectrum, full_spectrum};
use conformal_spectra::handle::handle_sweep;
use conformal_spectra::pinch::pinch_sweep;
use conformal_spectra::prescribe::prescribe;
use conformal_spectra::report::{
    comparison_csv, csv_document, format_float, handle_csv, json_document, pinch_csv,
    spectrum_csv, ReportHeader,
};
use conformal_spectra::{
    Attachment, CellComplex, ComplexSpec, ConformalProfile, Error, HandleSpec, PinchParams,
    PrescriptionTarget, SolverOptions,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "conformal-spectra", version, about = "Spectra of discrete Hodge Laplacians under conformal deformation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Worker threads for parallel sweeps; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed recorded in report headers and used by randomized subcommands.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Record the wall-clock time in the report header.
    #[arg(long, global = true)]
    stamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one spectrum slice of a complex under a constant factor.
    Spectrum(SpectrumArgs),
    /// Sweep the pinch depth and report eigenvalues, bound, and volume.
    PinchSweep(PinchSweepArgs),
    /// Solve a one-dimensional radial reduction directly.
    Radial(RadialArgs),
    /// Evaluate the cover lower bound from a JSON cover description.
    Mcgowan(McgowanArgs),
    /// Randomized quasi-isometry containment check.
    DodziukCheck(DodziukArgs),
    /// Glue two complexes by a shrinking handle and compare spectra.
    HandleSweep(HandleSweepArgs),
    /// Run the eigenvalue and volume prescription driver.
    Prescribe(PrescribeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::PinchSweep(_) => "pinch-sweep",
            Command::Radial(_) => "radial",
            Command::Mcgowan(_) => "mcgowan",
            Command::DodziukCheck(_) => "dodziuk-check",
            Command::HandleSweep(_) => "handle-sweep",
            Command::Prescribe(_) => "prescribe",
        }
    }
}

#[derive(Args)]
struct SpectrumArgs {
    /// Complex to solve on, e.g. `cycle:8` or `cycle:6*path:4`.
    #[arg(long)]
    complex: String,
    /// Form degree.
    #[arg(long)]
    p: usize,
    /// Number of eigenvalues to report.
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Report the full pencil instead of the coexact part.
    #[arg(long)]
    full: bool,
    /// Constant conformal factor.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Args)]
struct PinchSweepArgs {
    /// Ambient dimension.
    #[arg(long)]
    n: usize,
    /// Pinched form degree.
    #[arg(long)]
    p: usize,
    /// Comma-separated pinch depths in (0, 1].
    #[arg(long)]
    eta_list: String,
    /// Radial grid resolution.
    #[arg(long, default_value_t = 2000)]
    resolution: usize,
    /// Eigenvalues per row.
    #[arg(long, default_value_t = 3)]
    count: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum RadialKind {
    /// Pinched radial problem on the fibered ball region.
    Ball,
    /// Invariant-form operator on the product region.
    Cylinder,
}

#[derive(Args)]
struct RadialArgs {
    /// Ambient dimension.
    #[arg(long)]
    n: usize,
    /// Pinched form degree.
    #[arg(long)]
    p: usize,
    /// Pinch depth in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Which reduction to solve.
    #[arg(long, value_enum, default_value_t = RadialKind::Ball)]
    kind: RadialKind,
    /// Invariant-form degree for the cylinder kind; defaults to p.
    #[arg(long)]
    q: Option<usize>,
    /// Grid points.
    #[arg(long, default_value_t = 2000)]
    grid: usize,
    /// Number of eigenvalues to report.
    #[arg(long, default_value_t = 4)]
    count: usize,
}

#[derive(Args)]
struct McgowanArgs {
    /// JSON file with the cover's spectral data.
    #[arg(long)]
    config: PathBuf,
    /// Degree the bound controls.
    #[arg(long, default_value_t = 1)]
    degree: usize,
    /// Calibration constant in the numerator.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Calibration constant on the overlap terms.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
}

#[derive(Args)]
struct DodziukArgs {
    /// Metric ratio bound, at least 1.
    #[arg(long)]
    tau: f64,
    /// Ambient dimension of the comparison complex.
    #[arg(long)]
    n: usize,
    /// Number of randomized profile pairs.
    #[arg(long)]
    trials: usize,
    /// Complex override; its dimension must equal n.
    #[arg(long)]
    complex: Option<String>,
    /// Compared form degree.
    #[arg(long, default_value_t = 0)]
    p: usize,
}

#[derive(Args)]
struct HandleSweepArgs {
    /// Left piece, e.g. `cycle:16`.
    #[arg(long)]
    left: String,
    /// Right piece.
    #[arg(long)]
    right: String,
    /// Comma-separated strictly decreasing handle radii.
    #[arg(long)]
    eps_list: String,
    /// Handle length.
    #[arg(long, default_value_t = 0.1)]
    length: f64,
    /// Longitudinal stations on the handle.
    #[arg(long, default_value_t = 6)]
    resolution: usize,
    /// Comma-separated degrees to compare.
    #[arg(long, default_value = "0")]
    degrees: String,
    /// Leading eigenvalues per row.
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Attachment on the left piece, `vertex:I` or `circle:I,J,K,...`.
    #[arg(long, default_value = "vertex:0")]
    attach_left: String,
    /// Attachment on the right piece.
    #[arg(long, default_value = "vertex:0")]
    attach_right: String,
}

#[derive(Args)]
struct PrescribeArgs {
    /// JSON file with the prescription targets.
    #[arg(long)]
    targets: PathBuf,
    /// Relative tolerance on volume and every target.
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    /// Comma-separated strictly decreasing handle radii tried in order.
    #[arg(long, default_value = "0.3,0.2")]
    eps_schedule: String,
    /// Evaluation budget for the fixed-point driver.
    #[arg(long, default_value_t = 200)]
    max_evals: usize,
}

/// A failed run: exit code, message, and the path of any output that was
/// written before the failure.
struct Failure {
    exit: u8,
    error: String,
    partial_output: Option<String>,
}

fn config_err(e: impl Display) -> Failure {
    Failure { exit: EXIT_CONFIG, error: e.to_string(), partial_output: None }
}

fn solver_err(e: impl Display) -> Failure {
    Failure { exit: EXIT_SOLVER, error: e.to_string(), partial_output: None }
}

/// Maps a core error to an exit class: precondition and input problems are
/// configuration errors, everything arising mid-solve is a solver failure.
fn stage_err(e: Error) -> Failure {
    match e {
        Error::NonConvergence { .. } | Error::Infeasible(_) => solver_err(e),
        other => config_err(other),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("CONFORMAL_SPECTRA_LOG", "warn"),
    )
    .init();
    let cli = Cli::parse();
    let sub = cli.command.name();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return fail(sub, config_err(e));
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(sub, f),
    }
}

fn fail(subcommand: &str, f: Failure) -> ExitCode {
    let record = serde_json::json!({
        "error": f.error,
        "exit": f.exit,
        "subcommand": subcommand,
        "partial_output": f.partial_output,
    });
    eprintln!("{record}");
    ExitCode::from(f.exit)
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Spectrum(a) => run_spectrum(&cli.global, a),
        Command::PinchSweep(a) => run_pinch_sweep(&cli.global, a),
        Command::Radial(a) => run_radial(&cli.global, a),
        Command::Mcgowan(a) => run_mcgowan(&cli.global, a),
        Command::DodziukCheck(a) => run_dodziuk(&cli.global, a),
        Command::HandleSweep(a) => run_handle_sweep(&cli.global, a),
        Command::Prescribe(a) => run_prescribe(&cli.global, a),
    }
}

/// Report header carrying the seed and, when requested, the launch time.
fn header(global: &GlobalArgs, subcommand: &str) -> ReportHeader {
    let mut h = ReportHeader::new(global.seed).with("subcommand", subcommand);
    if global.stamp {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        h.stamp = Some(format!("unix:{now}"));
    }
    h
}

fn solver_options(global: &GlobalArgs, m: usize) -> SolverOptions {
    let mut opts = SolverOptions::default();
    opts.seed = global.seed;
    opts.n_eigenvalues = opts.n_eigenvalues.max(m);
    opts
}

/// Writes the report to the output file, or to stdout when none is set,
/// and returns the name recorded for partial-result flagging.
fn emit(global: &GlobalArgs, text: &str) -> Result<String, Failure> {
    match &global.out {
        Some(path) => {
            fs::write(path, text).map_err(config_err)?;
            Ok(path.display().to_string())
        }
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(config_err)?;
            Ok("-".into())
        }
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(str::trim)
        .map(|part| {
            part.parse::<T>()
                .map_err(|_| config_err(format!("bad {what} entry `{part}`")))
        })
        .collect()
}

/// Parses `vertex:I` or `circle:I,J,K,...` into an attachment site.
fn parse_attachment(s: &str) -> Result<Attachment, Failure> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| config_err(format!("attachment `{s}` must be `kind:args`")))?;
    match kind {
        "vertex" => Ok(Attachment::Vertex(
            rest.parse()
                .map_err(|_| config_err(format!("bad attachment vertex `{rest}`")))?,
        )),
        "circle" => Ok(Attachment::Circle(parse_list(rest, "attachment circle")?)),
        _ => Err(config_err(format!("unknown attachment kind `{kind}`"))),
    }
}

fn build_from_spec(text: &str) -> Result<CellComplex, Failure> {
    ComplexSpec::parse(text)
        .and_then(|spec| spec.build())
        .map_err(config_err)
}

fn run_spectrum(global: &GlobalArgs, args: &SpectrumArgs) -> Result<(), Failure> {
    let complex = build_from_spec(&args.complex)?;
    let profile =
        ConformalProfile::uniform(complex.n_cells(0), args.scale).map_err(config_err)?;
    let opts = solver_options(global, args.m);
    log::info!("solving degree {} on `{}` ({} cells)", args.p, args.complex, complex.total_cells());
    let mut slice = if args.full {
        full_spectrum(&complex, &profile, args.p, &opts).map_err(stage_err)?
    } else {
        coexact_spectrum(&complex, &profile, args.p, &opts).map_err(stage_err)?
    };
    slice.eigenvalues.truncate(args.m);
    let h = header(global, "spectrum")
        .with("complex", &args.complex)
        .with("p", args.p)
        .with("m", args.m)
        .with("scale", format_float(args.scale))
        .with("part", if args.full { "full" } else { "coexact" });
    emit(global, &spectrum_csv(&h, &slice))?;
    Ok(())
}

fn run_pinch_sweep(global: &GlobalArgs, args: &PinchSweepArgs) -> Result<(), Failure> {
    let etas: Vec<f64> = parse_list(&args.eta_list, "pinch depth")?;
    let mut params = PinchParams::new(args.n, args.p, 1.0).map_err(config_err)?;
    params.grid = args.resolution;
    params.validate().map_err(config_err)?;
    log::info!("pinch sweep n={} p={} over {} depths", args.n, args.p, etas.len());
    let rows = pinch_sweep(&params, &etas, args.count).map_err(stage_err)?;
    let h = header(global, "pinch-sweep")
        .with("n", args.n)
        .with("p", args.p)
        .with("resolution", args.resolution)
        .with("count", args.count);
    emit(global, &pinch_csv(&h, &rows))?;
    Ok(())
}

fn run_radial(global: &GlobalArgs, args: &RadialArgs) -> Result<(), Failure> {
    let mut params = PinchParams::new(args.n, args.p, args.eta).map_err(config_err)?;
    params.grid = args.grid;
    params.validate().map_err(config_err)?;
    let (kind, spectrum) = match args.kind {
        RadialKind::Ball => ("ball", params.smallest(args.count).map_err(stage_err)?),
        RadialKind::Cylinder => {
            let q = args.q.unwrap_or(args.p);
            ("cylinder", params.cylinder_spectrum(q, args.count).map_err(stage_err)?)
        }
    };
    let mut h = header(global, "radial")
        .with("n", args.n)
        .with("p", args.p)
        .with("eta", format_float(args.eta))
        .with("kind", kind)
        .with("grid", args.grid)
        .with("kernel_dim", spectrum.kernel_dim);
    if matches!(args.kind, RadialKind::Ball) {
        h = h
            .with("upper_bound", format_float(params.rayleigh_bound().map_err(stage_err)?))
            .with("volume", format_float(params.conformal_volume().map_err(stage_err)?));
    }
    let rows: Vec<Vec<String>> = spectrum
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, mu)| vec![i.to_string(), format_float(*mu)])
        .collect();
    emit(global, &csv_document(&h, &["index", "mu"], &rows))?;
    Ok(())
}

fn run_mcgowan(global: &GlobalArgs, args: &McgowanArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config).map_err(config_err)?;
    let data: CoverData = serde_json::from_str(&text).map_err(config_err)?;
    let bound = mcgowan_bound(&data, args.degree, args.a, args.b).map_err(config_err)?;
    let h = header(global, "mcgowan")
        .with("config", args.config.display())
        .with("degree", args.degree)
        .with("a", format_float(args.a))
        .with("b", format_float(args.b));
    let doc = json_document(&h, &bound).map_err(config_err)?;
    emit(global, &doc)?;
    Ok(())
}

/// Default comparison complex of the requested dimension: one short cycle
/// crossed with short segments.
fn default_comparison_spec(n: usize) -> String {
    let mut spec = String::from("cycle:4");
    for _ in 1..n {
        spec.push_str("*path:3");
    }
    spec
}

fn run_dodziuk(global: &GlobalArgs, args: &DodziukArgs) -> Result<(), Failure> {
    if args.n == 0 {
        return Err(config_err("comparison dimension must be at least 1"));
    }
    let spec_text = args
        .complex
        .clone()
        .unwrap_or_else(|| default_comparison_spec(args.n));
    let complex = build_from_spec(&spec_text)?;
    if complex.dimension() != args.n {
        return Err(config_err(format!(
            "complex `{spec_text}` has dimension {}, flag says {}",
            complex.dimension(),
            args.n
        )));
    }
    let opts = solver_options(global, 8);
    log::info!("{} comparison trials at tau {} on `{spec_text}`", args.trials, args.tau);
    let trials = comparison_trials(&complex, args.p, args.tau, args.trials, global.seed, &opts)
        .map_err(stage_err)?;
    let h = header(global, "dodziuk-check")
        .with("tau", format_float(args.tau))
        .with("n", args.n)
        .with("trials", args.trials)
        .with("complex", &spec_text)
        .with("p", args.p);
    let written = emit(global, &comparison_csv(&h, &trials))?;
    let violations = trials.iter().filter(|t| !t.contained).count();
    if violations > 0 {
        let mut f = solver_err(format!(
            "{violations} of {} trials left the comparison interval",
            trials.len()
        ));
        f.partial_output = Some(written);
        return Err(f);
    }
    Ok(())
}

fn run_handle_sweep(global: &GlobalArgs, args: &HandleSweepArgs) -> Result<(), Failure> {
    let left = build_from_spec(&args.left)?;
    let right = build_from_spec(&args.right)?;
    let eps: Vec<f64> = parse_list(&args.eps_list, "handle radius")?;
    let degrees: Vec<usize> = parse_list(&args.degrees, "degree")?;
    let first = *eps.first().ok_or_else(|| config_err("radius list is empty"))?;
    let spec = HandleSpec {
        epsilon: first,
        length: args.length,
        resolution: args.resolution,
        left: parse_attachment(&args.attach_left)?,
        right: parse_attachment(&args.attach_right)?,
    };
    spec.validate().map_err(config_err)?;
    let opts = solver_options(global, args.m);
    log::info!("handle sweep `{}` to `{}` over {} radii", args.left, args.right, eps.len());
    let rows =
        handle_sweep(&left, &right, &spec, &eps, &degrees, args.m, &opts).map_err(stage_err)?;
    let h = header(global, "handle-sweep")
        .with("left", &args.left)
        .with("right", &args.right)
        .with("length", format_float(args.length))
        .with("resolution", args.resolution)
        .with("m", args.m);
    emit(global, &handle_csv(&h, &rows))?;
    Ok(())
}

fn run_prescribe(global: &GlobalArgs, args: &PrescribeArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.targets).map_err(config_err)?;
    let target: PrescriptionTarget = serde_json::from_str(&text).map_err(config_err)?;
    target.validate().map_err(config_err)?;
    let schedule: Vec<f64> = parse_list(&args.eps_schedule, "handle radius")?;
    if !(args.tol.is_finite() && args.tol > 0.0) {
        return Err(config_err("tolerance must be positive"));
    }
    let opts = solver_options(global, target.per_degree + 1);
    log::info!("prescribing {} targets, budget {}", target.per_degree, args.max_evals);
    let outcome =
        prescribe(&target, args.tol, &schedule, args.max_evals, &opts).map_err(stage_err)?;
    let h = header(global, "prescribe")
        .with("targets", args.targets.display())
        .with("tol", format_float(args.tol))
        .with("max_evals", args.max_evals);
    let doc = json_document(&h, &outcome).map_err(solver_err)?;
    let written = emit(global, &doc)?;
    if !outcome.converged {
        let mut f = solver_err(format!(
            "driver stopped at residual {:.3e} after {} evaluations",
            outcome.residual, outcome.evaluations
        ));
        f.partial_output = Some(written);
        return Err(f);
    }
    if !outcome.guard_ok {
        let mut f = solver_err(format!(
            "spectral-gap guard {:.6} does not clear the largest target",
            outcome.guard_value
        ));
        f.partial_output = Some(written);
        return Err(f);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attachments_parse() {
        assert!(matches!(parse_attachment("vertex:3"), Ok(Attachment::Vertex(3))));
        match parse_attachment("circle:0,4,8,12") {
            Ok(Attachment::Circle(v)) => assert_eq!(v, vec![0, 4, 8, 12]),
            other => panic!("unexpected {other:?}", other = other.map(|_| ()).map_err(|f| f.error)),
        }
        assert!(parse_attachment("vertex").is_err());
        assert!(parse_attachment("edge:1").is_err());
        assert!(parse_attachment("circle:a,b").is_err());
    }

    #[test]
    fn comparison_spec_has_requested_dimension() {
        for n in 1..=4 {
            let complex = ComplexSpec::parse(&default_comparison_spec(n))
                .unwrap()
                .build()
                .unwrap();
            assert_eq!(complex.dimension(), n);
        }
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(stage_err(Error::InvalidSpec("x".into())).exit, EXIT_CONFIG);
        assert_eq!(stage_err(Error::Infeasible("x".into())).exit, EXIT_SOLVER);
        let nc = Error::NonConvergence { context: "x".into(), residual: 1.0 };
        assert_eq!(stage_err(nc).exit, EXIT_SOLVER);
    }
}
