//! The `homwalk` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::classify::{classify, VerdictKind, DEFAULT_Z};
use crate::decomp::{cartan_projection, iwasawa_decompose, FlagPoint};
use crate::error::{Error, Result};
use crate::group::{matrix_from_rows, parse_measure, FiniteMeasure, GroupElement};
use crate::lyapunov::{
    clt_diagnostics, estimate_covariance, estimate_lyapunov_from, zariski_warnings, IncrementMode,
};
use crate::montecarlo::{derive_seed, RandomStream};
use crate::subgroup::{parse_subgroup, SubgroupSpec};
use crate::transfer::{leading_eigen, spectral_radius};
use crate::walk::{
    calibrate_radius, empirical_green, increment_spread, large_deviation_decay, return_stats, simulate_walk,
    WalkStart, DEFAULT_QUANTILE,
};

/// Exit code for an Indeterminate verdict.
pub const EXIT_INDETERMINATE: i32 = 2;
pub const EXIT_ERROR: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "homwalk", version, about = "Random walks on homogeneous spaces of SL(d,R)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Iwasawa and Cartan decomposition of one matrix.
    Decompose(DecomposeArgs),
    /// Recurrence/transience verdict for G/H.
    Classify(ClassifyArgs),
    /// Lyapunov vector (and covariance on E when a spec is given).
    Lyapunov(LyapunovArgs),
    /// One trajectory of the projected cocycle walk.
    Walk(WalkArgs),
    /// Empirical Green function.
    Green(GreenArgs),
    /// Normality diagnostics for the normalized cocycle.
    Clt(CltArgs),
    /// Leading eigenvalue and spectral radii of transfer operators (d = 2).
    Spectrum(SpectrumArgs),
    /// Large-deviation decay of the projected cocycle.
    Ldp(LdpArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Increments {
    Genuine,
    Antithetic,
}

impl From<Increments> for IncrementMode {
    fn from(i: Increments) -> Self {
        match i {
            Increments::Genuine => IncrementMode::Genuine,
            Increments::Antithetic => IncrementMode::Antithetic,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, env = "HOMWALK_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads for trajectory parallelism (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    /// JSON file holding the matrix as a list of rows.
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 200)]
    trajectories: usize,
    #[arg(long, default_value_t = DEFAULT_Z)]
    z: f64,
    #[arg(long, value_enum, default_value_t = Increments::Genuine)]
    increments: Increments,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct LyapunovArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 200)]
    trajectories: usize,
    #[arg(long, value_enum, default_value_t = Increments::Genuine)]
    increments: Increments,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct WalkArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    /// Trajectory index within the seed's stream family.
    #[arg(long, default_value_t = 0)]
    trajectory: u64,
    /// Ball radius for return statistics.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, value_enum, default_value_t = Increments::Genuine)]
    increments: Increments,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct GreenArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 200)]
    trajectories: usize,
    /// Ball radius; calibrated from the walk when absent.
    #[arg(long)]
    radius: Option<f64>,
    /// Horizon used for radius calibration (default: --steps).
    #[arg(long)]
    calibration_steps: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_QUANTILE)]
    quantile: f64,
    #[arg(long, value_enum, default_value_t = Increments::Genuine)]
    increments: Increments,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct CltArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 10_000)]
    trajectories: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[arg(long)]
    measure: PathBuf,
    /// Defaults to a' = {0}.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Covector values on E (codim 1), e.g. `0.1`, `0.5i`, `0.1+0.2i`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    theta: Vec<String>,
    #[arg(long, default_value_t = 1024)]
    grid: usize,
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct LdpArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Deviation threshold M (default: half the increment spread).
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 40)]
    k_max: usize,
    #[arg(long, default_value_t = 20_000)]
    trajectories: usize,
    /// Horizon of the drift estimate.
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[command(flatten)]
    common: Common,
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn load_measure(path: &Path) -> Result<FiniteMeasure> {
    with_path(path, parse_measure(&read_file(path)?))
}

fn load_spec(path: &Path) -> Result<SubgroupSpec> {
    with_path(path, parse_subgroup(&read_file(path)?))
}

fn check_dims(measure: &FiniteMeasure, spec: &SubgroupSpec) -> Result<()> {
    if measure.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: measure.dim(),
            found: spec.dim(),
        });
    }
    Ok(())
}

/// A finished command: payload, optional CSV table and exit code.
struct Outcome {
    result: Value,
    csv: Option<String>,
    exit: i32,
}

impl Outcome {
    fn json(result: Value) -> Self {
        Self {
            result,
            csv: None,
            exit: 0,
        }
    }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).unwrap_or(Value::Null)
}

fn provenance(command: &str, seed: Option<u64>, params: Value) -> Value {
    json!({
        "tool": "homwalk",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "params": params,
    })
}

/// `key,value` rows for a JSON document, with dotted paths as keys.
fn flatten(prefix: &str, v: &Value, out: &mut String) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_owned()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&join(k), x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&join(&i.to_string()), x, out);
            }
        }
        Value::String(s) => {
            let _ = writeln!(out, "{prefix},\"{}\"", s.replace('"', "\"\""));
        }
        _ => {
            let _ = writeln!(out, "{prefix},{v}");
        }
    }
}

fn render(format: Format, prov: &Value, outcome: &Outcome) -> String {
    match format {
        Format::Csv => {
            let mut s = String::new();
            for key in ["tool", "version", "command", "seed", "params"] {
                let _ = writeln!(s, "# {key}: {}", prov[key]);
            }
            match &outcome.csv {
                Some(table) => s.push_str(table),
                None => {
                    s.push_str("key,value\n");
                    flatten("", &outcome.result, &mut s);
                }
            }
            s
        }
        Format::Json => {
            let doc = json!({ "provenance": prov, "result": outcome.result });
            let mut s = serde_json::to_string_pretty(&doc).unwrap_or_default();
            s.push('\n');
            s
        }
    }
}

fn parse_theta(s: &str) -> Result<Complex64> {
    Complex64::from_str(s.trim()).map_err(|_| Error::InvalidArgument(format!("cannot parse theta value '{s}'")))
}

fn fmt_f(x: f64) -> String {
    format!("{x:e}")
}

fn cmd_decompose(a: &DecomposeArgs) -> Result<Outcome> {
    let text = read_file(&a.matrix)?;
    let rows: Vec<Vec<f64>> = with_path(&a.matrix, serde_json::from_str(&text).map_err(Error::from))?;
    let g = GroupElement::new(matrix_from_rows(&rows)?)?;
    let t = iwasawa_decompose(&g)?;
    let kappa = cartan_projection(&g)?;
    let rows_of = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
    };
    Ok(Outcome::json(json!({
        "k": rows_of(&t.k),
        "sigma": t.sigma,
        "n": rows_of(&t.n),
        "kappa": kappa,
    })))
}

fn cmd_classify(a: &ClassifyArgs) -> Result<Outcome> {
    let measure = load_measure(&a.measure)?;
    let spec = load_spec(&a.spec)?;
    check_dims(&measure, &spec)?;
    let mode = IncrementMode::from(a.increments);
    let lyap = estimate_lyapunov_from(
        &measure,
        &FlagPoint::base(measure.dim()),
        mode,
        a.steps,
        a.trajectories,
        a.common.seed,
    )?;
    let verdict = classify(&spec, &lyap, a.z)?;
    let warnings = zariski_warnings(&measure, derive_seed(a.common.seed, 2))?;
    let exit = if verdict.kind == VerdictKind::Indeterminate {
        EXIT_INDETERMINATE
    } else {
        0
    };
    Ok(Outcome {
        result: json!({
            "verdict": verdict,
            "lyapunov": lyap,
            "increments": mode,
            "warnings": warnings,
        }),
        csv: None,
        exit,
    })
}

fn cmd_lyapunov(a: &LyapunovArgs) -> Result<Outcome> {
    let measure = load_measure(&a.measure)?;
    let mode = IncrementMode::from(a.increments);
    let lyap = estimate_lyapunov_from(
        &measure,
        &FlagPoint::base(measure.dim()),
        mode,
        a.steps,
        a.trajectories,
        a.common.seed,
    )?;
    let mut result = json!({
        "mean": lyap.mean,
        "stderr": lyap.stderr,
        "n_steps": a.steps,
        "n_trajectories": a.trajectories,
        "increments": mode,
    });
    if let Some(p) = &a.spec {
        let spec = load_spec(p)?;
        check_dims(&measure, &spec)?;
        if spec.codim() > 0 {
            let cov = estimate_covariance(&measure, &spec, a.steps, a.trajectories, a.common.seed)?;
            result["cov"] = to_value(&cov.matrix_rows());
            result["drift_e"] = to_value(&spec.project(lyap.mean.coords()));
        }
    }
    let mut csv = String::from("coordinate,mean,stderr\n");
    for (i, (m, s)) in lyap.mean.coords().iter().zip(&lyap.stderr).enumerate() {
        let _ = writeln!(csv, "{},{},{}", i + 1, fmt_f(*m), fmt_f(*s));
    }
    Ok(Outcome {
        result,
        csv: Some(csv),
        exit: 0,
    })
}

fn cmd_walk(a: &WalkArgs) -> Result<Outcome> {
    let measure = load_measure(&a.measure)?;
    let spec = load_spec(&a.spec)?;
    check_dims(&measure, &spec)?;
    let start = WalkStart::origin(&spec).with_mode(a.increments.into());
    let traj = simulate_walk(&measure, &spec, &start, a.steps, RandomStream::new(a.common.seed, a.trajectory))?;
    let stats = match a.radius {
        Some(r) => {
            let s = return_stats(&traj, r)?;
            Some(json!({
                "radius": s.radius,
                "n_returns": s.return_times.len(),
                "last_exit": s.last_exit,
                "return_times": s.return_times,
            }))
        }
        None => None,
    };
    Ok(Outcome {
        result: json!({ "trajectory": traj, "returns": stats }),
        csv: Some(traj.to_csv()),
        exit: 0,
    })
}

fn cmd_green(a: &GreenArgs) -> Result<Outcome> {
    let measure = load_measure(&a.measure)?;
    let spec = load_spec(&a.spec)?;
    check_dims(&measure, &spec)?;
    let start = WalkStart::origin(&spec).with_mode(a.increments.into());
    let radius = match a.radius {
        Some(r) => r,
        None => calibrate_radius(
            &measure,
            &spec,
            &start,
            a.calibration_steps.unwrap_or(a.steps),
            a.trajectories,
            derive_seed(a.common.seed, 3),
            a.quantile,
        )?,
    };
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "calibrated radius is {radius}; the walk does not move (pass --radius)"
        )));
    }
    let g = empirical_green(&measure, &spec, &start, radius, a.steps, a.trajectories, a.common.seed)?;
    let mut csv = String::from("step,green\n");
    for (n, v) in g.values.iter().enumerate() {
        let _ = writeln!(csv, "{n},{}", fmt_f(*v));
    }
    Ok(Outcome {
        result: json!({
            "radius": g.radius,
            "n_trajectories": g.n_trajectories,
            "final": g.values[g.n_steps()],
            "last_quarter_change": g.last_quarter_change(),
            "growth": g.growth(),
            "late_return_fraction": g.late_return_fraction,
            "increments": start.mode,
            "values": g.values,
        }),
        csv: Some(csv),
        exit: 0,
    })
}

fn cmd_clt(a: &CltArgs) -> Result<Outcome> {
    let measure = load_measure(&a.measure)?;
    let spec = load_spec(&a.spec)?;
    check_dims(&measure, &spec)?;
    let r = clt_diagnostics(&measure, &spec, a.steps, a.trajectories, a.common.seed, None)?;
    Ok(Outcome::json(to_value(&r)))
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<Outcome> {
    let measure = load_measure(&a.measure)?;
    let spec = match &a.spec {
        Some(p) => load_spec(p)?,
        None => SubgroupSpec::trivial_a_prime(measure.dim())?,
    };
    check_dims(&measure, &spec)?;
    if spec.codim() != 1 {
        return Err(Error::InvalidArgument(
            "spectrum expects a one-dimensional quotient E".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut csv = String::from("theta_re,theta_im,lambda_re,lambda_im,lambda_abs,rest_radius,spectral_radius\n");
    for t in &a.theta {
        let theta = parse_theta(t)?;
        let radius = spectral_radius(&measure, &[theta], &spec, a.grid)?;
        let eig = match leading_eigen(&measure, &[theta], &spec, a.grid, a.tol, a.max_iter) {
            Ok(e) => Some(e),
            Err(Error::NoConvergence { .. }) => None,
            Err(e) => return Err(e),
        };
        let (lre, lim, labs, rest) = match &eig {
            Some(e) => (
                fmt_f(e.lambda.re),
                fmt_f(e.lambda.im),
                fmt_f(e.lambda.norm()),
                fmt_f(e.spectral_radius_rest),
            ),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            csv,
            "{},{},{lre},{lim},{labs},{rest},{}",
            fmt_f(theta.re),
            fmt_f(theta.im),
            fmt_f(radius)
        );
        rows.push(json!({
            "theta": [theta.re, theta.im],
            "lambda": eig.as_ref().map(|e| [e.lambda.re, e.lambda.im]),
            "rest_radius": eig.as_ref().map(|e| e.spectral_radius_rest),
            "iterations": eig.as_ref().map(|e| e.iterations),
            "spectral_radius": radius,
        }));
    }
    Ok(Outcome {
        result: json!({ "grid": a.grid, "sweep": rows }),
        csv: Some(csv),
        exit: 0,
    })
}

fn cmd_ldp(a: &LdpArgs) -> Result<Outcome> {
    let measure = load_measure(&a.measure)?;
    let spec = load_spec(&a.spec)?;
    check_dims(&measure, &spec)?;
    if spec.codim() == 0 {
        return Err(Error::DegenerateQuotient);
    }
    let lyap = estimate_lyapunov_from(
        &measure,
        &FlagPoint::base(measure.dim()),
        IncrementMode::Genuine,
        a.steps,
        200,
        derive_seed(a.common.seed, 4),
    )?;
    let drift = spec.project(lyap.mean.coords());
    let threshold = match a.threshold {
        Some(m) => m,
        None => 0.5 * increment_spread(&measure, &spec, 20_000, derive_seed(a.common.seed, 5))?,
    };
    let rep = large_deviation_decay(
        &measure,
        &spec,
        &FlagPoint::base(measure.dim()),
        &drift,
        threshold,
        a.k_max,
        a.trajectories,
        a.common.seed,
    )?;
    let mut csv = String::from("k,log_frequency\n");
    for (k, y) in &rep.points {
        let _ = writeln!(csv, "{k},{}", fmt_f(*y));
    }
    let points: Vec<Value> = rep
        .points
        .iter()
        .map(|(k, y)| json!([k, if y.is_finite() { json!(y) } else { json!("-inf") }]))
        .collect();
    Ok(Outcome {
        result: json!({
            "threshold": rep.threshold,
            "drift_e": drift,
            "points": points,
            "slope": rep.slope,
            "intercept": rep.intercept,
            "r2": rep.r2,
        }),
        csv: Some(csv),
        exit: 0,
    })
}

fn dispatch(cmd: &Command) -> (&'static str, &Common, Value) {
    match cmd {
        Command::Decompose(a) => ("decompose", &a.common, json!({ "matrix": a.matrix })),
        Command::Classify(a) => (
            "classify",
            &a.common,
            json!({ "measure": a.measure, "spec": a.spec, "steps": a.steps,
                    "trajectories": a.trajectories, "z": a.z,
                    "increments": IncrementMode::from(a.increments) }),
        ),
        Command::Lyapunov(a) => (
            "lyapunov",
            &a.common,
            json!({ "measure": a.measure, "spec": a.spec, "steps": a.steps,
                    "trajectories": a.trajectories,
                    "increments": IncrementMode::from(a.increments) }),
        ),
        Command::Walk(a) => (
            "walk",
            &a.common,
            json!({ "measure": a.measure, "spec": a.spec, "steps": a.steps,
                    "trajectory": a.trajectory, "radius": a.radius,
                    "increments": IncrementMode::from(a.increments) }),
        ),
        Command::Green(a) => (
            "green",
            &a.common,
            json!({ "measure": a.measure, "spec": a.spec, "steps": a.steps,
                    "trajectories": a.trajectories, "radius": a.radius,
                    "calibration_steps": a.calibration_steps, "quantile": a.quantile,
                    "increments": IncrementMode::from(a.increments) }),
        ),
        Command::Clt(a) => (
            "clt",
            &a.common,
            json!({ "measure": a.measure, "spec": a.spec, "steps": a.steps,
                    "trajectories": a.trajectories }),
        ),
        Command::Spectrum(a) => (
            "spectrum",
            &a.common,
            json!({ "measure": a.measure, "spec": a.spec, "theta": a.theta,
                    "grid": a.grid, "tol": a.tol, "max_iter": a.max_iter }),
        ),
        Command::Ldp(a) => (
            "ldp",
            &a.common,
            json!({ "measure": a.measure, "spec": a.spec, "threshold": a.threshold,
                    "k_max": a.k_max, "trajectories": a.trajectories, "steps": a.steps }),
        ),
    }
}

fn execute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Decompose(a) => cmd_decompose(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Lyapunov(a) => cmd_lyapunov(a),
        Command::Walk(a) => cmd_walk(a),
        Command::Green(a) => cmd_green(a),
        Command::Clt(a) => cmd_clt(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Ldp(a) => cmd_ldp(a),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { 0 };
        }
    };
    let (name, common, params) = dispatch(&cli.command);
    let seed = match cli.command {
        Command::Decompose(_) | Command::Spectrum(_) => None,
        _ => Some(common.seed),
    };
    let outcome = match common.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| execute(&cli.command)),
            Err(e) => Err(Error::InvalidArgument(format!("cannot start {w} workers: {e}"))),
        },
        None => execute(&cli.command),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let text = render(common.format, &provenance(name, seed, params), &outcome);
    let written = match &common.out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_ERROR;
    }
    outcome.exit
}
