//! Command-line front end: simulate walks and Brownian paths, evaluate rate
//! functions, and run the Monte Carlo verification experiments.
//!
//! Configuration merges three layers, highest precedence first: command-line
//! flags, a TOML config file (`--config`), and built-in defaults. The output
//! directory additionally falls back to the `GEORATE_OUT_DIR` environment
//! variable. Validation is collected, not fail-fast: a bad config reports
//! every offending key at once. Exit codes: 0 success, 1 invalid
//! configuration, 2 runtime failure (clap reports usage errors as 2).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use georate::brownian::{exit_bound, run_brownian};
use georate::estimator::{
    estimate_endpoint_rate, persist_report, verify_exit_bound, EndpointExperiment,
};
use georate::measures::CONJUGATE_SENTINEL;
use georate::rates::{cramer_rate, path_action, variational_semigroup, FnField};
use georate::walks::{run_geodesic_walk, WalkConfig};
use georate::{
    CotangentVector, Curve, ExperimentReport, ManifoldKind, ManifoldModel, MeasureFamily, Point,
    RadialLaw, RateModel, TangentVector,
};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "georate",
    version,
    about = "Geodesic random walks, Brownian motion, and large-deviation rates on model geometries"
)]
struct Cli {
    /// TOML configuration file; command-line flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (falls back to `out_dir` in the config, then
    /// GEORATE_OUT_DIR, then the current directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed; every random draw in the run is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replicated sampling (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Geometry: euclidean:<dim>, sphere:<radius>, or hyperbolic2.
    #[arg(long, global = true)]
    manifold: Option<String>,

    /// Increment family: gaussian, ball:<radius>, or atoms:<r:w,r:w,...>.
    #[arg(long, global = true)]
    family: Option<String>,

    /// Cost model: walk (needs a family) or brownian.
    #[arg(long, global = true)]
    model: Option<String>,

    /// Start point: `pole` or comma-separated coordinates.
    #[arg(long, global = true, allow_hyphen_values = true)]
    x0: Option<String>,

    /// Target point: like --x0, or dist:<D> for the point at distance D
    /// along the first frame direction.
    #[arg(long, global = true, allow_hyphen_values = true)]
    target: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one rescaled geodesic random walk and write its path as CSV.
    Walk {
        /// Scale parameter: the walk takes floor(n * horizon) steps of size 1/n.
        #[arg(long)]
        n: Option<u64>,
        /// Path horizon in rescaled time.
        #[arg(long, allow_negative_numbers = true)]
        horizon: Option<f64>,
    },
    /// Simulate one Brownian path on the frame bundle and write it as CSV.
    Bm {
        /// Diffusivity scale multiplying the generator.
        #[arg(long, allow_negative_numbers = true)]
        eps: Option<f64>,
        /// Path horizon.
        #[arg(long, allow_negative_numbers = true)]
        horizon: Option<f64>,
        /// Integrator step size.
        #[arg(long, allow_negative_numbers = true)]
        dt: Option<f64>,
    },
    /// Evaluate the Hamiltonian and Lagrangian of the cost model at --x0.
    Rate {
        /// Velocity as frame coefficients, e.g. `0.8,0.0` (a single number
        /// means that speed along the first frame direction).
        #[arg(long, allow_hyphen_values = true)]
        v: Option<String>,
        /// Covector as frame coefficients, same shorthand as --v.
        #[arg(long, allow_hyphen_values = true)]
        p: Option<String>,
    },
    /// Integrate the model's path cost over a CSV trajectory (t, coord_0, ...).
    Action {
        /// Input trajectory CSV.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Endpoint rate: the cheapest geodesic cost from --x0 to --target.
    Cramer {
        /// Cap on the number of connecting geodesics enumerated.
        #[arg(long)]
        max_geodesics: Option<usize>,
    },
    /// Monte Carlo decay-rate experiment with a persisted report.
    Estimate {
        /// Replicas per scale.
        #[arg(long)]
        replicas: Option<u64>,
        /// Comma-separated walk scales, e.g. `8,16,32,64`.
        #[arg(long)]
        levels: Option<String>,
        /// Hit radius around the target (default scales with the distance).
        #[arg(long, allow_negative_numbers = true)]
        delta: Option<f64>,
        /// Reference rate; computed from the cost model when omitted.
        #[arg(long, allow_negative_numbers = true)]
        theory: Option<f64>,
        /// Relative mismatch against the reference that still passes.
        #[arg(long, allow_negative_numbers = true)]
        tolerance: Option<f64>,
    },
    /// Check the Gaussian exit-probability bound on a (tau, delta) grid.
    Exitbound {
        /// Grid as tau:delta pairs, e.g. `0.01:0.5,0.005:0.4`.
        #[arg(long)]
        grid: Option<String>,
        /// Curvature scale L >= 1 in the bound.
        #[arg(long, allow_negative_numbers = true)]
        l: Option<f64>,
        /// Diffusivity scale.
        #[arg(long, allow_negative_numbers = true)]
        eps: Option<f64>,
        /// Replicas per grid point.
        #[arg(long)]
        replicas: Option<u64>,
        /// Integrator step size.
        #[arg(long, allow_negative_numbers = true)]
        dt: Option<f64>,
    },
    /// Variational semigroup value at (t, x0) for a terminal payoff.
    Semigroup {
        /// Evaluation time.
        #[arg(long, allow_negative_numbers = true)]
        t: Option<f64>,
        /// Geodesic legs in the discretized path.
        #[arg(long)]
        segments: Option<usize>,
        /// Payoff: `negsq` (minus squared distance to --x0) or `coord:<i>`.
        #[arg(long)]
        field: Option<String>,
    },
    /// Legendre conjugate of the family's cumulant at a given speed.
    Conjugate {
        /// Speed along the first frame direction.
        #[arg(long, allow_negative_numbers = true)]
        v: Option<f64>,
    },
}

/// Every key a config file may set. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    manifold: Option<String>,
    family: Option<String>,
    model: Option<String>,
    x0: Option<String>,
    target: Option<String>,
    v: Option<Vec<f64>>,
    p: Option<Vec<f64>>,
    n: Option<u64>,
    horizon: Option<f64>,
    dt: Option<f64>,
    eps: Option<f64>,
    replicas: Option<u64>,
    levels: Option<Vec<u64>>,
    delta: Option<f64>,
    theory: Option<f64>,
    tolerance: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
    t: Option<f64>,
    segments: Option<usize>,
    field: Option<String>,
    l: Option<f64>,
    grid: Option<Vec<[f64; 2]>>,
    max_geodesics: Option<usize>,
    input: Option<PathBuf>,
    out_dir: Option<PathBuf>,
}

/// Flags, file, and defaults merged; strings still unparsed so that
/// validation can report every problem in one pass.
struct Merged {
    manifold: String,
    family: Option<String>,
    model: Option<String>,
    x0: Option<String>,
    target: Option<String>,
    v: Option<Vec<f64>>,
    v_flag: Option<String>,
    p: Option<Vec<f64>>,
    p_flag: Option<String>,
    n: u64,
    horizon: f64,
    dt: f64,
    eps: f64,
    replicas: u64,
    levels: Vec<u64>,
    levels_flag: Option<String>,
    delta: Option<f64>,
    theory: Option<f64>,
    tolerance: f64,
    seed: u64,
    threads: Option<usize>,
    t: f64,
    segments: usize,
    field: String,
    l: f64,
    grid: Vec<(f64, f64)>,
    grid_flag: Option<String>,
    max_geodesics: usize,
    input: Option<PathBuf>,
    out_dir: PathBuf,
}

/// Which optional inputs a subcommand cannot run without.
#[derive(Default)]
struct Needs {
    family: bool,
    target: bool,
    model: bool,
    input: bool,
    /// At least one of v/p.
    dual: bool,
    /// v specifically.
    v: bool,
    /// Estimator preconditions (level count, replica floor).
    estimate: bool,
    /// Grid floor feasibility.
    exitbound: bool,
}

/// Fully parsed and validated inputs, ready to dispatch.
struct Resolved {
    m: ManifoldModel,
    manifold_spec: String,
    family_spec: Option<String>,
    family: Option<MeasureFamily>,
    model: Option<RateModel>,
    x0: Point,
    target: Option<Point>,
    v: Option<TangentVector>,
    p: Option<CotangentVector>,
    field: FieldSpec,
    n: u64,
    horizon: f64,
    dt: f64,
    eps: f64,
    replicas: u64,
    levels: Vec<u64>,
    delta: Option<f64>,
    theory: Option<f64>,
    tolerance: f64,
    seed: u64,
    threads: Option<usize>,
    t: f64,
    segments: usize,
    l: f64,
    grid: Vec<(f64, f64)>,
    max_geodesics: usize,
    input: Option<PathBuf>,
    out_dir: PathBuf,
}

#[derive(Clone, Copy)]
enum FieldSpec {
    NegSq,
    Coord(usize),
}

enum Failure {
    Validation(Vec<String>),
    Runtime(String),
}

impl From<georate::Error> for Failure {
    fn from(e: georate::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(errors)) => {
            for e in &errors {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::Validation(vec![format!("config: cannot read {}: {e}", path.display())])
            })?;
            parse_config(&text)?
        }
        None => FileConfig::default(),
    };
    let needs = needs_for(&cli.command);
    let merged = merge(&cli, file);
    let resolved = validate(merged, &needs)?;
    if let Some(workers) = resolved.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    dispatch(&cli.command, resolved)
}

fn parse_config(text: &str) -> Result<FileConfig, Failure> {
    // The TOML error Display carries the line and column of the offense,
    // including the name of any unknown key.
    toml::from_str(text).map_err(|e| Failure::Validation(vec![format!("config: {e}")]))
}

fn needs_for(cmd: &Command) -> Needs {
    match cmd {
        Command::Walk { .. } => Needs { family: true, ..Needs::default() },
        Command::Bm { .. } => Needs::default(),
        Command::Rate { .. } => Needs { model: true, dual: true, ..Needs::default() },
        Command::Action { .. } => Needs { model: true, input: true, ..Needs::default() },
        Command::Cramer { .. } => Needs { model: true, target: true, ..Needs::default() },
        Command::Estimate { .. } => {
            Needs { family: true, target: true, estimate: true, ..Needs::default() }
        }
        Command::Exitbound { .. } => Needs { exitbound: true, ..Needs::default() },
        Command::Semigroup { .. } => Needs { model: true, ..Needs::default() },
        Command::Conjugate { .. } => Needs { family: true, v: true, ..Needs::default() },
    }
}

fn merge(cli: &Cli, file: FileConfig) -> Merged {
    let out_dir = cli
        .out
        .clone()
        .or(file.out_dir)
        .or_else(|| std::env::var_os("GEORATE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut mg = Merged {
        manifold: cli.manifold.clone().or(file.manifold).unwrap_or_else(|| "euclidean:1".into()),
        family: cli.family.clone().or(file.family),
        model: cli.model.clone().or(file.model),
        x0: cli.x0.clone().or(file.x0),
        target: cli.target.clone().or(file.target),
        v: file.v,
        v_flag: None,
        p: file.p,
        p_flag: None,
        n: file.n.unwrap_or(100),
        horizon: file.horizon.unwrap_or(1.0),
        dt: file.dt.unwrap_or(1e-3),
        eps: file.eps.unwrap_or(1.0),
        replicas: file.replicas.unwrap_or(10_000),
        levels: file.levels.unwrap_or_else(|| vec![8, 16, 32, 64]),
        levels_flag: None,
        delta: file.delta,
        theory: file.theory,
        tolerance: file.tolerance.unwrap_or(0.15),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        threads: cli.threads.or(file.threads),
        t: file.t.unwrap_or(0.5),
        segments: file.segments.unwrap_or(12),
        field: file.field.unwrap_or_else(|| "negsq".into()),
        l: file.l.unwrap_or(1.0),
        grid: file
            .grid
            .map(|g| g.into_iter().map(|[tau, delta]| (tau, delta)).collect())
            .unwrap_or_else(|| vec![(0.01, 0.5)]),
        grid_flag: None,
        max_geodesics: file.max_geodesics.unwrap_or(8),
        input: file.input,
        out_dir,
    };
    match &cli.command {
        Command::Walk { n, horizon } => {
            if let Some(n) = n {
                mg.n = *n;
            }
            if let Some(h) = horizon {
                mg.horizon = *h;
            }
        }
        Command::Bm { eps, horizon, dt } => {
            if let Some(e) = eps {
                mg.eps = *e;
            }
            if let Some(h) = horizon {
                mg.horizon = *h;
            }
            if let Some(d) = dt {
                mg.dt = *d;
            }
        }
        Command::Rate { v, p } => {
            mg.v_flag = v.clone();
            mg.p_flag = p.clone();
        }
        Command::Action { input } => {
            if let Some(path) = input {
                mg.input = Some(path.clone());
            }
        }
        Command::Cramer { max_geodesics } => {
            if let Some(g) = max_geodesics {
                mg.max_geodesics = *g;
            }
        }
        Command::Estimate { replicas, levels, delta, theory, tolerance } => {
            if let Some(r) = replicas {
                mg.replicas = *r;
            }
            mg.levels_flag = levels.clone();
            if let Some(d) = delta {
                mg.delta = Some(*d);
            }
            if let Some(th) = theory {
                mg.theory = Some(*th);
            }
            if let Some(tol) = tolerance {
                mg.tolerance = *tol;
            }
        }
        Command::Exitbound { grid, l, eps, replicas, dt } => {
            mg.grid_flag = grid.clone();
            if let Some(l) = l {
                mg.l = *l;
            }
            if let Some(e) = eps {
                mg.eps = *e;
            }
            if let Some(r) = replicas {
                mg.replicas = *r;
            }
            if let Some(d) = dt {
                mg.dt = *d;
            }
        }
        Command::Semigroup { t, segments, field } => {
            if let Some(t) = t {
                mg.t = *t;
            }
            if let Some(s) = segments {
                mg.segments = *s;
            }
            if let Some(f) = field {
                mg.field = f.clone();
            }
        }
        Command::Conjugate { v } => {
            if let Some(v) = v {
                mg.v = Some(vec![*v]);
            }
        }
    }
    mg
}

fn require_positive(errors: &mut Vec<String>, key: &str, value: f64) {
    if !(value > 0.0 && value.is_finite()) {
        errors.push(format!("{key}: must be a finite positive number, got {value}"));
    }
}

/// Checks every merged value and collects every failure, so one run reports
/// the whole set of problems rather than the first.
fn validate(mg: Merged, needs: &Needs) -> Result<Resolved, Failure> {
    let mut errors: Vec<String> = Vec::new();

    // Flag strings override the structured config values once parsed.
    let mut levels = mg.levels;
    if let Some(spec) = &mg.levels_flag {
        match parse_u64_list(spec) {
            Ok(list) => levels = list,
            Err(e) => errors.push(format!("levels: {e}")),
        }
    }
    let mut grid = mg.grid;
    if let Some(spec) = &mg.grid_flag {
        match parse_grid(spec) {
            Ok(g) => grid = g,
            Err(e) => errors.push(format!("grid: {e}")),
        }
    }
    let mut v_coeffs = mg.v;
    if let Some(spec) = &mg.v_flag {
        match parse_f64_list(spec) {
            Ok(c) => v_coeffs = Some(c),
            Err(e) => errors.push(format!("v: {e}")),
        }
    }
    let mut p_coeffs = mg.p;
    if let Some(spec) = &mg.p_flag {
        match parse_f64_list(spec) {
            Ok(c) => p_coeffs = Some(c),
            Err(e) => errors.push(format!("p: {e}")),
        }
    }

    let manifold = match parse_manifold(&mg.manifold) {
        Ok(m) => Some(m),
        Err(e) => {
            errors.push(format!("manifold: {e}"));
            None
        }
    };

    require_positive(&mut errors, "dt", mg.dt);
    require_positive(&mut errors, "horizon", mg.horizon);
    require_positive(&mut errors, "eps", mg.eps);
    require_positive(&mut errors, "t", mg.t);
    require_positive(&mut errors, "tolerance", mg.tolerance);
    if mg.n == 0 {
        errors.push("n: must be at least 1".into());
    }
    if mg.replicas == 0 {
        errors.push("replicas: must be at least 1".into());
    } else if needs.estimate && mg.replicas < 1000 {
        errors.push(format!(
            "replicas: {} is below the 1000 needed for a stable fit",
            mg.replicas
        ));
    }
    if mg.segments == 0 {
        errors.push("segments: must be at least 1".into());
    }
    if mg.max_geodesics == 0 {
        errors.push("max_geodesics: must be at least 1".into());
    }
    if !(mg.l >= 1.0 && mg.l.is_finite()) {
        errors.push(format!("l: curvature scale must be >= 1, got {}", mg.l));
    }
    if let Some(d) = mg.delta {
        if !(d > 0.0 && d.is_finite()) {
            errors.push(format!("delta: must be a finite positive number, got {d}"));
        }
    }
    if let Some(th) = mg.theory {
        if !th.is_finite() {
            errors.push(format!("theory: must be finite, got {th}"));
        }
    }
    if let Some(workers) = mg.threads {
        if workers == 0 {
            errors.push("threads: must be at least 1".into());
        }
    }
    if levels.is_empty() {
        errors.push("levels: must not be empty".into());
    } else if levels[0] == 0 || !levels.windows(2).all(|w| w[0] < w[1]) {
        errors.push("levels: scales must be positive and strictly increasing".into());
    } else if needs.estimate && levels.len() < 2 {
        errors.push("levels: need at least two scales to fit a rate".into());
    }
    for (i, (tau, delta)) in grid.iter().enumerate() {
        if !(tau.is_finite() && *tau > 0.0) {
            errors.push(format!("grid[{i}]: time window must be positive, got {tau}"));
        }
        if !(delta.is_finite() && *delta > 0.0) {
            errors.push(format!("grid[{i}]: radius must be positive, got {delta}"));
        }
    }

    // Geometry-dependent pieces.
    let mut x0 = None;
    let mut target = None;
    let mut family = None;
    let mut v_tan = None;
    let mut p_cot = None;
    let mut field = FieldSpec::NegSq;
    if let Some(m) = &manifold {
        x0 = match &mg.x0 {
            None => Some(canonical_point(m)),
            Some(spec) => match parse_point(m, spec) {
                Ok(p) => Some(p),
                Err(e) => {
                    errors.push(format!("x0: {e}"));
                    None
                }
            },
        };
        if let Some(spec) = &mg.family {
            match parse_family(m, spec) {
                Ok(f) => family = Some(f),
                Err(e) => errors.push(format!("family: {e}")),
            }
        }
        if let (Some(base), Some(spec)) = (&x0, &mg.target) {
            match parse_target(m, base, spec) {
                Ok(p) => target = Some(p),
                Err(e) => errors.push(format!("target: {e}")),
            }
        }
        if let (Some(base), Some(coeffs)) = (&x0, &v_coeffs) {
            match combine_frame(m, base, coeffs) {
                Ok(v) => v_tan = Some(v),
                Err(e) => errors.push(format!("v: {e}")),
            }
        }
        if let (Some(base), Some(coeffs)) = (&x0, &p_coeffs) {
            match combine_frame(m, base, coeffs) {
                Ok(sharp) => p_cot = Some(m.lower(&sharp)),
                Err(e) => errors.push(format!("p: {e}")),
            }
        }
        match parse_field_spec(&mg.field, m) {
            Ok(f) => field = f,
            Err(e) => errors.push(format!("field: {e}")),
        }
        // Feasibility of the closed-form bound at each grid point; skipped
        // when l is already known bad so each problem is reported once.
        if needs.exitbound && mg.l >= 1.0 && mg.l.is_finite() {
            for (i, (tau, delta)) in grid.iter().enumerate() {
                if *tau > 0.0 && tau.is_finite() && *delta > 0.0 && delta.is_finite() {
                    if let Err(e) = exit_bound(m.dim(), mg.l, *tau, *delta) {
                        errors.push(format!("grid[{i}]: {e}"));
                    }
                }
            }
        }
    }

    if needs.family && mg.family.is_none() {
        errors.push("family: required for this command".into());
    }
    if needs.target && mg.target.is_none() {
        errors.push("target: required for this command".into());
    }
    if needs.v && v_coeffs.is_none() {
        errors.push("v: required for this command".into());
    }
    if needs.dual && v_coeffs.is_none() && p_coeffs.is_none() {
        errors.push("v/p: provide a direction via --v or --p".into());
    }
    if needs.input && mg.input.is_none() {
        errors.push("input: a trajectory CSV is required for this command".into());
    }

    let mut model = None;
    let model_name = match mg.model.as_deref() {
        None => {
            if mg.family.is_some() {
                "walk"
            } else {
                "brownian"
            }
        }
        Some("walk") => "walk",
        Some("brownian") => "brownian",
        Some(other) => {
            errors.push(format!("model: unknown model `{other}`; supported: walk, brownian"));
            ""
        }
    };
    if needs.model {
        match model_name {
            "walk" => match &family {
                Some(f) => model = Some(RateModel::walk(f.clone())),
                None => {
                    if mg.family.is_none() {
                        errors.push("family: the walk cost model needs an increment family".into());
                    }
                }
            },
            "brownian" => {
                if let Some(m) = &manifold {
                    model = Some(RateModel::brownian(m));
                }
            }
            _ => {}
        }
    }

    if !errors.is_empty() {
        return Err(Failure::Validation(errors));
    }
    Ok(Resolved {
        m: manifold.expect("validated"),
        manifold_spec: mg.manifold,
        family_spec: mg.family,
        family,
        model,
        x0: x0.expect("validated"),
        target,
        v: v_tan,
        p: p_cot,
        field,
        n: mg.n,
        horizon: mg.horizon,
        dt: mg.dt,
        eps: mg.eps,
        replicas: mg.replicas,
        levels,
        delta: mg.delta,
        theory: mg.theory,
        tolerance: mg.tolerance,
        seed: mg.seed,
        threads: mg.threads,
        t: mg.t,
        segments: mg.segments,
        l: mg.l,
        grid,
        max_geodesics: mg.max_geodesics,
        input: mg.input,
        out_dir: mg.out_dir,
    })
}

fn parse_manifold(spec: &str) -> Result<ManifoldModel, String> {
    let lower = spec.trim().to_ascii_lowercase();
    if lower == "hyperbolic2" {
        return Ok(ManifoldModel::hyperbolic2());
    }
    if let Some(dim) = lower.strip_prefix("euclidean:") {
        let k: usize = dim.parse().map_err(|_| format!("dimension `{dim}` is not an integer"))?;
        return ManifoldModel::euclidean(k).map_err(|e| e.to_string());
    }
    if let Some(r) = lower.strip_prefix("sphere:") {
        let radius: f64 = r.parse().map_err(|_| format!("radius `{r}` is not a number"))?;
        return ManifoldModel::sphere(radius).map_err(|e| e.to_string());
    }
    Err(format!(
        "unknown geometry `{spec}`; supported kinds: euclidean:<dim>, sphere:<radius>, hyperbolic2"
    ))
}

fn parse_family(m: &ManifoldModel, spec: &str) -> Result<MeasureFamily, String> {
    let lower = spec.trim().to_ascii_lowercase();
    if lower == "gaussian" {
        return Ok(MeasureFamily::gaussian(m));
    }
    if let Some(r) = lower.strip_prefix("ball:") {
        let radius: f64 = r.parse().map_err(|_| format!("ball radius `{r}` is not a number"))?;
        return MeasureFamily::uniform_ball(m, radius).map_err(|e| e.to_string());
    }
    if let Some(list) = lower.strip_prefix("atoms:") {
        let mut radii = Vec::new();
        let mut weights = Vec::new();
        for pair in list.split(',') {
            let (r, w) = pair
                .split_once(':')
                .ok_or_else(|| format!("atom `{pair}` is not radius:weight"))?;
            radii.push(
                r.trim()
                    .parse()
                    .map_err(|_| format!("atom radius `{}` is not a number", r.trim()))?,
            );
            weights.push(
                w.trim()
                    .parse()
                    .map_err(|_| format!("atom weight `{}` is not a number", w.trim()))?,
            );
        }
        let law = RadialLaw::discrete(radii, weights).map_err(|e| e.to_string())?;
        return Ok(MeasureFamily::radial(m, law));
    }
    Err(format!("unknown family `{spec}`; supported: gaussian, ball:<radius>, atoms:<r:w,...>"))
}

/// A distinguished reference point on each geometry: the origin, the north
/// pole, or (0, 1) on the half-plane.
fn canonical_point(m: &ManifoldModel) -> Point {
    let coords = match m.kind() {
        ManifoldKind::Euclidean(k) => vec![0.0; *k],
        ManifoldKind::Sphere { radius } => vec![0.0, 0.0, *radius],
        ManifoldKind::Hyperbolic2 => vec![0.0, 1.0],
    };
    m.point(coords).expect("reference point lies on the geometry")
}

fn parse_point(m: &ManifoldModel, spec: &str) -> Result<Point, String> {
    if spec.trim() == "pole" {
        return Ok(canonical_point(m));
    }
    let coords = parse_f64_list(spec)?;
    m.point(coords).map_err(|e| e.to_string())
}

fn parse_target(m: &ManifoldModel, x0: &Point, spec: &str) -> Result<Point, String> {
    if let Some(d) = spec.trim().strip_prefix("dist:") {
        let dist: f64 = d.trim().parse().map_err(|_| format!("distance `{d}` is not a number"))?;
        if !(dist >= 0.0 && dist.is_finite()) {
            return Err(format!("distance {dist} must be finite and >= 0"));
        }
        let e0 = m
            .orthonormal_basis(x0)
            .into_iter()
            .next()
            .expect("every supported geometry has dimension >= 1");
        return m.exp_map(x0, &e0.scaled(dist)).map_err(|e| e.to_string());
    }
    parse_point(m, spec)
}

/// Builds the tangent vector with the given orthonormal-frame coefficients
/// at `x`. A single coefficient on a higher-dimensional geometry is read as
/// a speed along the first frame direction.
fn combine_frame(m: &ManifoldModel, x: &Point, coeffs: &[f64]) -> Result<TangentVector, String> {
    let mut coeffs = coeffs.to_vec();
    if coeffs.len() == 1 && m.dim() > 1 {
        coeffs.resize(m.dim(), 0.0);
    }
    if coeffs.len() != m.dim() {
        return Err(format!("expected {} frame coefficients, got {}", m.dim(), coeffs.len()));
    }
    let basis = m.orthonormal_basis(x);
    let mut sum = vec![0.0; m.repr_len()];
    for (c, e) in coeffs.iter().zip(&basis) {
        for (j, comp) in e.components().iter().enumerate() {
            sum[j] += c * comp;
        }
    }
    m.tangent(x, sum).map_err(|e| e.to_string())
}

fn parse_field_spec(spec: &str, m: &ManifoldModel) -> Result<FieldSpec, String> {
    let s = spec.trim();
    if s == "negsq" {
        return Ok(FieldSpec::NegSq);
    }
    if let Some(i) = s.strip_prefix("coord:") {
        let idx: usize = i.parse().map_err(|_| format!("index `{i}` is not an integer"))?;
        if idx >= m.repr_len() {
            return Err(format!(
                "index {idx} out of range; this geometry has {} coordinates",
                m.repr_len()
            ));
        }
        return Ok(FieldSpec::Coord(idx));
    }
    Err(format!("unknown payoff `{s}`; supported: negsq, coord:<index>"))
}

fn parse_f64_list(spec: &str) -> Result<Vec<f64>, String> {
    spec.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>().map_err(|_| format!("`{tok}` is not a number"))
        })
        .collect()
}

fn parse_u64_list(spec: &str) -> Result<Vec<u64>, String> {
    spec.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<u64>().map_err(|_| format!("`{tok}` is not a positive integer"))
        })
        .collect()
}

fn parse_grid(spec: &str) -> Result<Vec<(f64, f64)>, String> {
    spec.split(',')
        .map(|pair| {
            let pair = pair.trim();
            let (tau, delta) =
                pair.split_once(':').ok_or_else(|| format!("`{pair}` is not tau:delta"))?;
            let tau = tau
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("time window `{}` is not a number", tau.trim()))?;
            let delta = delta
                .trim()
                .parse::<f64>()
                .map_err(|_| format!("radius `{}` is not a number", delta.trim()))?;
            Ok((tau, delta))
        })
        .collect()
}

fn dispatch(cmd: &Command, r: Resolved) -> Result<(), Failure> {
    match cmd {
        Command::Walk { .. } => run_walk(r),
        Command::Bm { .. } => run_bm(r),
        Command::Rate { .. } => run_rate(r),
        Command::Action { .. } => run_action(r),
        Command::Cramer { .. } => run_cramer(r),
        Command::Estimate { .. } => run_estimate(r),
        Command::Exitbound { .. } => run_exitbound(r),
        Command::Semigroup { .. } => run_semigroup(r),
        Command::Conjugate { .. } => run_conjugate(r),
    }
}

fn out_file(dir: &Path, name: &str) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

fn fmt_point(p: &Point) -> String {
    p.coords().iter().map(|c| format!("{c:.6}")).collect::<Vec<_>>().join(", ")
}

/// Rate-function values beyond the family's mean range are a sentinel, not a
/// number worth printing.
fn fmt_rate(v: f64) -> String {
    if v >= 0.5 * CONJUGATE_SENTINEL {
        "infinite".into()
    } else {
        format!("{v:.6}")
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(())
}

fn run_walk(r: Resolved) -> Result<(), Failure> {
    let family = r.family.expect("validated");
    let cfg = WalkConfig::new(&r.m, &family, r.x0.clone(), r.n, r.horizon, r.seed)?;
    let path = run_geodesic_walk(&cfg)?;
    let file = out_file(&r.out_dir, "walk.csv")?;
    path.write_csv(&cfg, BufWriter::new(File::create(&file)?))?;
    println!(
        "walk: {} steps at scale n={} on {}, endpoint [{}], wrote {}",
        cfg.step_count(),
        r.n,
        r.manifold_spec,
        fmt_point(path.endpoint()),
        file.display()
    );
    Ok(())
}

fn run_bm(r: Resolved) -> Result<(), Failure> {
    let path = run_brownian(&r.m, &r.x0, r.eps, r.horizon, r.dt, r.seed)?;
    let file = out_file(&r.out_dir, "bm.csv")?;
    let mut w = BufWriter::new(File::create(&file)?);
    write!(w, "t")?;
    for j in 0..r.m.repr_len() {
        write!(w, ",coord_{j}")?;
    }
    writeln!(w)?;
    for (t, s) in path.times().iter().zip(path.states()) {
        write!(w, "{t}")?;
        for c in s.point().coords().iter() {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    println!(
        "bm: {} steps at dt={} (eps={}) on {}, endpoint [{}], wrote {}",
        path.times().len() - 1,
        r.dt,
        r.eps,
        r.manifold_spec,
        fmt_point(path.endpoint()),
        file.display()
    );
    Ok(())
}

fn run_rate(r: Resolved) -> Result<(), Failure> {
    let model = r.model.expect("validated");
    let mut parts = Vec::new();
    if let Some(p) = &r.p {
        parts.push(format!("H(x0, p) = {:.6}", model.hamiltonian(&r.x0, p)?));
    }
    if let Some(v) = &r.v {
        parts.push(format!("L(x0, v) = {}", fmt_rate(model.lagrangian(&r.x0, v)?)));
    }
    println!("rate: {}", parts.join(", "));
    Ok(())
}

fn run_action(r: Resolved) -> Result<(), Failure> {
    let model = r.model.expect("validated");
    let input = r.input.expect("validated");
    let curve = read_curve_csv(&r.m, &input)?;
    let report = path_action(&model, &curve)?;
    let file = out_file(&r.out_dir, "action.json")?;
    write_json(&report, &file)?;
    println!(
        "action: value {} over {} segments ({} flagged), wrote {}",
        fmt_rate(report.value),
        report.per_segment.len(),
        report.flags.len(),
        file.display()
    );
    Ok(())
}

/// Reads a trajectory CSV shaped like the `walk`/`bm` output: a `t` column
/// followed by one column per representation coordinate.
fn read_curve_csv(m: &ManifoldModel, path: &Path) -> Result<Curve, Failure> {
    let invalid = |msg: String| Failure::Validation(vec![msg]);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| invalid(format!("input: {e}")))?;
    let width = m.repr_len();
    let headers = rdr.headers().map_err(|e| invalid(format!("input: {e}")))?;
    if headers.len() != width + 1 {
        return Err(invalid(format!(
            "input: expected {} columns (t plus {} coordinates), found {}",
            width + 1,
            width,
            headers.len()
        )));
    }
    let mut times = Vec::new();
    let mut points = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| invalid(format!("input: {e}")))?;
        let line = i + 2;
        let mut row = Vec::with_capacity(width + 1);
        for j in 0..=width {
            let tok = record.get(j).unwrap_or("");
            row.push(
                tok.parse::<f64>()
                    .map_err(|_| {
                        invalid(format!("input: line {line}: `{tok}` is not a number"))
                    })?,
            );
        }
        times.push(row[0]);
        points.push(
            m.point(row[1..].to_vec())
                .map_err(|e| invalid(format!("input: line {line}: {e}")))?,
        );
    }
    Curve::new(m, times, points).map_err(|e| invalid(format!("input: {e}")))
}

fn run_cramer(r: Resolved) -> Result<(), Failure> {
    let model = r.model.expect("validated");
    let target = r.target.expect("validated");
    let report = cramer_rate(&model, &r.x0, &target, r.max_geodesics)?;
    let file = out_file(&r.out_dir, "cramer.json")?;
    write_json(&report, &file)?;
    println!(
        "cramer: rate {} via geodesic of speed {:.6}{}, wrote {}",
        fmt_rate(report.rate),
        report.geodesic_speed,
        if report.degenerate { " (degenerate minimizer set)" } else { "" },
        file.display()
    );
    Ok(())
}

fn run_estimate(r: Resolved) -> Result<(), Failure> {
    let family = r.family.expect("validated");
    let target = r.target.expect("validated");
    let started = Instant::now();
    let experiment = EndpointExperiment {
        family: family.clone(),
        x0: r.x0.clone(),
        target: target.clone(),
        delta: r.delta,
        levels: r.levels.clone(),
        replicas: r.replicas,
        seed: r.seed,
    };
    let estimate = estimate_endpoint_rate(&experiment)?;
    let theory = match r.theory {
        Some(t) => t,
        None => cramer_rate(&RateModel::walk(family), &r.x0, &target, r.max_geodesics)?.rate,
    };
    let echo = serde_json::json!({
        "command": "estimate",
        "manifold": r.manifold_spec,
        "family": r.family_spec,
        "x0": r.x0.coords().as_slice(),
        "target": target.coords().as_slice(),
        "delta": r.delta,
        "levels": r.levels,
        "replicas": r.replicas,
        "seed": r.seed,
        "tolerance": r.tolerance,
    });
    let report = ExperimentReport::new(echo, vec![estimate.clone()], theory, r.tolerance, started);
    let csv_path = out_file(&r.out_dir, "estimate.csv")?;
    estimate.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    let json_path = out_file(&r.out_dir, "estimate.json")?;
    persist_report(&report, &json_path)?;
    println!(
        "estimate: fitted {:.6} +- {:.6}, theory {:.6}, pass={}, wrote {} and {}",
        estimate.fitted_rate,
        estimate.stderr,
        theory,
        report.pass,
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn run_exitbound(r: Resolved) -> Result<(), Failure> {
    let report =
        verify_exit_bound(&r.m, &r.x0, &r.grid, r.l, r.eps, r.replicas, r.dt, r.seed)?;
    let file = out_file(&r.out_dir, "exitbound.json")?;
    write_json(&report, &file)?;
    let holds = report.points.iter().filter(|p| p.holds).count();
    let worst =
        report.points.iter().map(|p| p.upper_confidence / p.bound).fold(0.0f64, f64::max);
    println!(
        "exitbound: {}/{} grid points hold (worst ucl/bound {:.3}), wrote {}",
        holds,
        report.points.len(),
        worst,
        file.display()
    );
    Ok(())
}

fn run_semigroup(r: Resolved) -> Result<(), Failure> {
    let model = r.model.expect("validated");
    let value = match r.field {
        FieldSpec::NegSq => {
            let center = r.x0.clone();
            let payoff = FnField(move |m: &ManifoldModel, y: &Point| {
                let d = m.distance(&center, y);
                -(d * d)
            });
            variational_semigroup(&model, &payoff, r.t, &r.x0, r.segments)?
        }
        FieldSpec::Coord(i) => {
            let payoff = FnField(move |_: &ManifoldModel, y: &Point| y.coords()[i]);
            variational_semigroup(&model, &payoff, r.t, &r.x0, r.segments)?
        }
    };
    let file = out_file(&r.out_dir, "semigroup.json")?;
    write_json(&value, &file)?;
    println!(
        "semigroup: value {:.6} at t={} over {} segments (converged={}), wrote {}",
        value.value,
        r.t,
        r.segments,
        value.converged,
        file.display()
    );
    Ok(())
}

fn run_conjugate(r: Resolved) -> Result<(), Failure> {
    let family = r.family.expect("validated");
    let v = r.v.expect("validated");
    let speed = r.m.norm(&v);
    let out = family.legendre(&r.x0, &v)?;
    if out.attained {
        println!(
            "conjugate: value {} at speed {:.6} ({} newton iterations)",
            fmt_rate(out.value),
            speed,
            out.iterations
        );
    } else {
        println!(
            "conjugate: value infinite at speed {:.6} (beyond the mean range, max speed {:.6})",
            speed,
            family.max_speed()
        );
    }
    Ok(())
}
