//! `krflow` command line: `run`, `certify`, `plot`, `replay`.
//!
//! Exit codes: 0 converged or certified, 1 certificate failed, 2 horizon
//! reached, 3 degenerate, 64 usage, 65 bad trace data, 66 unreadable input,
//! 73 output not writable.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{bump, certify_theorem, default_family, InitialPotential};
use crate::flow::{run, FlowConfig, Stepper, Termination};
use crate::geometry::{make_background, resample, BackgroundGeometry, Profile};
use crate::grid::Field;
use crate::io::{self, InitialSpec, IoError, OutputPaths, RunManifest};
use crate::sampling::random_valid_potential;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_HORIZON: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_CANT_CREATE: i32 = 73;

/// Overrides the default output directory.
pub const OUT_ENV: &str = "KRFLOW_OUT";
const DEFAULT_OUT: &str = "krflow-out";

#[derive(Debug, Parser)]
#[command(
    name = "krflow",
    version,
    about = "Kähler–Ricci flow on S¹-invariant metrics on CP¹"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the flow from one initial potential.
    Run(RunArgs),
    /// Run a family of flows and check inf F = inf ν - (1/V)∫h_ωρ₀.
    Certify(CertifyArgs),
    /// Emit a gnuplot script for a trace CSV.
    Plot(PlotArgs),
    /// Re-run the flow recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Number of grid nodes.
    #[arg(long, default_value_t = 256)]
    grid: usize,
    /// `round`, `cubic:A`, `lorentzian:A:C:W`, or a JSON file {sigma, values} of ψ.
    #[arg(long, default_value = "round")]
    background: String,
    /// Initial time step.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = FlowConfig::default().dt_max)]
    dt_max: f64,
    #[arg(long, default_value_t = 30.0)]
    t_max: f64,
    /// Stop once sup|∇u|² falls below this.
    #[arg(long, default_value_t = 1e-8)]
    conv_tol: f64,
    #[arg(long, value_parser = parse_stepper, default_value = "semi-implicit")]
    stepper: Stepper,
    /// Output directory (default: $KRFLOW_OUT, else ./krflow-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// `zero`, `bump:AMP`, `random`, or a JSON file {sigma, values} of φ.
    #[arg(long, default_value = "zero")]
    phi0: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accepted steps between snapshots (0 disables).
    #[arg(long, default_value_t = FlowConfig::default().snapshot_every)]
    snapshot_every: usize,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// `default` or a JSON array of {label?, sigma, values}.
    #[arg(long, default_value = "default")]
    family: String,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Script destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (default: the one recorded in the manifest).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_stepper(s: &str) -> Result<Stepper, String> {
    match s {
        "semi-implicit" => Ok(Stepper::SemiImplicit),
        "explicit-rk4" | "rk4" => Ok(Stepper::ExplicitRk4),
        _ => Err(format!(
            "unknown stepper {s:?}; use semi-implicit or explicit-rk4"
        )),
    }
}

/// A failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Write { .. } => EXIT_CANT_CREATE,
            IoError::Read { .. } | IoError::Malformed { .. } => EXIT_NO_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<i32, Failure>;

pub fn run_from_env() -> i32 {
    main_with_args(std::env::args_os())
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("krflow: {}", f.message);
            f.code
        }
    }
}

fn number(s: &str, what: &str) -> Result<f64, Failure> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Failure::usage(format!("invalid {what} {s:?}")))
}

fn parse_background(spec: &str) -> Result<Profile, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["round"] => Ok(Profile::Round),
        ["cubic", a] => Ok(Profile::Cubic {
            amplitude: number(a, "cubic amplitude")?,
        }),
        ["lorentzian", a, c, w] => Ok(Profile::Lorentzian {
            amplitude: number(a, "lorentzian amplitude")?,
            center: number(c, "lorentzian center")?,
            width: number(w, "lorentzian width")?,
        }),
        _ if Path::new(spec).extension().is_some() || Path::new(spec).exists() => {
            let f = io::read_sampled(Path::new(spec))?;
            Ok(Profile::Sampled {
                sigma: f.sigma,
                values: f.values,
            })
        }
        _ => Err(Failure::usage(format!("unknown background {spec:?}"))),
    }
}

fn parse_initial(spec: &str) -> Result<InitialSpec, Failure> {
    match spec.split_once(':') {
        None if spec == "zero" => Ok(InitialSpec::Zero),
        None if spec == "random" => Ok(InitialSpec::Random),
        Some(("bump", a)) => Ok(InitialSpec::Bump {
            amplitude: number(a, "bump amplitude")?,
        }),
        _ if Path::new(spec).extension().is_some() || Path::new(spec).exists() => {
            let f = io::read_sampled(Path::new(spec))?;
            Ok(InitialSpec::Sampled {
                sigma: f.sigma,
                values: f.values,
            })
        }
        _ => Err(Failure::usage(format!(
            "unknown initial potential {spec:?}"
        ))),
    }
}

fn build_background(grid: usize, profile: Profile) -> Result<BackgroundGeometry, Failure> {
    make_background(grid, profile).map_err(|e| Failure::usage(format!("background rejected: {e}")))
}

fn initial_potential(
    bg: &BackgroundGeometry,
    spec: &InitialSpec,
    seed: u64,
) -> Result<Field, Failure> {
    match spec {
        InitialSpec::Zero => Ok(Field::zeros(bg.grid().len())),
        InitialSpec::Bump { amplitude } => Ok(bump(bg, *amplitude).phi),
        InitialSpec::Random => Ok(random_valid_potential(
            bg,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )),
        InitialSpec::Sampled { sigma, values } => {
            resample(bg.grid(), sigma, values).map_err(|e| Failure {
                code: EXIT_NO_INPUT,
                message: format!("initial potential rejected: {e}"),
            })
        }
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn flow_config(c: &CommonArgs, snapshot_every: usize) -> Result<FlowConfig, Failure> {
    let cfg = FlowConfig {
        dt_init: c.dt,
        dt_max: c.dt_max.max(c.dt),
        t_max: c.t_max,
        conv_tol: c.conv_tol,
        snapshot_every,
        stepper: c.stepper,
        ..FlowConfig::default()
    };
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> Outcome {
    let cfg = flow_config(&a.common, a.snapshot_every)?;
    let background = parse_background(&a.common.background)?;
    let initial = parse_initial(&a.phi0)?;
    let manifest = RunManifest {
        version: io::VERSION.into(),
        grid: a.common.grid,
        seed: a.seed,
        config: cfg,
        background,
        background_source: a.common.background.clone(),
        initial,
        initial_source: a.phi0.clone(),
        outputs: OutputPaths::in_dir(&out_dir(a.common.out)),
    };
    execute(&manifest)
}

fn cmd_replay(a: ReplayArgs) -> Outcome {
    let mut manifest = io::read_manifest(&a.manifest)?;
    if let Some(dir) = a.out {
        manifest.outputs = OutputPaths::in_dir(&dir);
    }
    manifest
        .config
        .validate()
        .map_err(|e| Failure::usage(format!("manifest: {e}")))?;
    execute(&manifest)
}

/// Runs the flow described by `m` and writes trace, snapshots and manifest.
fn execute(m: &RunManifest) -> Outcome {
    let bg = build_background(m.grid, m.background.clone())?;
    let phi0 = initial_potential(&bg, &m.initial, m.seed)?;
    let trace = run(&bg, &phi0, &m.config).map_err(|e| Failure::usage(e.to_string()))?;
    io::write_text(&m.outputs.trace, &io::trace_csv(&trace))?;
    io::write_snapshots(&m.outputs.snapshots, bg.grid(), &trace)?;
    io::write_manifest(m)?;
    match trace.last() {
        Some(r) => println!(
            "{:?} at t = {:.6}: sup|grad u|^2 = {:.3e}, nu = {:.12e}, F = {:.12e}",
            trace.termination, r.t, r.sup_grad_u_sq, r.nu, r.f
        ),
        None => println!("Degenerate: initial potential is not a Kähler potential"),
    }
    Ok(match trace.termination {
        Termination::Converged => EXIT_OK,
        Termination::Horizon => EXIT_HORIZON,
        Termination::Degenerate => EXIT_DEGENERATE,
    })
}

fn load_family(bg: &BackgroundGeometry, spec: &str) -> Result<Vec<InitialPotential>, Failure> {
    if spec == "default" {
        return Ok(default_family(bg));
    }
    let members = io::read_family(Path::new(spec))?;
    members
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let phi = resample(bg.grid(), &m.sigma, &m.values).map_err(|e| Failure {
                code: EXIT_NO_INPUT,
                message: format!("family member {i}: {e}"),
            })?;
            Ok(InitialPotential {
                label: m.label.unwrap_or_else(|| format!("member{i}")),
                phi,
            })
        })
        .collect()
}

fn cmd_certify(a: CertifyArgs) -> Outcome {
    let cfg = flow_config(&a.common, 0)?;
    let background = parse_background(&a.common.background)?;
    let bg = build_background(a.common.grid, background)?;
    let family = load_family(&bg, &a.family)?;
    let report = certify_theorem(&bg, &family, &cfg).map_err(|e| Failure::usage(e.to_string()))?;
    let dir = out_dir(a.common.out);
    io::write_text(
        &dir.join("certificate.json"),
        &io::certificate_json(&report),
    )?;
    io::write_text(&dir.join("certificate.csv"), &io::certificate_csv(&report))?;
    for d in &report.diagnostics {
        eprintln!("krflow: {d}");
    }
    match report.residual {
        Some(r) => println!(
            "residual {r:.3e} (tolerance {:.0e}), {} of {} rows converged: {}",
            report.residual_tol,
            report.converged_rows,
            report.rows.len(),
            if report.passed { "PASS" } else { "FAIL" }
        ),
        None => println!("no converged rows: FAIL"),
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_plot(a: PlotArgs) -> Outcome {
    let csv = std::fs::read_to_string(&a.trace).map_err(|e| Failure {
        code: EXIT_NO_INPUT,
        message: format!("cannot read {}: {e}", a.trace.display()),
    })?;
    let script = io::plot_script(&csv, &a.trace.to_string_lossy()).map_err(|e| Failure {
        code: EXIT_DATA,
        message: e.to_string(),
    })?;
    match a.out {
        Some(path) => io::write_text(&path, &script)?,
        None => print!("{script}"),
    }
    Ok(EXIT_OK)
}
