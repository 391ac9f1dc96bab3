//! Command-line front end.
//!
//! Exit codes: 0 success, 1 solver failure, 2 I/O or argument error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::correspondences::{load, save, CorrespondenceSet};
use crate::error::Error;
use crate::fig6::{run_fig6, to_csv, Mode};
use crate::geometry::{euler_to_matrix, EulerZXZ, GbrTransform};
use crate::multiview::{integrate_multiview, PairInput};
use crate::ransac::{ransac_pair, InlierMasks, RansacConfig};
use crate::solvers::{direct_optimize_all, two_step_solve, LmConfig, PairSolution, SolveOptions};
use crate::synth::{generate, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "reflpose", version, about = "Relative pose from pixel, 3D and reflection correspondences")]
pub struct Cli {
    /// Master RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout if omitted).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Only report errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic correspondence file and a ground-truth sidecar.
    Synth(SynthArgs),
    /// Two-step (or direct) solve of one correspondence file.
    SolvePair(SolveArgs),
    /// Robust solve of one correspondence file.
    Ransac(RansacArgs),
    /// Failure rate against the number of correspondences, as CSV.
    Fig6(Fig6Args),
    /// Joint refinement of pairwise solutions from a directory.
    Integrate(IntegrateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub n_pixel: usize,
    #[arg(long, default_value_t = 20)]
    pub n_normal: usize,
    #[arg(long, default_value_t = 20)]
    pub n_reflection: usize,
    /// Normal noise per tangent axis, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub noise_normal_deg: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_pixel: f64,
    #[arg(long, default_value_t = 0.0)]
    pub outlier_fraction: f64,
    /// Ground-truth sidecar path (default: `<output stem>.truth.json`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    TwoStep,
    Direct,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Correspondence JSON file.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::TwoStep)]
    pub method: Method,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    /// Reflection inlier threshold of the eta scan, degrees.
    #[arg(long, default_value_t = 5.0)]
    pub reflection_threshold_deg: f64,
    /// Ground-truth sidecar; the rotation error is reported on stderr.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RansacArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 0.01)]
    pub pixel_threshold: f64,
    /// Degrees.
    #[arg(long, default_value_t = 5.0)]
    pub normal_threshold_deg: f64,
    /// Degrees.
    #[arg(long, default_value_t = 5.0)]
    pub reflection_threshold_deg: f64,
    #[arg(long, default_value_t = 0.99)]
    pub confidence: f64,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Fig6Args {
    /// `g21`: judge G21 with equal pixel/3D counts; `rotation`: judge R21
    /// with 4 + 4 base and varying reflection counts.
    #[arg(long)]
    pub mode: Mode,
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6")]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
}

impl clap::ValueEnum for Mode {
    fn value_variants<'a>() -> &'a [Self] {
        &[Mode::G21, Mode::Rotation]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Mode::G21 => "g21",
            Mode::Rotation => "rotation",
        }))
    }
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    /// Directory of pair files `{"i", "j", "solution", "inliers"}`.
    pub dir: PathBuf,
}

/// Ground truth written next to a synthetic correspondence file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub theta: f64,
    pub phi: f64,
    pub eta: f64,
    pub g1: GbrTransform,
    pub g2: GbrTransform,
    pub t: [f64; 2],
}

#[derive(Debug, Serialize)]
struct RansacOutput<'a> {
    solution: &'a PairSolution,
    inliers: &'a InlierMasks,
    iterations: usize,
}

enum Failure {
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::InvalidField { .. } | Error::InvalidConfig(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Failure::Usage(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn read_truth(path: &Path) -> Result<TruthSidecar, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn report_error(truth: &Option<PathBuf>, sol: &PairSolution, quiet: bool) -> Result<(), Failure> {
    if let Some(p) = truth {
        let t = read_truth(p)?;
        let r = euler_to_matrix(&EulerZXZ::new(t.theta, t.phi, t.eta));
        let err = sol.r21.angle_to(&r).to_degrees();
        if !quiet {
            eprintln!("rotation_error_deg: {err:.9}");
        }
    }
    Ok(())
}

fn sidecar_path(args: &SynthArgs, output: &Option<PathBuf>) -> Option<PathBuf> {
    args.truth.clone().or_else(|| {
        output.as_ref().map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            p.with_file_name(format!("{stem}.truth.json"))
        })
    })
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        n_pixel: args.n_pixel,
        n_normal: args.n_normal,
        n_reflection: args.n_reflection,
        noise_normal_sigma: args.noise_normal_deg.to_radians(),
        noise_pixel_sigma: args.noise_pixel,
        outlier_fraction: args.outlier_fraction,
        rng_seed: cli.seed,
        ..Default::default()
    };
    let inst = generate(&cfg)?;
    match &cli.output {
        Some(p) => save(&inst.observed, p)?,
        None => emit(&None, &(inst.observed.to_json_string() + "\n"))?,
    }
    let t = &inst.truth;
    let sidecar = TruthSidecar { theta: t.theta, phi: t.phi, eta: t.eta, g1: t.g1, g2: t.g2, t: t.t };
    match sidecar_path(args, &cli.output) {
        Some(p) => fs::write(&p, to_json(&sidecar)?).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => log::warn!("no --output or --truth given; ground truth not written"),
    }
    Ok(())
}

fn solve_pair(cli: &Cli, args: &SolveArgs) -> Result<(), Failure> {
    let set: CorrespondenceSet = load(&args.input)?;
    let opts = SolveOptions {
        restarts: args.restarts,
        seed: cli.seed,
        reflection_threshold: args.reflection_threshold_deg.to_radians(),
        ..Default::default()
    };
    let sol = match args.method {
        Method::TwoStep => two_step_solve(&set, &opts)?,
        Method::Direct => direct_optimize_all(&set, &opts)?,
    };
    emit(&cli.output, &to_json(&sol)?)?;
    report_error(&args.truth, &sol, cli.quiet)?;
    if !sol.converged {
        return Err(Failure::Solver(format!("did not converge (final cost {:e})", sol.final_cost)));
    }
    Ok(())
}

fn ransac(cli: &Cli, args: &RansacArgs) -> Result<(), Failure> {
    let set = load(&args.input)?;
    let cfg = RansacConfig {
        max_iterations: args.max_iterations,
        pixel_inlier_threshold: args.pixel_threshold,
        normal_inlier_threshold: args.normal_threshold_deg.to_radians(),
        reflection_inlier_threshold: args.reflection_threshold_deg.to_radians(),
        confidence: args.confidence,
        rng_seed: cli.seed,
    };
    let res = ransac_pair(&set, &cfg, &SolveOptions { seed: cli.seed, ..Default::default() })?;
    let out = RansacOutput { solution: &res.solution, inliers: &res.inliers, iterations: res.iterations };
    emit(&cli.output, &to_json(&out)?)?;
    report_error(&args.truth, &res.solution, cli.quiet)?;
    Ok(())
}

fn fig6(cli: &Cli, args: &Fig6Args) -> Result<(), Failure> {
    let opts = SolveOptions { restarts: args.restarts, ..Default::default() };
    let rows = run_fig6(args.trials, &args.counts, args.mode, &SynthConfig::default(), &opts, cli.seed)?;
    emit(&cli.output, &to_csv(&rows))
}

fn integrate(cli: &Cli, args: &IntegrateArgs) -> Result<(), Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(&args.dir)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let pairs = files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<PairInput>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if pairs.is_empty() {
        return Err(Failure::Usage(format!("no pair files in {}", args.dir.display())));
    }
    let graph = integrate_multiview(&pairs, &LmConfig::default())?;
    emit(&cli.output, &to_json(&graph)?)
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::from_env(env_logger::Env::default()).filter_level(level).try_init();

    let result = match &cli.command {
        Command::Synth(a) => synth(&cli, a),
        Command::SolvePair(a) => solve_pair(&cli, a),
        Command::Ransac(a) => ransac(&cli, a),
        Command::Fig6(a) => fig6(&cli, a),
        Command::Integrate(a) => integrate(&cli, a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failure: {m}");
            EXIT_SOLVER
        }
    }
}
