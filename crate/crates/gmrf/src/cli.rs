//! The `gmrf` command-line front end.
//!
//! Subcommands: `sample`, `learn`, `reconstruct`, `evaluate`, `sweep-p` and
//! `analyze`. Data goes to `--out` files (each accompanied by a
//! `<file>.manifest` describing the run) or to standard output; diagnostics
//! and errors go to standard error. Exit status is 0 on success, 1 on usage
//! errors and 2 on data or convergence errors. Every randomized subcommand
//! takes `--seed` and is bit-reproducible given it. The `GGM_THREADS`
//! environment variable caps internal parallelism (default: all cores).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Once;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use crate::analysis::{self, AnalysisSetup, McConfig, SweepVariable};
use crate::error::Error;
use crate::evaluation::{self, MaskMode, MaskSpec, RefitMode, SweepConfig};
use crate::ggm::{self, Observation};
use crate::inference::{self, MfeConfig};
use crate::io::{self, RunManifest};
use crate::learning::{self, LearnConfig};

#[derive(Parser)]
#[command(
    name = "gmrf",
    version,
    about = "Gaussian Markov random field reconstruction of missing observations"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw exact samples from the model into a CSV matrix.
    Sample(SampleArgs),
    /// Fit model parameters to complete observations.
    Learn(LearnArgs),
    /// Reconstruct one observation's missing entries.
    Reconstruct(ReconstructArgs),
    /// Mask one observation, reconstruct it and score the error.
    Evaluate(EvaluateArgs),
    /// Tabulate reconstruction error against the missing probability.
    #[command(name = "sweep-p")]
    SweepP(SweepPArgs),
    /// Closed-form error analysis of the fully-connected model.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// Graph file (`n`/`e` records) or road-network file (`road`/`x`
    /// records).
    #[arg(long)]
    graph: PathBuf,
    /// Parameter file (`xi`, `j`, `h ...`).
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Sample matrix CSV (header x0,...,x{n-1}).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    lambda_h: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda_xi: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda_j: f64,
    /// Gradient max-abs stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Recorded in the manifest; the fit itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the fit report (convergence, iterations, gradient) here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output parameter file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Mfe,
    Exact,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// Observation CSV; the first data row is used.
    #[arg(long)]
    observation: PathBuf,
    /// Mask file listing missing vertex indices, one per line.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverArg::Mfe)]
    solver: SolverArg,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
    /// Output CSV row; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// Ground-truth observation CSV; the first data row is used.
    #[arg(long)]
    truth: PathBuf,
    /// Missing probability for a random mask (capped at 0.999).
    #[arg(long, conflicts_with = "mask", allow_negative_numbers = true)]
    p: Option<f64>,
    /// Explicit mask file instead of a random mask.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    solver: SolverArg,
    /// Also write `vertex,value,bin` quantized reconstruction CSV here.
    #[arg(long)]
    quantized: Option<PathBuf>,
    /// Output score report; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepPArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Parameter file; required unless --refit loo.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Grid as `a:b:step` or a comma-separated list.
    #[arg(long)]
    p_grid: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = RefitArg::None)]
    refit: RefitArg,
    #[arg(long, default_value_t = 1e-3)]
    lambda_h: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda_xi: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda_j: f64,
    /// Output CSV `p,mse_mean,mse_stderr,trials`; standard output when
    /// omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RefitArg {
    None,
    Loo,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, allow_negative_numbers = true)]
    j: f64,
    #[arg(long, allow_negative_numbers = true)]
    xi: f64,
    /// Reconstruction-model coupling; defaults to --j (ignored under
    /// `--sweep r`, where J0 = J + r per grid point).
    #[arg(long, allow_negative_numbers = true)]
    j0: Option<f64>,
    /// Reconstruction-model variance scale; defaults to --xi.
    #[arg(long, allow_negative_numbers = true)]
    xi0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu_h: f64,
    #[arg(long, allow_negative_numbers = true)]
    sigma_h: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu_eps: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    sigma_eps: f64,
    /// Fixed missing rate, used when sweeping r.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    p: f64,
    /// Sweep variable: `r` (coupling error, J0 = J + r) or `p`.
    #[arg(long)]
    sweep: SweepArg,
    /// Grid as `a:b:step` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    /// System size for the optional Monte Carlo column.
    #[arg(long)]
    mc_n: Option<usize>,
    /// Trial count for the optional Monte Carlo column.
    #[arg(long)]
    mc_trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV `x,analytic_E[,mc_E,mc_stderr]`; standard output when
    /// omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepArg {
    R,
    P,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type RunResult = std::result::Result<(), Failure>;

fn init_threads() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        if let Ok(v) = std::env::var("GGM_THREADS") {
            if let Ok(k) = v.parse::<usize>() {
                if k >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(k)
                        .build_global();
                }
            }
        }
    });
}

/// Parses the command line and runs the chosen subcommand, returning the
/// process exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let out = match cli.cmd {
        Command::Sample(a) => run_sample(a),
        Command::Learn(a) => run_learn(a),
        Command::Reconstruct(a) => run_reconstruct(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::SweepP(a) => run_sweep_p(a),
        Command::Analyze(a) => run_analyze(a),
    };
    match out {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Inclusive `a:b:step` grids, or comma-separated values.
fn parse_grid(spec: &str) -> std::result::Result<Vec<f64>, Failure> {
    let usage = |msg: String| Err(Failure::Usage(msg));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return usage(format!("grid {spec:?} must be a:b:step"));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Failure::Usage(format!("grid {spec:?} has a non-numeric part")))?;
        let (a, b, step) = (nums[0], nums[1], nums[2]);
        if !step.is_finite() || step <= 0.0 || b < a {
            return usage(format!("grid {spec:?} needs b >= a and step > 0"));
        }
        let count = ((b - a) / step + 1.0 + 1e-9).floor() as usize;
        return Ok((0..count).map(|k| a + k as f64 * step).collect());
    }
    let vals: Vec<f64> = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("grid {spec:?} has a non-numeric entry")))?;
    if vals.is_empty() {
        return usage("grid is empty".into());
    }
    Ok(vals)
}

/// Missing probabilities are capped at 0.999 so random masks keep at least a
/// chance of an observed vertex.
fn cap_p(p: f64) -> f64 {
    if p > 0.999 {
        eprintln!("note: capping missing probability {p} at 0.999");
        0.999
    } else {
        p
    }
}

fn emit(out: Option<&Path>, contents: &str, manifest: &RunManifest) -> RunResult {
    match out {
        Some(path) => {
            io::write_output(path, contents, manifest)?;
            Ok(())
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn run_sample(a: SampleArgs) -> RunResult {
    let graph = io::load_graph(&a.graph)?;
    let params = io::parse_params_file(&a.params)?;
    let matrix = ggm::sample(&graph, &params, a.count, a.seed)?;
    let mut manifest = RunManifest::new("sample");
    manifest.seed = Some(a.seed);
    manifest.flag("count", a.count);
    manifest.input(&a.graph)?;
    manifest.input(&a.params)?;
    emit(a.out.as_deref(), &io::matrix_to_csv(&matrix), &manifest)
}

fn run_learn(a: LearnArgs) -> RunResult {
    let graph = io::load_graph(&a.graph)?;
    let data = io::parse_matrix_file(&a.data)?;
    let cfg = LearnConfig {
        lambda_h: a.lambda_h,
        lambda_xi: a.lambda_xi,
        lambda_j: a.lambda_j,
        grad_tolerance: a.tol,
        max_iterations: a.max_iter,
        ..LearnConfig::default()
    };
    let em = learning::empirical_moments(&data, &graph)?;
    let outcome = learning::fit_moments(&graph, &em, &cfg, learning::default_init(&em))?;
    if !outcome.report.converged {
        eprintln!(
            "warning: fit stopped at gradient {} after {} iterations",
            outcome.report.grad_max_abs, outcome.report.iterations
        );
    }
    let mut manifest = RunManifest::new("learn");
    manifest.seed = Some(a.seed);
    manifest
        .flag("lambda-h", a.lambda_h)
        .flag("lambda-xi", a.lambda_xi)
        .flag("lambda-j", a.lambda_j)
        .flag("tol", a.tol)
        .flag("max-iter", a.max_iter);
    manifest.input(&a.graph)?;
    manifest.input(&a.data)?;
    if let Some(report_path) = &a.report {
        let report = format!(
            "converged {}\niterations {}\ngrad_max_abs {}\nnll {}\n",
            outcome.report.converged,
            outcome.report.iterations,
            io::fmt_float(outcome.report.grad_max_abs),
            io::fmt_float(outcome.report.nll),
        );
        io::write_output(report_path, &report, &manifest)?;
    }
    emit(
        a.out.as_deref(),
        &io::params_to_string(&outcome.params),
        &manifest,
    )
}

fn first_row(path: &Path) -> std::result::Result<DVector<f64>, Failure> {
    let m = io::parse_matrix_file(path)?;
    Ok(DVector::from_fn(m.ncols(), |i, _| m[(0, i)]))
}

fn run_reconstruct(a: ReconstructArgs) -> RunResult {
    let graph = io::load_graph(&a.graph)?;
    let params = io::parse_params_file(&a.params)?;
    let values = first_row(&a.observation)?;
    let missing = io::parse_mask_file(&a.mask)?;
    let obs = Observation::new(values, missing)?;
    let result = match a.solver {
        SolverArg::Mfe => {
            let cfg = MfeConfig {
                tolerance: a.tol,
                max_sweeps: a.max_sweeps,
                ..MfeConfig::default()
            };
            inference::reconstruct_mfe(&graph, &params, &obs, &cfg)?
        }
        SolverArg::Exact => inference::reconstruct_exact(&graph, &params, &obs)?,
    };
    eprintln!(
        "sweeps {}\nresidual {}\nconverged {}",
        result.sweeps_used,
        io::fmt_float(result.residual),
        result.converged
    );
    let mut row = nalgebra::DMatrix::zeros(1, result.values.len());
    row.row_mut(0).copy_from(&result.values.transpose());
    let mut manifest = RunManifest::new("reconstruct");
    manifest
        .flag(
            "solver",
            if a.solver == SolverArg::Mfe {
                "mfe"
            } else {
                "exact"
            },
        )
        .flag("tol", a.tol)
        .flag("max-sweeps", a.max_sweeps);
    manifest.input(&a.graph)?;
    manifest.input(&a.params)?;
    manifest.input(&a.observation)?;
    manifest.input(&a.mask)?;
    emit(a.out.as_deref(), &io::matrix_to_csv(&row), &manifest)?;
    if !result.converged {
        return Err(Failure::Data(Error::NonConvergence(format!(
            "{} sweeps left residual {}",
            result.sweeps_used, result.residual
        ))));
    }
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> RunResult {
    let graph = io::load_graph(&a.graph)?;
    let params = io::parse_params_file(&a.params)?;
    let truth = first_row(&a.truth)?;
    let mode = match (&a.mask, a.p) {
        (Some(path), None) => MaskMode::Explicit(io::parse_mask_file(path)?),
        (None, Some(p)) => MaskMode::Probability(cap_p(p)),
        (None, None) => return Err(Failure::Usage("evaluate needs either --p or --mask".into())),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let draw = evaluation::apply_mask(&truth, &MaskSpec { mode, seed: a.seed })?;
    if draw.redraws > 0 {
        eprintln!("note: mask redrawn {} time(s)", draw.redraws);
    }
    let obs = &draw.observation;
    let result = match a.solver {
        SolverArg::Mfe => inference::reconstruct_mfe(&graph, &params, obs, &MfeConfig::default())?,
        SolverArg::Exact => inference::reconstruct_exact(&graph, &params, obs)?,
    };
    let err = evaluation::mse(&truth, &result, obs.missing())?;
    let corr = evaluation::correlation(&truth, &result.values, obs.missing());
    let mut report = String::new();
    report.push_str(&format!("mse {}\n", io::fmt_float(err)));
    match corr {
        Ok(c) => report.push_str(&format!("correlation {}\n", io::fmt_float(c))),
        Err(_) => report.push_str("correlation -\n"),
    }
    report.push_str(&format!("missing {}\n", obs.missing().len()));
    report.push_str(&format!("redraws {}\n", draw.redraws));

    let mut manifest = RunManifest::new("evaluate");
    manifest.seed = Some(a.seed);
    if let Some(p) = a.p {
        manifest.flag("p", p);
    }
    manifest.input(&a.graph)?;
    manifest.input(&a.params)?;
    manifest.input(&a.truth)?;
    if let Some(mask) = &a.mask {
        manifest.input(mask)?;
    }
    if let Some(qpath) = &a.quantized {
        io::write_output(qpath, &io::quantized_to_csv(&result.values), &manifest)?;
    }
    emit(a.out.as_deref(), &report, &manifest)
}

fn run_sweep_p(a: SweepPArgs) -> RunResult {
    let graph = io::load_graph(&a.graph)?;
    let data = io::parse_matrix_file(&a.data)?;
    let refit = match a.refit {
        RefitArg::None => RefitMode::None,
        RefitArg::Loo => RefitMode::LeaveOneOut,
    };
    let params = match (&a.params, refit) {
        (Some(path), _) => io::parse_params_file(path)?,
        (None, RefitMode::LeaveOneOut) => {
            // Placeholder satisfying the interface; every trial uses a refit.
            let em = learning::empirical_moments(&data, &graph)?;
            learning::default_init(&em)
        }
        (None, RefitMode::None) => {
            return Err(Failure::Usage(
                "sweep-p needs --params unless --refit loo".into(),
            ))
        }
    };
    let p_grid: Vec<f64> = parse_grid(&a.p_grid)?.into_iter().map(cap_p).collect();
    let cfg = SweepConfig {
        p_grid,
        trials_per_p: a.trials,
        seed: a.seed,
        refit,
        learn: LearnConfig {
            lambda_h: a.lambda_h,
            lambda_xi: a.lambda_xi,
            lambda_j: a.lambda_j,
            ..LearnConfig::default()
        },
    };
    let result = evaluation::sweep_p(&graph, &params, &data, &cfg)?;
    let mut manifest = RunManifest::new("sweep-p");
    manifest.seed = Some(a.seed);
    manifest
        .flag("p-grid", &a.p_grid)
        .flag("trials", a.trials)
        .flag(
            "refit",
            if refit == RefitMode::None {
                "none"
            } else {
                "loo"
            },
        );
    manifest.input(&a.graph)?;
    manifest.input(&a.data)?;
    if let Some(params_path) = &a.params {
        manifest.input(params_path)?;
    }
    emit(a.out.as_deref(), &io::sweep_to_csv(&result), &manifest)
}

fn run_analyze(a: AnalyzeArgs) -> RunResult {
    let setup = AnalysisSetup {
        j: a.j,
        xi: a.xi,
        j0: a.j0.unwrap_or(a.j),
        xi0: a.xi0.unwrap_or(a.xi),
        mu_h: a.mu_h,
        sigma_h: a.sigma_h,
        mu_eps: a.mu_eps,
        sigma_eps: a.sigma_eps,
        p: a.p,
    };
    let variable = match a.sweep {
        SweepArg::R => SweepVariable::InteractionError,
        SweepArg::P => SweepVariable::MissingRate,
    };
    let grid = parse_grid(&a.grid)?;
    let mc = match (a.mc_n, a.mc_trials) {
        (Some(n), Some(trials)) => Some(McConfig {
            n,
            trials,
            seed: a.seed,
        }),
        (None, None) => None,
        _ => {
            return Err(Failure::Usage(
                "--mc-n and --mc-trials must be given together".into(),
            ))
        }
    };
    let curve = analysis::curve(&setup, variable, &grid, mc.as_ref())?;
    let mut manifest = RunManifest::new("analyze");
    manifest.seed = Some(a.seed);
    manifest
        .flag("j", a.j)
        .flag("xi", a.xi)
        .flag("j0", setup.j0)
        .flag("xi0", setup.xi0)
        .flag("mu-h", a.mu_h)
        .flag("sigma-h", a.sigma_h)
        .flag("mu-eps", a.mu_eps)
        .flag("sigma-eps", a.sigma_eps)
        .flag("p", a.p)
        .flag("sweep", if a.sweep == SweepArg::R { "r" } else { "p" })
        .flag("grid", &a.grid);
    if let Some(cfg) = &mc {
        manifest.flag("mc-n", cfg.n).flag("mc-trials", cfg.trials);
    }
    emit(a.out.as_deref(), &io::curve_to_csv(&curve), &manifest)
}
