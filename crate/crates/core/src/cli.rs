//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::harness::{self, Format, ResultRecord};
use crate::model::Model;
use crate::schedule::{lpqp_run, DecompositionChoice, LpqpConfig, LpqpResult, Method, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Environment variable bounding the number of instances solved at once.
pub const THREADS_ENV: &str = "LPQP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lpqp", version, about = "MAP inference for pairwise discrete graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one model, or every model in a directory.
    Solve(SolveArgs),
    /// Write a random Potts grid.
    GenPotts(GenArgs),
    /// Exact MAP by enumeration.
    BruteForce(ModelArgs),
    /// Relative scores of energies reached by competing methods.
    Score(ScoreArgs),
    /// Exact Gibbs marginals by enumeration, as JSON.
    OracleGibbs(GibbsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Uai,
    Native,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Uai => Format::Uai,
            FormatArg::Native => Format::Native,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Uniform,
    Tree,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DecompositionArg {
    Greedy,
    Grid,
}

#[derive(Debug, Clone, Copy)]
enum Rho0 {
    Auto,
    Value(f64),
}

impl FromStr for Rho0 {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Rho0::Auto);
        }
        s.parse().map(Rho0::Value).map_err(|_| format!("expected a number or `auto`, got {s:?}"))
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model file (.uai or native .json).
    #[arg(long)]
    model: PathBuf,
    /// Override the format implied by the file extension.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    input: ModelArgs,
    #[arg(long, value_enum, default_value = "uniform")]
    method: MethodArg,
    /// Initial penalty weight, or `auto`.
    #[arg(long, default_value = "auto")]
    rho0: Rho0,
    #[arg(long, default_value_t = 1.5)]
    rho_factor: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps_dc: f64,
    #[arg(long, default_value_t = 1e-4)]
    eps_rho: f64,
    /// Defaults to 1e4 times the initial weight.
    #[arg(long)]
    rho_max: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    max_outer: usize,
    #[arg(long, default_value_t = 200)]
    max_dc_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    inner_tol: f64,
    /// Inner tolerance while rho is below --loose-rho-ratio times rho0.
    #[arg(long, default_value_t = 1e-6)]
    loose_inner_tol: f64,
    #[arg(long, default_value_t = 10.0)]
    loose_rho_ratio: f64,
    #[arg(long, default_value_t = 10_000)]
    max_inner_iters: usize,
    /// Message damping for the uniform method, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Tree decomposition used by the tree method.
    #[arg(long, value_enum, default_value = "greedy")]
    decomposition: DecompositionArg,
    /// Per-iteration trace (CSV); a directory in batch mode.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Result file (JSON); a directory in batch mode.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock times in the outputs.
    #[arg(long)]
    timing: bool,
    /// Run the solver on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    size: usize,
    #[arg(long)]
    states: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long, required = true, num_args = 1.., allow_negative_numbers = true)]
    energies: Vec<f64>,
    /// Known optimal energy.
    #[arg(long, allow_negative_numbers = true)]
    optimum: Option<f64>,
}

#[derive(Debug, Args)]
struct GibbsArgs {
    #[command(flatten)]
    input: ModelArgs,
    #[arg(long)]
    temperature: f64,
}

impl ModelArgs {
    fn load(&self) -> Result<Model> {
        harness::load_model(&self.model, self.format.map(Into::into))
    }
}

impl SolveArgs {
    fn config(&self) -> LpqpConfig {
        LpqpConfig {
            method: match self.method {
                MethodArg::Uniform => Method::Uniform,
                MethodArg::Tree => Method::Tree,
            },
            rho0: match self.rho0 {
                Rho0::Auto => None,
                Rho0::Value(v) => Some(v),
            },
            rho_factor: self.rho_factor,
            eps_dc: self.eps_dc,
            eps_rho: self.eps_rho,
            rho_max: self.rho_max,
            max_outer: self.max_outer,
            max_dc_iters: self.max_dc_iters,
            inner_tol: self.inner_tol,
            loose_inner_tol: self.loose_inner_tol,
            loose_rho_ratio: self.loose_rho_ratio,
            max_inner_iters: self.max_inner_iters,
            damping: self.damping,
            seed: self.seed,
            decomposition: match self.decomposition {
                DecompositionArg::Greedy => DecompositionChoice::Greedy,
                DecompositionArg::Grid => DecompositionChoice::Grid,
            },
            parallel: !self.sequential && crate::par::AVAILABLE,
            ..LpqpConfig::default()
        }
    }
}

fn join(xs: impl IntoIterator<Item = impl ToString>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn status_code(status: Status) -> i32 {
    match status {
        Status::Converged => EXIT_OK,
        _ => EXIT_NOT_CONVERGED,
    }
}

fn solve_one(model_path: &Path, format: Option<Format>, args: &SolveArgs, trace: Option<&Path>, out: Option<&Path>) -> Result<LpqpResult> {
    let model = harness::load_model(model_path, format)?;
    let result = lpqp_run(&model, &args.config())?;
    if let Some(p) = trace {
        harness::write_text(p, &harness::trace_csv(&result.trace, args.timing))?;
    }
    if let Some(p) = out {
        harness::write_text(p, &ResultRecord::new(&result, args.timing).to_json())?;
    }
    Ok(result)
}

fn batch_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

#[cfg(feature = "parallel")]
fn run_jobs<T: Send>(jobs: &[PathBuf], threads: Option<usize>, f: impl Fn(&Path) -> T + Sync) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(|p| f(p)).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_jobs<T: Send>(jobs: &[PathBuf], _threads: Option<usize>, f: impl Fn(&Path) -> T + Sync) -> Result<Vec<T>> {
    Ok(jobs.iter().map(|p| f(p)).collect())
}

fn solve_batch(args: &SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let dir = &args.input.model;
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    let mut jobs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(p.extension().and_then(|e| e.to_str()), Some(e) if e.eq_ignore_ascii_case("uai") || e.eq_ignore_ascii_case("json"))
        })
        .collect();
    jobs.sort();
    for d in [&args.trace, &args.out].into_iter().flatten() {
        std::fs::create_dir_all(d).map_err(|source| Error::Io {
            path: d.clone(),
            source,
        })?;
    }
    let target = |d: &Option<PathBuf>, p: &Path, ext: &str| {
        d.as_ref().map(|d| d.join(p.file_stem().unwrap_or_default()).with_extension(ext))
    };
    let format = args.input.format.map(Into::into);
    let results = run_jobs(&jobs, batch_threads()?, |p| {
        solve_one(p, format, args, target(&args.trace, p, "csv").as_deref(), target(&args.out, p, "json").as_deref())
    })?;
    let mut code = EXIT_OK;
    for (p, r) in jobs.iter().zip(results) {
        let name = p.file_name().unwrap_or_default().to_string_lossy();
        match r {
            Ok(r) => {
                writeln!(out, "{name} {} {}", r.rounded_energy, r.status).ok();
                code = code.max(status_code(r.status));
            }
            Err(e) => {
                writeln!(out, "{name} error: {e}").ok();
                code = code.max(EXIT_USAGE);
            }
        }
    }
    // a failed instance outranks a non-converged one
    if code == EXIT_NOT_CONVERGED || code == EXIT_OK {
        Ok(code)
    } else {
        Ok(EXIT_USAGE)
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Solve(args) => {
            if args.input.model.is_dir() {
                return solve_batch(&args, out);
            }
            let r = solve_one(
                &args.input.model,
                args.input.format.map(Into::into),
                &args,
                args.trace.as_deref(),
                args.out.as_deref(),
            )?;
            writeln!(out, "energy {}\nstatus {}\nassignment {}", r.rounded_energy, r.status, join(r.rounded.labels())).ok();
            Ok(status_code(r.status))
        }
        Command::GenPotts(args) => {
            let m = harness::generate_potts(args.size, args.states, args.sigma, args.seed)?;
            harness::save_model(&args.out, &m, args.format.map(Into::into))?;
            Ok(EXIT_OK)
        }
        Command::BruteForce(args) => {
            let (x, e) = harness::brute_force_map(&args.load()?)?;
            writeln!(out, "energy {e}\nassignment {}", join(x.labels())).ok();
            Ok(EXIT_OK)
        }
        Command::Score(args) => {
            let r = harness::score(&args.energies, args.optimum)?;
            writeln!(out, "{}", join(&r.scores)).ok();
            Ok(EXIT_OK)
        }
        Command::OracleGibbs(args) => {
            let mu = harness::brute_force_gibbs(&args.input.load()?, args.temperature)?;
            let doc = serde_json::json!({ "nodes": mu.nodes(), "edges": mu.edges() });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?).ok();
            Ok(EXIT_OK)
        }
    }
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                write!(err, "{text}").ok();
            } else {
                write!(out, "{text}").ok();
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            writeln!(err, "error: {e}").ok();
            EXIT_USAGE
        }
    }
}
