//! The `strongcv` command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 precondition error,
//! 4 numerical failure (including failed validation checks).

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use strongcv_core::estimators::EstimatorKind;
use strongcv_core::models::{lookup, Registered, REGISTRY_KEYS};
use strongcv_core::planner::{mlmc_recipe, plan, plan_paper_1d, plan_paper_5d, Plan, PlanInputs};
use strongcv_core::BasisSpec;

use crate::config::{ConfigError, ConfigFile};
use crate::exec::ThreadPool;
use crate::study::{append_rows, rmse_study, run_once, write_rows, RunSettings, StudyRow};
use crate::validate::validate_model;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Keys accepted in configuration files.
pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "approach",
    "eps",
    "reps",
    "seed",
    "threads",
    "out",
    "p",
    "basis",
    "Q",
    "R",
    "trunc-A",
    "J",
    "N",
    "N0",
    "d",
    "m",
    "nu",
    "B-nu",
    "multiplier",
    "no-log",
    "omit-timing",
];

#[derive(Debug, Parser)]
#[command(name = "strongcv", version, about = "Control-variate Monte Carlo for SDE functionals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train (for control-variate approaches) and estimate once.
    Run(Options),
    /// Repeated runs over a list of precisions with RMSE and complexity slope.
    Study(Options),
    /// Print the planned parameters for each precision.
    Plan(Options),
    /// Run the invariant checks for a registered model.
    Validate(Options),
}

#[derive(Debug, Args, Default)]
struct Options {
    /// Registered model: sech1d or arctan5d.
    #[arg(long)]
    model: Option<String>,
    /// smc, mlmc, integral or series.
    #[arg(long)]
    approach: Option<String>,
    /// Target precision; repeat for a study.
    #[arg(long, action = ArgAction::Append, allow_negative_numbers = true)]
    eps: Vec<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Append CSV output to this file instead of printing it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key = value configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Polynomial degree of the regression basis.
    #[arg(long)]
    p: Option<usize>,
    /// global or piecewise.
    #[arg(long)]
    basis: Option<String>,
    /// Piecewise cells per axis.
    #[arg(long = "Q")]
    q: Option<usize>,
    /// Piecewise half-width of the cube.
    #[arg(long = "R")]
    r: Option<f64>,
    /// Truncation bound A.
    #[arg(long = "trunc-A")]
    trunc_a: Option<f64>,
    /// Explicit number of time steps.
    #[arg(long = "J")]
    j: Option<usize>,
    /// Explicit number of training paths.
    #[arg(long = "N")]
    n: Option<u64>,
    /// Explicit number of testing paths.
    #[arg(long = "N0")]
    n0: Option<u64>,
    /// State dimension for theorem-based planning.
    #[arg(long)]
    d: Option<usize>,
    /// Noise dimension for theorem-based planning.
    #[arg(long)]
    m: Option<usize>,
    /// Tail exponent ν (inf allowed).
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long = "B-nu")]
    b_nu: Option<f64>,
    /// Constant applied to N and N0 by the theorem-based planner.
    #[arg(long)]
    multiplier: Option<f64>,
    /// Drop the √log factor of the integral plan.
    #[arg(long = "no-log")]
    no_log: bool,
    /// Leave the timing column empty so rows are reproducible byte for byte.
    #[arg(long = "omit-timing")]
    omit_timing: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] strongcv_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use strongcv_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Validation(_) => EXIT_NUMERICAL,
            CliError::Core(e) => match e {
                E::Precondition(_) | E::Dimension { .. } | E::Data(_) => EXIT_PRECONDITION,
                E::Numerical(_) => EXIT_NUMERICAL,
                E::Plan(_) | E::Domain(_) | E::Unsupported(_) => EXIT_CONFIG,
            },
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Flags merged with the optional configuration file.
struct Resolved {
    opts: Options,
}

impl Resolved {
    fn new(mut opts: Options) -> Result<Self, CliError> {
        let Some(path) = opts.config.clone() else {
            return Ok(Self { opts });
        };
        let cfg = ConfigFile::load(&path, CONFIG_KEYS)?;
        macro_rules! fill {
            ($field:ident, $key:literal) => {
                if opts.$field.is_none() {
                    opts.$field = cfg.parsed($key)?;
                }
            };
        }
        fill!(model, "model");
        fill!(approach, "approach");
        fill!(reps, "reps");
        fill!(seed, "seed");
        fill!(threads, "threads");
        fill!(out, "out");
        fill!(p, "p");
        fill!(basis, "basis");
        fill!(q, "Q");
        fill!(r, "R");
        fill!(trunc_a, "trunc-A");
        fill!(j, "J");
        fill!(n, "N");
        fill!(n0, "N0");
        fill!(d, "d");
        fill!(m, "m");
        fill!(nu, "nu");
        fill!(b_nu, "B-nu");
        fill!(multiplier, "multiplier");
        if opts.eps.is_empty() {
            opts.eps = cfg.parsed_all("eps")?;
        }
        opts.no_log |= cfg.flag("no-log")?;
        opts.omit_timing |= cfg.flag("omit-timing")?;
        Ok(Self { opts })
    }

    fn model(&self) -> Result<Registered, CliError> {
        let key = self
            .opts
            .model
            .as_deref()
            .ok_or_else(|| config_error("missing --model"))?;
        lookup(key).ok_or_else(|| {
            config_error(format!("unknown model '{key}' (available: {})", REGISTRY_KEYS.join(", ")))
        })
    }

    fn approach(&self) -> Result<EstimatorKind, CliError> {
        let a = self
            .opts
            .approach
            .as_deref()
            .ok_or_else(|| config_error("missing --approach"))?;
        EstimatorKind::parse(a)
            .ok_or_else(|| config_error(format!("unknown approach '{a}' (expected smc, mlmc, integral or series)")))
    }

    fn epsilons(&self) -> Result<Vec<f64>, CliError> {
        for &e in &self.opts.eps {
            if !(e > 0.0 && e < 1.0) {
                return Err(config_error(format!("epsilon must lie in (0, 1), got {e}")));
            }
        }
        Ok(self.opts.eps.clone())
    }

    fn seed(&self) -> u64 {
        self.opts.seed.unwrap_or(1)
    }

    fn executor(&self) -> Result<ThreadPool, CliError> {
        if self.opts.threads == Some(0) {
            return Err(config_error("--threads must be at least 1"));
        }
        ThreadPool::new(self.opts.threads).map_err(|e| config_error(e.to_string()))
    }

    fn spec(&self, dim: usize) -> Result<(BasisSpec, Option<f64>), CliError> {
        let degree = self.opts.p.unwrap_or(3);
        let truncation = self.opts.trunc_a;
        if let Some(a) = truncation {
            if !(a > 0.0) {
                return Err(config_error(format!("--trunc-A must be positive, got {a}")));
            }
        }
        match self.opts.basis.as_deref().unwrap_or("global") {
            "global" => Ok((BasisSpec::global_with_payoff(degree, dim), truncation)),
            "piecewise" => {
                let (Some(q), Some(r)) = (self.opts.q, self.opts.r) else {
                    return Err(config_error("piecewise basis requires --Q and --R"));
                };
                if truncation.is_none() {
                    return Err(config_error("piecewise basis requires --trunc-A"));
                }
                let spec = BasisSpec::piecewise(degree, dim, r, q).map_err(|e| config_error(e.to_string()))?;
                Ok((spec, truncation))
            }
            other => Err(config_error(format!("unknown basis '{other}' (expected global or piecewise)"))),
        }
    }

    /// Parameters for one run at precision `eps` (or from explicit J/N/N0).
    fn settings(&self, dim: usize, kind: EstimatorKind, eps: Option<f64>) -> Result<RunSettings, CliError> {
        let (spec, truncation) = self.spec(dim)?;
        let mut settings = RunSettings {
            kind,
            epsilon: eps,
            steps: 0,
            n_train: 0,
            n_test: 0,
            spec,
            truncation,
            mlmc: None,
        };
        if kind == EstimatorKind::Mlmc {
            let eps = eps.ok_or_else(|| config_error("MLMC needs --eps"))?;
            settings.mlmc = Some(mlmc_recipe(eps, dim));
            return Ok(settings);
        }
        let o = &self.opts;
        if let Some(j) = o.j {
            settings.steps = j;
            settings.n_test = o.n0.ok_or_else(|| config_error("--J requires --N0"))?;
            if kind != EstimatorKind::Smc {
                settings.n_train = o.n.ok_or_else(|| config_error("--J requires --N for control-variate approaches"))?;
            }
            return Ok(settings);
        }
        let eps = eps.ok_or_else(|| config_error("give --eps or explicit --J/--N/--N0"))?;
        let recipe: Plan = if dim == 1 { plan_paper_1d(eps, kind)? } else { plan_paper_5d(eps, kind)? };
        settings.steps = recipe.steps;
        settings.n_train = o.n.unwrap_or(recipe.n_train);
        settings.n_test = o.n0.unwrap_or(recipe.n_test);
        if kind == EstimatorKind::Smc {
            settings.n_train = 0;
        }
        Ok(settings)
    }
}

fn emit_rows(rows: &[StudyRow], res: &Resolved, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &res.opts.out {
        Some(path) => append_rows(rows, path, res.opts.omit_timing)?,
        None => write_rows(rows, &mut *stdout, true, res.opts.omit_timing)?,
    }
    Ok(())
}

fn cmd_run(res: Resolved, stdout: &mut dyn Write) -> Result<(), CliError> {
    let reg = res.model()?;
    let kind = res.approach()?;
    let eps = res.epsilons()?;
    if eps.len() > 1 {
        return Err(config_error("run takes at most one --eps; use study for several"));
    }
    let settings = res.settings(reg.model.dim(), kind, eps.first().copied())?;
    let exec = res.executor()?;
    let report = run_once(reg.model.as_ref(), &settings, res.seed(), &exec)?;
    let row = StudyRow::from_reports(settings, &[report], reg.reference);
    emit_rows(&[row], &res, stdout)
}

fn cmd_study(res: Resolved, stdout: &mut dyn Write) -> Result<(), CliError> {
    let reg = res.model()?;
    let kind = res.approach()?;
    let eps = res.epsilons()?;
    if eps.is_empty() {
        return Err(config_error("study needs at least one --eps"));
    }
    if res.opts.j.is_some() {
        return Err(config_error("study plans J from each --eps; drop --J"));
    }
    let reps = res.opts.reps.unwrap_or(20);
    if reps < 2 {
        return Err(config_error(format!("study needs --reps of at least 2, got {reps}")));
    }
    let reference = reg
        .reference
        .ok_or_else(|| config_error(format!("model '{}' has no reference value; RMSE is unavailable", reg.key)))?;
    let dim = reg.model.dim();
    // resolve every precision up front so configuration errors surface before any work
    for &e in &eps {
        res.settings(dim, kind, Some(e))?;
    }
    let exec = res.executor()?;
    let table = rmse_study(
        reg.model.as_ref(),
        &eps,
        reps,
        reference,
        |e| res.settings(dim, kind, Some(e)).map_err(|err| strongcv_core::Error::Plan(err.to_string())),
        res.seed(),
        &exec,
    )?;
    match &res.opts.out {
        Some(path) => table.append_to(path, res.opts.omit_timing)?,
        None => table.write_csv(&mut *stdout, true, res.opts.omit_timing)?,
    }
    Ok(())
}

const PLAN_HEADER: &str = "approach,epsilon,J,N,N0,Q,R,p";

fn plan_row(p: &Plan) -> String {
    let has_basis = matches!(p.approach, EstimatorKind::Integral | EstimatorKind::Series);
    format!(
        "{},{},{},{},{},{},{},{}",
        p.approach.name(),
        p.epsilon,
        p.steps,
        p.n_train,
        p.n_test,
        p.cells.map(|q| q.to_string()).unwrap_or_default(),
        p.radius.map(|r| r.to_string()).unwrap_or_default(),
        if has_basis { p.degree.to_string() } else { String::new() },
    )
}

fn cmd_plan(res: Resolved, stdout: &mut dyn Write) -> Result<(), CliError> {
    let kind = res.approach()?;
    let eps = res.epsilons()?;
    if eps.is_empty() {
        return Err(config_error("plan needs at least one --eps"));
    }
    let o = &res.opts;
    let mut lines = vec![PLAN_HEADER.to_string()];
    for &e in &eps {
        let p = if o.model.is_some() {
            let dim = res.model()?.model.dim();
            if dim == 1 {
                plan_paper_1d(e, kind)?
            } else {
                plan_paper_5d(e, kind)?
            }
        } else {
            let d = o.d.ok_or_else(|| config_error("plan needs --model or --d"))?;
            let mut inputs = PlanInputs::new(e, d, o.m.unwrap_or(d), o.p.unwrap_or(3), kind);
            inputs.nu = o.nu.unwrap_or(f64::INFINITY);
            inputs.b_nu = o.b_nu.unwrap_or(1.0);
            inputs.multiplier = o.multiplier.unwrap_or(1.0);
            inputs.log_correction = !o.no_log;
            plan(&inputs)?
        };
        lines.push(plan_row(&p));
    }
    let text = lines.join("\n") + "\n";
    match &o.out {
        Some(path) => {
            let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            let fresh = file.metadata()?.len() == 0;
            let body = if fresh { text.as_str() } else { &text[PLAN_HEADER.len() + 1..] };
            file.write_all(body.as_bytes())?;
        }
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_validate(res: Resolved, stdout: &mut dyn Write) -> Result<(), CliError> {
    let reg = res.model()?;
    let exec = res.executor()?;
    let results = validate_model(reg.model.as_ref(), res.seed(), &exec, stdout)?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(o) => Resolved::new(o).and_then(|r| cmd_run(r, stdout)),
        Command::Study(o) => Resolved::new(o).and_then(|r| cmd_study(r, stdout)),
        Command::Plan(o) => Resolved::new(o).and_then(|r| cmd_plan(r, stdout)),
        Command::Validate(o) => Resolved::new(o).and_then(|r| cmd_validate(r, stdout)),
    };
    let _ = stdout.flush();
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
