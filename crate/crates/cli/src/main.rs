use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use prmc_core::benchgen::{gridworld, GridSpec, TerrainLayout};
use prmc_core::learning::{
    format_sig, run_learning, LearnConfig, Strategy, DEFAULT_CONFIDENCE, INITIAL_SAMPLES,
};
use prmc_core::models::{instantiation_from_json, model_from_json, model_to_json, Model};
use prmc_core::oracle::{fd_gradient_pmc, fd_gradient_prmc};
use prmc_core::{
    Direction, Error, ErrorClass, GradientReport, Instantiation, PmcAnalysis, Prmc, RobustAnalysis,
};

const DIGITS: usize = 12;

#[derive(Parser, Debug)]
#[command(
    name = "prmc-sense",
    version,
    about = "Sensitivity analysis for parametric (robust) Markov chains"
)]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a benchmark model.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Expected reward (pMC) or robust expected reward (prMC).
    Solve(AtArgs),
    /// Partial derivatives of the solution, one CSV row per parameter.
    Grad(GradArgs),
    /// The k parameters with the highest (or lowest) derivative.
    Topk(TopkArgs),
    /// Sampling loop on a pMC skeleton with hidden true values.
    Learn(LearnArgs),
    /// Validate a model file and summarize it.
    Check(CheckArgs),
}

#[derive(Subcommand, Debug)]
enum GenCommand {
    /// Slippery grid world.
    Grid(GridArgs),
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long)]
    terrains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Interval model over sample sizes instead of the pMC over slip probabilities.
    #[arg(long)]
    robust: bool,
    #[arg(long, value_enum, default_value_t = Layout::Uniform)]
    layout: Layout,
    /// Model output; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write the matching instantiation (true slips, or sample sizes with --robust).
    #[arg(long)]
    inst_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Layout {
    Uniform,
    Biased,
}

#[derive(Args, Debug)]
struct AtArgs {
    model: PathBuf,
    /// Instantiation JSON `{"name": value, ...}`.
    #[arg(long)]
    at: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Method {
    Explicit,
    Adjoint,
}

#[derive(Args, Debug)]
struct GradArgs {
    #[command(flatten)]
    at: AtArgs,
    /// pMC only; prMCs always use the robust derivative system.
    #[arg(long, value_enum, default_value_t = Method::Explicit)]
    method: Method,
    /// Compare against central differences; exit 1 when the largest relative error exceeds 1e-3.
    #[arg(long)]
    check_fd: bool,
    #[arg(long, default_value_t = 1e-5)]
    fd_step: f64,
}

#[derive(Args, Debug)]
struct TopkArgs {
    #[command(flatten)]
    at: AtArgs,
    #[arg(short)]
    k: usize,
    #[arg(long)]
    lowest: bool,
    /// Also report the selected derivatives.
    #[arg(long)]
    values: bool,
}

#[derive(Args, Debug)]
struct LearnArgs {
    model: PathBuf,
    /// True parameter values used to draw samples.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "derivative")]
    strategy: Strategy,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 25)]
    batch: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    beta: f64,
    #[arg(long, default_value_t = INITIAL_SAMPLES)]
    initial_samples: u64,
}

#[derive(Args, Debug)]
struct CheckArgs {
    model: PathBuf,
    /// Also instantiate and check the uncertainty sets.
    #[arg(long)]
    at: Option<PathBuf>,
}

/// Either a library error (mapped to its class) or a failed FD check.
enum Failure {
    Core(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = Result<String, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    log::debug!("threads capped at {}", cli.threads);
    let result = match &cli.command {
        Command::Gen(GenCommand::Grid(a)) => gen_grid(a),
        Command::Solve(a) => solve(a),
        Command::Grad(a) => grad(a),
        Command::Topk(a) => topk(a),
        Command::Learn(a) => learn(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Check(out)) => {
            print!("{out}");
            eprintln!("error: finite-difference check failed");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Validation | ErrorClass::Io => 2,
        ErrorClass::Infeasible => 3,
        ErrorClass::NotDifferentiable => 4,
        ErrorClass::Numerical => 5,
    }
}

fn read_json(path: &Path) -> Result<Value, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn load(path: &Path) -> Result<Model, Error> {
    model_from_json(&read_json(path)?)
}

fn load_at(a: &AtArgs) -> Result<(Model, Instantiation), Error> {
    let m = load(&a.model)?;
    let u = instantiation_from_json(&read_json(&a.at)?, m.params())?;
    Ok((m, u))
}

fn kind(m: &Model) -> &'static str {
    match m {
        Model::Pmc(_) => "pmc",
        Model::Prmc(_) => "prmc",
    }
}

/// `# key=value` lines echoing the configuration.
fn header(command: &str, pairs: &[(&str, String)]) -> String {
    let mut out = format!("# prmc-sense {command}\n");
    for (k, v) in pairs {
        let _ = writeln!(out, "# {k}={v}");
    }
    out
}

fn gen_grid(a: &GridArgs) -> CmdResult {
    let mut spec = GridSpec::new(a.rows, a.cols, a.terrains, a.seed);
    if let Layout::Biased = a.layout {
        spec.layout = TerrainLayout::LEARNING;
    }
    let world = gridworld(&spec, a.seed)?;
    let pmc = world.pmc()?;
    let (model, inst) = if a.robust {
        let counts = world.sample_counts(a.seed.wrapping_add(1))?;
        let (m, n) = prmc_core::learning::interval_prmc(&pmc, &counts, 1.0)?;
        (Model::Prmc(m), n)
    } else {
        (Model::Pmc(pmc), world.true_instantiation())
    };
    let text = serde_json::to_string_pretty(&model_to_json(&model)).map_err(Error::from)?;
    if let Some(p) = &a.inst_out {
        let obj: serde_json::Map<String, Value> = model
            .params()
            .names()
            .iter()
            .zip(inst.values())
            .map(|(k, v)| (k.clone(), Value::from(*v)))
            .collect();
        let inst_text = serde_json::to_string_pretty(&Value::Object(obj)).map_err(Error::from)?;
        std::fs::write(p, inst_text + "\n").map_err(Error::from)?;
    }
    match &a.out {
        Some(p) => {
            std::fs::write(p, text + "\n").map_err(Error::from)?;
            Ok(format!(
                "wrote {} ({} states, {} parameters, {} transitions)\n",
                p.display(),
                model.num_states(),
                model.params().len(),
                model.num_transitions()
            ))
        }
        None => Ok(text + "\n"),
    }
}

fn solve(a: &AtArgs) -> CmdResult {
    let (m, u) = load_at(a)?;
    let mut out = header(
        "solve",
        &[
            ("model", a.model.display().to_string()),
            ("at", a.at.display().to_string()),
            ("kind", kind(&m).into()),
        ],
    );
    let (name, value) = match &m {
        Model::Pmc(p) => ("sol", PmcAnalysis::new(p, &u)?.solution().sol),
        Model::Prmc(p) => ("sol_r", prmc_core::prmc::robust_solve(p, &u)?.sol),
    };
    let _ = writeln!(out, "{name}\n{}", format_sig(value, DIGITS));
    Ok(out)
}

fn robust_report(p: &Prmc, u: &Instantiation) -> Result<GradientReport, Error> {
    let a = RobustAnalysis::new(p, u)?;
    if !a.verdict().differentiable {
        return Err(Error::NotDifferentiable(a.verdict().describe()));
    }
    a.gradient_all()
}

fn grad(a: &GradArgs) -> CmdResult {
    let (m, u) = load_at(&a.at)?;
    let report = match &m {
        Model::Pmc(p) => {
            let an = PmcAnalysis::new(p, &u)?;
            match a.method {
                Method::Explicit => an.gradient_explicit()?,
                Method::Adjoint => an.gradient_adjoint()?,
            }
        }
        Model::Prmc(p) => robust_report(p, &u)?,
    };
    let mut out = header(
        "grad",
        &[
            ("model", a.at.model.display().to_string()),
            ("at", a.at.at.display().to_string()),
            ("kind", kind(&m).into()),
            ("method", format!("{:?}", report.method).to_lowercase()),
            ("check_fd", a.check_fd.to_string()),
            ("fd_step", a.fd_step.to_string()),
        ],
    );
    let fd = if a.check_fd {
        Some(match &m {
            Model::Pmc(p) => fd_gradient_pmc(p, &u, a.fd_step)?,
            Model::Prmc(p) => fd_gradient_prmc(p, &u, a.fd_step)?,
        })
    } else {
        None
    };
    let names = m.params().names();
    let mut worst = 0.0f64;
    match &fd {
        None => out.push_str("parameter,derivative\n"),
        Some(_) => out.push_str("parameter,derivative,finite_difference,relative_error\n"),
    }
    for (i, (v, d)) in report.params.iter().zip(&report.values).enumerate() {
        let name = &names[v.0];
        match &fd {
            None => {
                let _ = writeln!(out, "{name},{}", format_sig(*d, DIGITS));
            }
            Some(f) => {
                let err = (d - f[i]).abs() / f[i].abs().max(1e-12);
                worst = worst.max(err);
                let _ = writeln!(
                    out,
                    "{name},{},{},{}",
                    format_sig(*d, DIGITS),
                    format_sig(f[i], DIGITS),
                    format_sig(err, DIGITS)
                );
            }
        }
    }
    if fd.is_some() {
        let _ = writeln!(out, "# max_relative_error={}", format_sig(worst, DIGITS));
        if worst > 1e-3 {
            return Err(Failure::Check(out));
        }
    }
    Ok(out)
}

fn topk(a: &TopkArgs) -> CmdResult {
    let (m, u) = load_at(&a.at)?;
    let dir = if a.lowest {
        Direction::Lowest
    } else {
        Direction::Highest
    };
    let r = match &m {
        Model::Pmc(p) => PmcAnalysis::new(p, &u)?.topk(a.k, dir, a.values)?,
        Model::Prmc(p) => RobustAnalysis::new(p, &u)?.topk(a.k, dir, a.values)?,
    };
    let mut out = header(
        "topk",
        &[
            ("model", a.at.model.display().to_string()),
            ("at", a.at.at.display().to_string()),
            ("kind", kind(&m).into()),
            ("k", a.k.to_string()),
            (
                "direction",
                if a.lowest { "lowest" } else { "highest" }.into(),
            ),
            ("values", a.values.to_string()),
        ],
    );
    let names = m.params().names();
    out.push_str(if a.values {
        "parameter,derivative\n"
    } else {
        "parameter\n"
    });
    for (i, v) in r.selected.iter().enumerate() {
        match &r.values {
            Some(vals) => {
                let _ = writeln!(out, "{},{}", names[v.0], format_sig(vals[i], DIGITS));
            }
            None => {
                let _ = writeln!(out, "{}", names[v.0]);
            }
        }
    }
    Ok(out)
}

fn learn(a: &LearnArgs) -> CmdResult {
    let Model::Pmc(skeleton) = load(&a.model)? else {
        return Err(Error::InvalidModel("learn expects a pMC skeleton".into()).into());
    };
    let truth = instantiation_from_json(&read_json(&a.truth)?, skeleton.params())?;
    let mut cfg = LearnConfig::new(a.strategy, a.steps, a.batch, a.seed);
    cfg.beta = a.beta;
    cfg.initial_samples = a.initial_samples;
    let t = run_learning(&skeleton, &truth, &cfg)?;
    let mut out = header(
        "learn",
        &[
            ("model", a.model.display().to_string()),
            ("truth", a.truth.display().to_string()),
            ("strategy", a.strategy.name().into()),
            ("steps", a.steps.to_string()),
            ("batch", a.batch.to_string()),
            ("seed", a.seed.to_string()),
            ("beta", a.beta.to_string()),
            ("initial_samples", a.initial_samples.to_string()),
            ("true_solution", format_sig(t.true_solution, DIGITS)),
        ],
    );
    let fallbacks = t.rows.iter().filter(|r| r.fell_back).count();
    if fallbacks > 0 {
        let _ = writeln!(out, "# derivative_fallbacks={fallbacks}");
    }
    out.push_str(&t.to_csv(skeleton.params()));
    Ok(out)
}

fn check(a: &CheckArgs) -> CmdResult {
    let m = load(&a.model)?;
    let mut out = header("check", &[("model", a.model.display().to_string())]);
    let (terminal, pinned) = match &m {
        Model::Pmc(p) => (
            p.terminal_states().len(),
            p.pinned().iter().filter(|b| **b).count(),
        ),
        Model::Prmc(p) => (
            p.terminal_states().len(),
            p.pinned().iter().filter(|b| **b).count(),
        ),
    };
    let _ = writeln!(out, "kind,{}", kind(&m));
    let _ = writeln!(out, "states,{}", m.num_states());
    let _ = writeln!(out, "parameters,{}", m.params().len());
    let _ = writeln!(out, "transitions,{}", m.num_transitions());
    let _ = writeln!(out, "terminal,{terminal}");
    let _ = writeln!(out, "pinned,{pinned}");
    if let Some(at) = &a.at {
        let u = instantiation_from_json(&read_json(at)?, m.params())?;
        match &m {
            Model::Pmc(p) => {
                p.instantiate(&u)?;
            }
            Model::Prmc(p) => {
                let mc = p.instantiate(&u)?;
                for s in 0..mc.num_states() {
                    if let Some(poly) = mc.polytope(s).filter(|_| !mc.pinned()[s]) {
                        if !poly.is_feasible()? {
                            return Err(Error::EmptyUncertaintySet(s).into());
                        }
                    }
                }
            }
        }
        let _ = writeln!(out, "instantiation,ok");
    }
    out.push_str("status,ok\n");
    Ok(out)
}
