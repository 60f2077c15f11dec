use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stlgrad::optim::{
    fit_pstl, fit_pstl_bisect, plan, regularized_fit, step_responses, synthetic_data, BisectOptions, Model,
    Monotonicity, PlanProblem, PstlOptions, PstlProblem, RegfitOptions,
};
use stlgrad::scaling::{self, BenchOp};
use stlgrad::semantics::satisfies_with;
use stlgrad::{parse, robustness_trace_with, to_dot, EvalConfig, Formula, Mode, Padding, ParamTable, Signal};

const VIOLATED: u8 = 2;

#[derive(Parser)]
#[command(name = "stlgrad", version, about = "Differentiable signal temporal logic")]
struct Cli {
    /// Seed for every random draw (synthetic data, benchmark signals).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the robustness at the first sample of each batch element.
    Eval(EvalArgs),
    /// Write the full robustness trace as CSV.
    Trace {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Boolean check; exits with 2 if any batch element violates the formula.
    Check(EvalArgs),
    /// Fit template parameters by gradient descent.
    Fit(FitArgs),
    /// Fit a single monotone parameter by bisection.
    BisectFit(FitArgs),
    /// Solve a planning problem described by a JSON file.
    Plan {
        problem: PathBuf,
        /// Trajectory CSV; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Diagnostics JSON; stderr when omitted.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Fit a linear-in-parameters model with a robustness penalty.
    Regfit(RegfitArgs),
    /// Export the computation graph of a formula as DOT.
    Graph {
        #[arg(short, long)]
        formula: String,
        /// Signal dimension the formula is checked against.
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Time exact robustness traces for a range of signal lengths.
    Bench {
        #[arg(long, value_enum)]
        op: OpArg,
        #[arg(long, value_delimiter = ',', default_values_t = [1000, 10000, 100000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OpArg {
    Always,
    Eventually,
    Until,
}

impl From<OpArg> for BenchOp {
    fn from(op: OpArg) -> Self {
        match op {
            OpArg::Always => BenchOp::Always,
            OpArg::Eventually => BenchOp::Eventually,
            OpArg::Until => BenchOp::Until,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Soft,
    Lse,
}

#[derive(Args)]
struct ModeArgs {
    /// Evaluation config JSON; the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Smoothing scale for soft modes.
    #[arg(long)]
    w: Option<f64>,
    /// `last` or `const:R`.
    #[arg(long, value_parser = parse_padding)]
    padding: Option<Padding>,
}

impl ModeArgs {
    fn config(&self, base: EvalConfig) -> Result<EvalConfig> {
        let mut cfg = match &self.config {
            Some(p) => EvalConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => base,
        };
        if let Some(m) = self.mode {
            cfg.mode = match m {
                ModeArg::Exact => Mode::Exact,
                ModeArg::Soft => Mode::SoftSoftmax,
                ModeArg::Lse => Mode::SoftLogsumexp,
            };
        }
        if let Some(w) = self.w {
            cfg.w = w;
        }
        if let Some(p) = self.padding {
            cfg.padding = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(short, long)]
    formula: String,
    /// Signal file (`.csv` or batched `.json`); repeat for a CSV batch.
    #[arg(short, long = "signal", required = true)]
    signals: Vec<PathBuf>,
    /// Threshold binding `NAME=VALUE`.
    #[arg(short, long = "param", value_parser = parse_binding)]
    params: Vec<(String, f64)>,
    #[command(flatten)]
    mode: ModeArgs,
}

#[derive(Args)]
struct FitArgs {
    /// Template with named thresholds.
    #[arg(short, long)]
    formula: String,
    /// Data files; omit to fit synthetic step responses.
    #[arg(short, long = "signal")]
    signals: Vec<PathBuf>,
    /// Number of synthetic step responses.
    #[arg(long, default_value_t = 100)]
    step_responses: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Monotonicity override `NAME=increasing|decreasing`.
    #[arg(long = "monotone", value_parser = parse_monotone)]
    monotone: Vec<(String, Monotonicity)>,
    /// Solver options JSON; the flags below override it.
    #[arg(long)]
    options: Option<PathBuf>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    init: Option<f64>,
    #[command(flatten)]
    mode: ModeArgs,
    /// Report JSON; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RegfitArgs {
    #[arg(short, long)]
    formula: String,
    /// Scalar data signal; omit for synthetic data.
    #[arg(short, long)]
    signal: Option<PathBuf>,
    /// Noise level of the synthetic data.
    #[arg(long, default_value_t = 0.04)]
    sigma: f64,
    /// `poly:DEGREE` or `pwl:KNOTS`.
    #[arg(long, default_value = "poly:6", value_parser = parse_model)]
    model: Model,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    #[arg(long)]
    iters: Option<usize>,
    #[command(flatten)]
    mode: ModeArgs,
    /// Fitted-parameter JSON; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Model output CSV.
    #[arg(long)]
    signal_out: Option<PathBuf>,
}

fn parse_padding(s: &str) -> Result<Padding, String> {
    match s {
        "last" => Ok(Padding::LastValue),
        _ => s
            .strip_prefix("const:")
            .and_then(|r| r.parse().ok())
            .map(Padding::Constant)
            .ok_or_else(|| format!("expected `last` or `const:R`, got `{s}`")),
    }
}

fn parse_binding(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), v))
}

fn parse_monotone(s: &str) -> Result<(String, Monotonicity), String> {
    let (name, dir) = s.split_once('=').ok_or_else(|| format!("expected NAME=DIRECTION, got `{s}`"))?;
    let m = match dir.trim() {
        "increasing" => Monotonicity::Increasing,
        "decreasing" => Monotonicity::Decreasing,
        other => return Err(format!("unknown direction `{other}`")),
    };
    Ok((name.trim().to_string(), m))
}

fn parse_model(s: &str) -> Result<Model, String> {
    let (kind, n) = s.split_once(':').ok_or_else(|| format!("expected poly:N or pwl:N, got `{s}`"))?;
    let n: usize = n.parse().map_err(|_| format!("`{n}` is not a count"))?;
    match kind {
        "poly" => Ok(Model::Polynomial { degree: n }),
        "pwl" => Ok(Model::PiecewiseLinear { knots: n }),
        _ => Err(format!("unknown model `{kind}`")),
    }
}

/// Nine significant digits, shortest form.
fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn load_signals(paths: &[PathBuf]) -> Result<Signal> {
    let s = match paths {
        [one] => Signal::load(one),
        many => Signal::load_csv_batch(many),
    };
    s.with_context(|| format!("reading {}", paths[0].display()))
}

fn parse_formula(text: &str, dim: usize) -> Result<Formula> {
    Ok(parse(text, dim)?)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = sink(path)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

struct Loaded {
    signal: Signal,
    formula: Formula,
    params: ParamTable,
    cfg: EvalConfig,
}

fn load_eval(args: &EvalArgs) -> Result<Loaded> {
    let signal = load_signals(&args.signals)?;
    let formula = parse_formula(&args.formula, signal.dim())?;
    let mut params = ParamTable::new();
    for (name, v) in &args.params {
        params.set(name.clone(), *v);
    }
    let cfg = args.mode.config(EvalConfig::exact())?;
    Ok(Loaded { signal, formula, params, cfg })
}

fn fit_problem(args: &FitArgs, seed: u64) -> Result<PstlProblem> {
    let data = if args.signals.is_empty() {
        step_responses(args.step_responses, args.samples, seed)?
    } else {
        load_signals(&args.signals)?
    };
    let template = parse_formula(&args.formula, data.dim())?;
    let mut flags = stlgrad::optim::infer_monotonicity(&template);
    for (name, m) in &args.monotone {
        flags.insert(name.clone(), *m);
    }
    Ok(PstlProblem::with_flags(template, data, flags)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Eval(args) => {
            let l = load_eval(&args)?;
            let trace = robustness_trace_with(&l.signal, &l.formula, &l.params, &l.cfg)?;
            let mut out = io::stdout().lock();
            for rho in trace.heads() {
                writeln!(out, "{}", sig9(rho))?;
            }
        }
        Command::Trace { eval, output } => {
            let l = load_eval(&eval)?;
            let trace = robustness_trace_with(&l.signal, &l.formula, &l.params, &l.cfg)?;
            let mut w = sink(output.as_deref())?;
            trace.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Check(args) => {
            let l = load_eval(&args)?;
            let verdicts = satisfies_with(&l.signal, &l.formula, &l.params, l.cfg.padding)?;
            let mut out = io::stdout().lock();
            for ok in &verdicts {
                writeln!(out, "{}", if *ok { "satisfied" } else { "violated" })?;
            }
            if !verdicts.iter().all(|&ok| ok) {
                return Ok(ExitCode::from(VIOLATED));
            }
        }
        Command::Fit(args) => {
            let p = fit_problem(&args, cli.seed)?;
            let mut opts: PstlOptions = match &args.options {
                Some(path) => read_json(path)?,
                None => PstlOptions::default(),
            };
            opts.step = args.step.unwrap_or(opts.step);
            opts.max_iters = args.iters.unwrap_or(opts.max_iters);
            opts.tol = args.tol.unwrap_or(opts.tol);
            opts.init = args.init.unwrap_or(opts.init);
            opts.eval = args.mode.config(opts.eval)?;
            let fit = fit_pstl(&p, &opts)?;
            write_text(args.output.as_deref(), &fit.to_json_string()?)?;
        }
        Command::BisectFit(args) => {
            let p = fit_problem(&args, cli.seed)?;
            let mut opts: BisectOptions = match &args.options {
                Some(path) => read_json(path)?,
                None => BisectOptions::default(),
            };
            opts.max_iters = args.iters.unwrap_or(opts.max_iters);
            opts.tol = args.tol.unwrap_or(opts.tol);
            opts.init = args.init.unwrap_or(opts.init);
            opts.initial_step = args.step.unwrap_or(opts.initial_step);
            opts.eval = args.mode.config(opts.eval)?;
            let fit = fit_pstl_bisect(&p, &opts)?;
            write_text(args.output.as_deref(), &fit.to_json_string()?)?;
        }
        Command::Plan { problem, output, diagnostics } => {
            let p = PlanProblem::load(&problem).with_context(|| format!("reading {}", problem.display()))?;
            let result = plan(&p)?;
            let mut w = sink(output.as_deref())?;
            result.write_csv(p.dt, &mut w)?;
            w.flush()?;
            let diag = result.diagnostics_json()?;
            match diagnostics {
                Some(path) => write_text(Some(&path), &diag)?,
                None => eprintln!("{diag}"),
            }
        }
        Command::Regfit(args) => {
            let data = match &args.signal {
                Some(path) => Signal::load(path).with_context(|| format!("reading {}", path.display()))?,
                None => synthetic_data(args.sigma, cli.seed)?,
            };
            let f = parse_formula(&args.formula, data.dim())?;
            let mut opts = RegfitOptions { margin: args.margin, ..RegfitOptions::default() };
            opts.iters = args.iters.unwrap_or(opts.iters);
            opts.eval = args.mode.config(opts.eval)?;
            let fit = regularized_fit(args.model, &data, &f, args.gamma, &opts)?;
            write_text(args.output.as_deref(), &fit.to_json_string()?)?;
            if let Some(path) = &args.signal_out {
                let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                fit.write_csv(data.t0(), data.dt(), BufWriter::new(file))?;
            }
        }
        Command::Graph { formula, dim, output } => {
            let f = parse_formula(&formula, dim)?;
            let mut w = sink(output.as_deref())?;
            w.write_all(to_dot(&f).as_bytes())?;
            w.flush()?;
        }
        Command::Bench { op, sizes, repeats, output } => {
            if sizes.is_empty() {
                bail!("no sizes given");
            }
            let timings = scaling::time_op(op.into(), &sizes, repeats, cli.seed)?;
            let mut w = sink(output.as_deref())?;
            scaling::write_csv(&timings, &mut w)?;
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn init_threads() -> Result<()> {
    let Ok(var) = std::env::var("STLGRAD_THREADS") else {
        return Ok(());
    };
    let n: usize =
        var.trim().parse().map_err(|_| anyhow!("STLGRAD_THREADS must be a positive integer, got `{var}`"))?;
    if n == 0 {
        bail!("STLGRAD_THREADS must be a positive integer, got `{var}`");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = c.downcast_ref::<io::Error>().or_else(|| match c.downcast_ref::<stlgrad::Error>() {
            Some(stlgrad::Error::Io(io)) => Some(io),
            _ => None,
        });
        io.is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match init_threads().and_then(|()| run(cli)) {
        Ok(code) => code,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
