//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 planning failure,
//! 3 check failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::bundle::{builtin_bundle, load_bundle, BasisBundle};
use crate::document::{
    problem_text, sample_csv, sample_times, DocumentError, PlanDocument, ProblemFields,
};
use crate::instances::{random_problem, InstanceOptions};
use crate::model::{ValidatedProblem, DEFAULT_BOUNDARY_TOL};
use crate::oracle::{check_plan, CheckTolerances};
use crate::planner::{explore, PlanError, PlannerOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PLAN: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "chaintraj",
    version,
    about = "Time-optimal trajectories for integrator chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan a transition and write the plan document.
    Plan(PlanArgs),
    /// Sample a plan document as CSV.
    Sample(SampleArgs),
    /// Check a plan document against its problem.
    Check(CheckArgs),
    /// Plan random instances and report timings.
    Bench(BenchArgs),
    /// Inspect or verify basis bundles.
    #[command(subcommand)]
    Bundle(BundleCommand),
}

#[derive(Debug, Args, Default)]
struct ProblemArgs {
    /// Problem file with `key = value` lines; its values win over flags.
    #[arg(long)]
    problem: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated initial state.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Comma-separated final state.
    #[arg(long, allow_hyphen_values = true)]
    xf: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    umin: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    umax: Option<String>,
    /// Lower bounds of x2..xn (`-inf` for none).
    #[arg(long, allow_hyphen_values = true)]
    xmin: Option<String>,
    /// Upper bounds of x2..xn (`inf` for none).
    #[arg(long, allow_hyphen_values = true)]
    xmax: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_TOL)]
    boundary_tol: f64,
}

#[derive(Debug, Args)]
struct PlannerArgs {
    /// Bundle file; defaults to the builtin bundle of the order.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, default_value_t = PlannerOptions::default().guard_tol)]
    guard_tol: f64,
    #[arg(long, default_value_t = PlannerOptions::default().eps_im)]
    eps_im: f64,
    #[arg(long, default_value_t = PlannerOptions::default().eps_t)]
    eps_t: f64,
    #[arg(long, default_value_t = PlannerOptions::default().order_tol)]
    order_tol: f64,
    #[arg(long, default_value_t = PlannerOptions::default().bound_tol)]
    bound_tol: f64,
    #[arg(long, default_value_t = PlannerOptions::default().terminal_tol)]
    terminal_tol: f64,
    #[arg(long, default_value_t = PlannerOptions::default().tie_tol)]
    tie_tol: f64,
    #[arg(long, default_value_t = PlannerOptions::default().coeff_zero_tol)]
    coeff_zero_tol: f64,
    #[arg(long, default_value_t = PlannerOptions::default().polish_gate)]
    polish_gate: f64,
    #[arg(long, default_value_t = PlannerOptions::default().near_real_tol)]
    near_real_tol: f64,
}

impl PlannerArgs {
    fn options(&self) -> PlannerOptions {
        PlannerOptions {
            guard_tol: self.guard_tol,
            eps_im: self.eps_im,
            eps_t: self.eps_t,
            order_tol: self.order_tol,
            bound_tol: self.bound_tol,
            terminal_tol: self.terminal_tol,
            tie_tol: self.tie_tol,
            coeff_zero_tol: self.coeff_zero_tol,
            polish_gate: self.polish_gate,
            near_real_tol: self.near_real_tol,
        }
    }
}

#[derive(Debug, Args)]
struct CheckTolArgs {
    #[arg(long, default_value_t = CheckTolerances::default().terminal)]
    check_terminal_tol: f64,
    #[arg(long, default_value_t = CheckTolerances::default().bound)]
    check_bound_tol: f64,
    #[arg(long, default_value_t = CheckTolerances::default().continuity)]
    check_continuity_tol: f64,
    #[arg(long, default_value_t = CheckTolerances::default().optimality)]
    check_optimality_tol: f64,
    #[arg(long, default_value_t = CheckTolerances::default().grid)]
    check_grid: usize,
}

impl CheckTolArgs {
    fn tolerances(&self) -> CheckTolerances {
        CheckTolerances {
            terminal: self.check_terminal_tol,
            bound: self.check_bound_tol,
            continuity: self.check_continuity_tol,
            optimality: self.check_optimality_tol,
            grid: self.check_grid,
            ..CheckTolerances::default()
        }
    }
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Write the document here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print every explored candidate to stderr.
    #[arg(long)]
    candidates: bool,
}

#[derive(Debug, Args)]
struct SampleArgs {
    plan: PathBuf,
    /// Sampling step.
    #[arg(long, conflicts_with = "count")]
    dt: Option<f64>,
    /// Number of uniform samples including both ends.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    plan: PathBuf,
    /// Problem file; defaults to the problem stored in the plan.
    #[arg(long)]
    problem: Option<PathBuf>,
    #[command(flatten)]
    tol: CheckTolArgs,
    #[arg(long, default_value_t = DEFAULT_BOUNDARY_TOL)]
    boundary_tol: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Draw input bounds only.
    #[arg(long)]
    unconstrained: bool,
    /// Print the problem and the reason of every failure to stderr.
    #[arg(long)]
    show_failures: bool,
    #[command(flatten)]
    planner: PlannerArgs,
}

#[derive(Debug, Subcommand)]
enum BundleCommand {
    /// Print a summary of a bundle.
    Inspect(BundleTarget),
    /// Load and validate a bundle.
    Verify(BundleTarget),
}

#[derive(Debug, Args)]
struct BundleTarget {
    path: Option<PathBuf>,
    /// Use the builtin bundle of this order.
    #[arg(long, conflicts_with = "path")]
    builtin: Option<usize>,
}

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

impl From<DocumentError> for Failure {
    fn from(e: DocumentError) -> Self {
        Failure::usage(e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Failure::usage(e.to_string())),
    }
}

fn resolve_problem(args: &ProblemArgs, err: &mut dyn Write) -> Result<ValidatedProblem, Failure> {
    let mut flags = ProblemFields::default();
    for (key, value) in [
        ("x0", &args.x0),
        ("xf", &args.xf),
        ("umin", &args.umin),
        ("umax", &args.umax),
        ("xmin", &args.xmin),
        ("xmax", &args.xmax),
    ] {
        if let Some(v) = value {
            flags
                .set(key, v)
                .map_err(|m| Failure::usage(format!("--{key}: {m}")))?;
        }
    }
    flags.n = args.n;
    let fields = match &args.problem {
        Some(path) => {
            let mut file = ProblemFields::parse(&read(path)?)?;
            for key in file.merge_from(&flags) {
                let _ = writeln!(
                    err,
                    "warning: `{key}` from {} overrides the command line",
                    path.display()
                );
            }
            file
        }
        None => flags,
    };
    Ok(fields.into_problem(args.boundary_tol)?)
}

fn resolve_bundle(path: Option<&Path>, n: usize) -> Result<(BasisBundle, String), Failure> {
    match path {
        Some(p) => {
            let b = load_bundle(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            let prov = b.provenance.clone();
            Ok((b, prov))
        }
        None => {
            let b = builtin_bundle(n).ok_or_else(|| Failure {
                code: EXIT_PLAN,
                message: PlanError::NoBundle(n).to_string(),
            })?;
            Ok((b.clone(), b.provenance.clone()))
        }
    }
}

fn cmd_plan(args: &PlanArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let problem = resolve_problem(&args.problem, err)?;
    let (bundle, provenance) = resolve_bundle(args.planner.bundle.as_deref(), problem.order())?;
    let (result, set) = explore(&problem, &bundle, &args.planner.options());
    if args.candidates {
        let _ = write!(err, "{set}");
    }
    match result {
        Ok(plan) => {
            for w in &plan.warnings {
                let _ = writeln!(
                    err,
                    "warning: {}",
                    serde_json::to_string(w).unwrap_or_default()
                );
            }
            let doc = PlanDocument::new(&plan, &problem, &provenance);
            emit(out, args.out.as_deref(), &doc.to_json())?;
            Ok(EXIT_OK)
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if !args.candidates {
                let _ = write!(err, "{set}");
            }
            Ok(EXIT_PLAN)
        }
    }
}

fn cmd_sample(args: &SampleArgs, out: &mut dyn Write) -> CmdResult {
    let doc = PlanDocument::from_json(&read(&args.plan)?)?;
    if let Some(dt) = args.dt {
        if !(dt > 0.0) {
            return Err(Failure::usage("--dt must be positive"));
        }
    }
    let times = sample_times(&doc.trajectory, args.dt, args.count);
    emit(
        out,
        args.out.as_deref(),
        &sample_csv(&doc.trajectory, &times),
    )?;
    Ok(EXIT_OK)
}

fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> CmdResult {
    let doc = PlanDocument::from_json(&read(&args.plan)?)?;
    let fields = match &args.problem {
        Some(p) => ProblemFields::parse(&read(p)?)?,
        None => doc.problem.to_fields(),
    };
    let problem = fields.into_problem(args.boundary_tol)?;
    if problem.order() != doc.problem.n {
        return Err(Failure::usage(format!(
            "plan is for order {}, problem has order {}",
            doc.problem.n,
            problem.order()
        )));
    }
    let report = check_plan(&doc.to_plan(), &problem, &args.tol.tolerances());
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    emit(out, None, &text)?;
    Ok(if report.pass { EXIT_OK } else { EXIT_CHECK })
}

/// Timing summary of a benchmark run, in microseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub instances: usize,
    pub median_us: Option<f64>,
    pub p95_us: Option<f64>,
    pub failures: usize,
    /// Problem text and reason of each failure.
    pub failed: Vec<(String, String)>,
}

fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let k = ((sorted.len() - 1) as f64 * q).round() as usize;
    Some(sorted[k])
}

/// Plans `count` random instances; only the planner call is timed.
pub fn run_bench(
    n: usize,
    count: usize,
    seed: u64,
    instance: &InstanceOptions,
    bundle: &BasisBundle,
    opts: &PlannerOptions,
) -> BenchSummary {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut timings = Vec::with_capacity(count);
    let mut failed = Vec::new();
    let check = CheckTolerances::default();
    for _ in 0..count {
        let problem = random_problem(&mut rng, n, instance);
        let start = Instant::now();
        let (result, _) = explore(&problem, bundle, opts);
        timings.push(start.elapsed().as_secs_f64() * 1e6);
        let reason = match result {
            Ok(plan) => {
                let report = check_plan(&plan, &problem, &check);
                (!report.pass).then(|| report.failures.join("; "))
            }
            Err(e) => Some(e.to_string()),
        };
        if let Some(r) = reason {
            failed.push((problem_text(&problem), r));
        }
    }
    timings.sort_by(f64::total_cmp);
    BenchSummary {
        instances: count,
        median_us: percentile(&timings, 0.5),
        p95_us: percentile(&timings, 0.95),
        failures: failed.len(),
        failed,
    }
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let (bundle, _) = resolve_bundle(args.planner.bundle.as_deref(), args.n)?;
    if bundle.n != args.n {
        return Err(Failure::usage(format!("bundle is for order {}", bundle.n)));
    }
    let instance = if args.unconstrained {
        InstanceOptions::unconstrained()
    } else {
        InstanceOptions::default()
    };
    let s = run_bench(
        args.n,
        args.count,
        args.seed,
        &instance,
        &bundle,
        &args.planner.options(),
    );
    if args.show_failures {
        for (problem, reason) in &s.failed {
            let _ = writeln!(err, "{reason}\n{problem}");
        }
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}us"));
    let _ = writeln!(
        out,
        "n={} instances={} seed={} median={} p95={} failures={}",
        args.n,
        s.instances,
        args.seed,
        fmt(s.median_us),
        fmt(s.p95_us),
        s.failures
    );
    Ok(if s.failures == 0 { EXIT_OK } else { EXIT_PLAN })
}

fn target_bundle(t: &BundleTarget) -> Result<BasisBundle, Failure> {
    match (&t.path, t.builtin) {
        (Some(p), _) => load_bundle(p).map_err(|e| Failure {
            code: EXIT_CHECK,
            message: format!("{}: {e}", p.display()),
        }),
        (None, Some(n)) => builtin_bundle(n)
            .cloned()
            .ok_or_else(|| Failure::usage(format!("no builtin bundle for order {n}"))),
        (None, None) => Err(Failure::usage("give a bundle path or --builtin <n>")),
    }
}

fn cmd_bundle(cmd: &BundleCommand, out: &mut dyn Write) -> CmdResult {
    match cmd {
        BundleCommand::Inspect(t) => {
            let b = target_bundle(t)?;
            let _ = write!(out, "{b}");
        }
        BundleCommand::Verify(t) => {
            let b = target_bundle(t)?;
            let present = b.profiles.iter().filter(|p| p.system.is_some()).count();
            let _ = writeln!(
                out,
                "OK: order {}, {} profiles ({} with systems)",
                b.n,
                b.profiles.len(),
                present
            );
        }
    }
    Ok(EXIT_OK)
}

/// Runs the tool with explicit output streams and returns the exit code.
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
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a, out, err),
        Command::Sample(a) => cmd_sample(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Bench(a) => cmd_bench(a, out, err),
        Command::Bundle(c) => cmd_bundle(c, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = run(args, &mut out, &mut err);
    let _ = out.flush();
    code
}
