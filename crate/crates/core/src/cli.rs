//! Command-line front end. Exit codes: 0 when every requested check passes,
//! 1 when a candidate control is screened out (or an example row fails),
//! 2 for usage and runtime errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::adjoint::solve_adjoint;
use crate::conditions::{check_conditions, Process, Scan, Tolerances, Verdict};
use crate::config::{load_problem_file, render};
use crate::error::{Error, Result};
use crate::export::{fmt12, read_control, Table};
use crate::forward::{evaluate_cost, manufactured_convergence, observed_orders, solve_fdde};
use crate::fracquad::{gamma, Order};
use crate::problem::{builtin_example, ControlSignal, Example, ProblemSpec, Vector};
use crate::variation::{halving_ladder, run_spike, SpikeShape};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCREENED: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fracopt", version, about = "Fractional delay optimal control: solvers and necessary-condition screens")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the state equation and print the cost.
    Solve(RunArgs),
    /// Solve the state and adjoint equations.
    Adjoint(RunArgs),
    /// Screen a control against the first- and second-order conditions.
    Check(CheckArgs),
    /// Spike-variation experiment on a ladder of widths.
    Spike(SpikeArgs),
    /// Reproduce a built-in example against its closed forms.
    Example(ExampleArgs),
    /// Convergence study on a problem with known solution.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Problem file (TOML).
    #[arg(long, value_name = "PATH", conflicts_with = "example")]
    pub config: Option<PathBuf>,
    /// Built-in problem instead of a file (ex1 or ex2).
    #[arg(long, value_name = "NAME")]
    pub example: Option<Example>,
    /// Override the derivative order.
    #[arg(long, value_name = "X")]
    pub alpha: Option<f64>,
    /// Override the number of grid steps.
    #[arg(long = "N", value_name = "K")]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ControlArgs {
    /// Control CSV with one row per grid cell.
    #[arg(long, value_name = "PATH", conflicts_with = "control_const")]
    pub control: Option<PathBuf>,
    /// Constant control, comma separated for vector controls.
    #[arg(long, value_name = "U", allow_hyphen_values = true)]
    pub control_const: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    /// Output CSV.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Maximum-condition tolerance [default: 1e-6 (1 + max |H|)]
    #[arg(long, value_name = "X")]
    pub tol_pmp: Option<f64>,
    /// Singularity tolerance [default: 1e-6 (1 + max |H|)]
    #[arg(long, value_name = "X")]
    pub tol_sing: Option<f64>,
    /// Second-order tolerance [default: 1e-8]
    #[arg(long = "tol-2nd", value_name = "X")]
    pub tol_2nd: Option<f64>,
    /// Scan points per control dimension.
    #[arg(long, value_name = "K", default_value_t = 201)]
    pub scan_points: usize,
}

#[derive(Debug, Args)]
pub struct SpikeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Spike start (a grid node).
    #[arg(long, allow_hyphen_values = true)]
    pub theta: f64,
    /// Spike value, comma separated for vector controls.
    #[arg(long, allow_hyphen_values = true)]
    pub v: String,
    /// Explicit widths, comma separated and decreasing.
    #[arg(long, value_name = "LIST", conflicts_with = "eps0")]
    pub eps: Option<String>,
    /// Largest width of a halving ladder.
    #[arg(long, value_name = "X")]
    pub eps0: Option<f64>,
    /// Number of halvings for --eps0.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Also apply the spike on the delayed interval.
    #[arg(long)]
    pub paired: bool,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    /// ex1 or ex2.
    pub name: Example,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long = "N", default_value_t = 200)]
    pub steps: usize,
    /// Write the pass/fail table as CSV.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Grid sizes, comma separated and increasing.
    #[arg(long, default_value = "50,100,200,400,800")]
    pub ladder: String,
    /// Output CSV
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Record of one invocation, written next to the outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub grid: Option<GridInfo>,
    pub tolerances: Option<TolInfo>,
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct GridInfo {
    pub alpha: f64,
    pub horizon: f64,
    pub delay: f64,
    pub steps: usize,
    pub dt: f64,
}

#[derive(Debug, Serialize)]
pub struct TolInfo {
    pub pmp: f64,
    pub sing: f64,
    pub second: f64,
}

impl GridInfo {
    fn of(spec: &ProblemSpec) -> Self {
        Self {
            alpha: spec.alpha.value(),
            horizon: spec.grid.horizon(),
            delay: spec.grid.delay(),
            steps: spec.grid.steps(),
            dt: spec.grid.dt(),
        }
    }
}

/// `<out>.manifest.json` next to the primary output.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

struct Session<'w> {
    command: &'static str,
    started: Instant,
    out: &'w mut dyn Write,
    outputs: Vec<PathBuf>,
    spec: Option<ProblemSpec>,
    tolerances: Option<TolInfo>,
}

impl<'w> Session<'w> {
    fn say(&mut self, line: impl AsRef<str>) -> Result<()> {
        writeln!(self.out, "{}", line.as_ref())?;
        Ok(())
    }

    fn save(&mut self, table: &Table, path: &Path) -> Result<()> {
        table.save(path)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let Some(primary) = self.outputs.first() else {
            return Ok(());
        };
        let manifest = RunManifest {
            command: self.command.into(),
            config: self.spec.as_ref().map(render).transpose()?,
            grid: self.spec.as_ref().map(GridInfo::of),
            tolerances: self.tolerances,
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Shape(e.to_string()))?;
        std::fs::write(manifest_path(primary), text + "\n")?;
        Ok(())
    }
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("{what}: `{s}` is not a number")))
        })
        .collect()
}

pub fn load_spec(args: &ProblemArgs) -> Result<ProblemSpec> {
    let mut spec = match (&args.config, args.example) {
        (Some(path), _) => load_problem_file(path)?,
        (None, Some(ex)) => {
            let alpha = Order::new(args.alpha.unwrap_or(0.5))?;
            builtin_example(ex, alpha, args.steps.unwrap_or(200))?
        }
        (None, None) => return Err(Error::Domain("either --config or --example is required".into())),
    };
    if let Some(a) = args.alpha {
        spec = spec.with_alpha(Order::new(a)?)?;
    }
    if let Some(n) = args.steps {
        if n != spec.grid.steps() {
            spec = spec.with_steps(n)?;
        }
    }
    Ok(spec)
}

pub fn load_control(args: &ControlArgs, spec: &ProblemSpec) -> Result<ControlSignal> {
    let u = match (&args.control, &args.control_const) {
        (Some(path), _) => read_control(&std::fs::read_to_string(path)?, &spec.grid)?,
        (None, Some(text)) => {
            let v = parse_list(text, "--control-const")?;
            if v.len() != spec.r() {
                return Err(Error::Shape(format!("control has {} components, problem needs {}", v.len(), spec.r())));
            }
            ControlSignal::constant(spec.grid.steps(), Vector::from_vec(v))
        }
        (None, None) => spec.zero_control(),
    };
    if u.dim() != spec.r() {
        return Err(Error::Shape(format!("control has {} components, problem needs {}", u.dim(), spec.r())));
    }
    u.check_admissible(&spec.controls)?;
    Ok(u)
}

fn cmd_solve(s: &mut Session, args: &RunArgs) -> Result<i32> {
    let spec = load_spec(&args.problem)?;
    let u = load_control(&args.control, &spec)?;
    let traj = solve_fdde(&spec, &u)?;
    let j = evaluate_cost(&spec, &traj, &u)?;
    s.say(format!("J = {}", fmt12(j)))?;
    if let Some(out) = &args.out {
        let mut table = traj.to_table();
        table.comment(format!("J = {}", fmt12(j)));
        s.save(&table, out)?;
    }
    s.spec = Some(spec);
    Ok(EXIT_OK)
}

fn cmd_adjoint(s: &mut Session, args: &RunArgs) -> Result<i32> {
    let spec = load_spec(&args.problem)?;
    let u = load_control(&args.control, &spec)?;
    let traj = solve_fdde(&spec, &u)?;
    let psi = solve_adjoint(&spec, &traj, &u)?;
    let p0 = psi.psi(0).iter().map(|&x| fmt12(x)).collect::<Vec<_>>().join(", ");
    s.say(format!("psi(0) = [{p0}]"))?;
    if let Some(out) = &args.out {
        s.save(&psi.to_table(), out)?;
        let state = out.with_extension("state.csv");
        s.save(&traj.to_table(), &state)?;
    }
    s.spec = Some(spec);
    Ok(EXIT_OK)
}

fn cmd_check(s: &mut Session, args: &CheckArgs) -> Result<i32> {
    let spec = load_spec(&args.run.problem)?;
    let u = load_control(&args.run.control, &spec)?;
    let traj = solve_fdde(&spec, &u)?;
    let psi = solve_adjoint(&spec, &traj, &u)?;
    let process = Process::new(&spec, &traj, &u, &psi)?;
    let tol = Tolerances {
        pmp: args.tol_pmp,
        sing: args.tol_sing,
        second: args.tol_2nd.unwrap_or(Tolerances::default().second),
    };
    let scan = Scan {
        points: args.scan_points.max(2),
        ..Scan::default()
    };
    let report = check_conditions(&process, &scan, &tol);
    for line in report.summary() {
        s.say(line)?;
    }
    if let Some(out) = &args.run.out {
        s.save(&report.to_table(), out)?;
    }
    s.tolerances = Some(TolInfo {
        pmp: report.first.tol,
        sing: report.singularity.tol,
        second: report.second.tol,
    });
    s.spec = Some(spec);
    Ok(match report.verdict() {
        Verdict::Passed => EXIT_OK,
        _ => EXIT_SCREENED,
    })
}

fn cmd_spike(s: &mut Session, args: &SpikeArgs) -> Result<i32> {
    let spec = load_spec(&args.run.problem)?;
    let u = load_control(&args.run.control, &spec)?;
    let v = parse_list(&args.v, "--v")?;
    let ladder = match (&args.eps, args.eps0) {
        (Some(list), _) => parse_list(list, "--eps")?,
        (None, Some(e0)) => halving_ladder(&spec.grid, e0, args.levels)?,
        (None, None) => return Err(Error::Domain("either --eps or --eps0 is required".into())),
    };
    let shape = if args.paired { SpikeShape::DelayPaired } else { SpikeShape::Single };
    let exp = run_spike(&spec, &u, args.theta, &v, &ladder, shape)?;
    let table = exp.to_table();
    match &args.run.out {
        Some(out) => s.save(&table, out)?,
        None => {
            let text = table.to_string();
            s.say(text.trim_end())?;
        }
    }
    s.spec = Some(spec);
    Ok(EXIT_OK)
}

/// One line of an example reproduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRow {
    pub check: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl ExampleRow {
    fn within(check: &str, value: f64, tol: f64) -> Self {
        Self {
            check: check.into(),
            value,
            tolerance: Some(tol),
            pass: value <= tol,
        }
    }

    fn flag(check: &str, pass: bool) -> Self {
        Self {
            check: check.into(),
            value: f64::from(u8::from(pass)),
            tolerance: None,
            pass,
        }
    }
}

/// `J(-1/2)` of the second example.
pub fn example2_cost(alpha: f64) -> f64 {
    -1.0 / (2f64.powf(2.0 * alpha + 2.0) * gamma(2.0 * alpha + 1.0))
}

/// Second adjoint component of the first example on `[0, 1/2)`.
pub fn example1_psi2(alpha: f64, t: f64) -> f64 {
    -gamma(alpha) / gamma(2.0 * alpha) * (1.0 - t).powf(1.0 - alpha) * (0.5 - t).powf(2.0 * alpha - 1.0)
}

/// Compare a built-in example with its closed forms.
pub fn reproduce_example(ex: Example, alpha: f64, steps: usize) -> Result<Vec<ExampleRow>> {
    let order = Order::new(alpha)?;
    let spec = builtin_example(ex, order, steps)?;
    let u = spec.zero_control();
    let traj = solve_fdde(&spec, &u)?;
    let psi = solve_adjoint(&spec, &traj, &u)?;
    let report = check_conditions(&Process::new(&spec, &traj, &u, &psi)?, &Scan::default(), &Tolerances::default());
    let grid = spec.grid;
    let half = grid.delay_steps();
    let mut rows = Vec::new();
    match ex {
        Example::Ex1 => {
            let e1 = (0..=grid.steps()).map(|i| (psi.psi(i)[0] + 1.0).abs()).fold(0.0, f64::max);
            let e2 = (0..half)
                .map(|i| (psi.psi(i)[1] - example1_psi2(alpha, grid.node(i))).abs())
                .fold(0.0, f64::max);
            rows.push(ExampleRow::within("psi_1 = -1 (max error)", e1, 1e-9));
            rows.push(ExampleRow::within("psi_2 closed form on [0, 1/2) (max error)", e2, 1e-2));
            rows.push(ExampleRow::flag(
                "first-order condition violated",
                report.verdict() == Verdict::FirstOrderViolated,
            ));
        }
        Example::Ex2 => {
            rows.push(ExampleRow::flag("singular everywhere", report.singular_everywhere()));
            rows.push(ExampleRow::flag(
                "second-order condition violated",
                report.verdict() == Verdict::SecondOrderViolated,
            ));
            let uh = ControlSignal::constant(grid.steps(), Vector::from_element(1, -0.5));
            let th = solve_fdde(&spec, &uh)?;
            let j = evaluate_cost(&spec, &th, &uh)?;
            rows.push(ExampleRow::within("J(-1/2) closed form (abs error)", (j - example2_cost(alpha)).abs(), 2e-3));
        }
    }
    Ok(rows)
}

fn cmd_example(s: &mut Session, args: &ExampleArgs) -> Result<i32> {
    let rows = reproduce_example(args.name, args.alpha, args.steps)?;
    s.say(format!("{} alpha = {} N = {}", args.name.name(), fmt12(args.alpha), args.steps))?;
    let header = ["check", "value", "tolerance", "result"].map(String::from).to_vec();
    let mut table = Table::new("example", header);
    for r in &rows {
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        let tol = r.tolerance.map(fmt12).unwrap_or_default();
        s.say(format!("{:<45} {:>20} {:>10} {verdict}", r.check, fmt12(r.value), tol))?;
        table.push(vec![r.check.clone(), fmt12(r.value), tol, verdict.into()]);
    }
    if let Some(out) = &args.out {
        s.save(&table, out)?;
    }
    s.spec = Some(builtin_example(args.name, Order::new(args.alpha)?, args.steps)?);
    Ok(if rows.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_SCREENED })
}

fn cmd_convergence(s: &mut Session, args: &ConvergenceArgs) -> Result<i32> {
    let ladder: Vec<usize> = args
        .ladder
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| Error::Domain(format!("--ladder: `{x}` is not a step count")))
        })
        .collect::<Result<_>>()?;
    let errors = manufactured_convergence(Order::new(args.alpha)?, &ladder)?;
    let orders = observed_orders(&errors);
    let header = ["N", "max_error", "order"].map(String::from).to_vec();
    let mut table = Table::new("convergence", header);
    table.comment(format!("alpha = {}", fmt12(args.alpha)));
    for (k, &(n, e)) in errors.iter().enumerate() {
        let order = if k == 0 { String::new() } else { fmt12(orders[k - 1]) };
        s.say(format!("N = {n:>6}  error = {:>20}  order = {order}", fmt12(e)))?;
        table.push(vec![n.to_string(), fmt12(e), order]);
    }
    if let Some(out) = &args.out {
        s.save(&table, out)?;
    }
    Ok(EXIT_OK)
}

/// Run a parsed command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let command = match &cli.command {
        Command::Solve(_) => "solve",
        Command::Adjoint(_) => "adjoint",
        Command::Check(_) => "check",
        Command::Spike(_) => "spike",
        Command::Example(_) => "example",
        Command::Convergence(_) => "convergence",
    };
    let mut s = Session {
        command,
        started: Instant::now(),
        out,
        outputs: Vec::new(),
        spec: None,
        tolerances: None,
    };
    let code = match &cli.command {
        Command::Solve(a) => cmd_solve(&mut s, a)?,
        Command::Adjoint(a) => cmd_adjoint(&mut s, a)?,
        Command::Check(a) => cmd_check(&mut s, a)?,
        Command::Spike(a) => cmd_spike(&mut s, a)?,
        Command::Example(a) => cmd_example(&mut s, a)?,
        Command::Convergence(a) => cmd_convergence(&mut s, a)?,
    };
    s.finish()?;
    Ok(code)
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}
