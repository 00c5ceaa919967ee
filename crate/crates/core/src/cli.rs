//! Command-line front end. Every subcommand writes JSON reports (and CSV
//! fields where useful) into `--out` and maps outcomes to exit codes:
//! 0 success, 1 input error, 2 resonant iterate, 3 no convergence,
//! 4 failed identity.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::diagnostics::{classical_residual, counterexample_field, regularity_estimate, weak_residual, PhiKind, RegularityEstimate};
use crate::error::{Error, Result};
use crate::field::{PeriodicField, SpaceGrid, TimeGrid};
use crate::identities::{battery_problem, run_battery, BatteryConfig};
use crate::nonresonance::{
    chebyshev_eigenvalues, check_first_order, check_second_order, check_second_order_as_printed, nearest_distance, stationary_eigenvalues,
    Complex, NonresonanceReport, DEFAULT_TOLERANCE,
};
use crate::problem::{FirstOrderProblem, Problem};
use crate::report::write_json;
use crate::solver::{picard_solve, Accelerant, SolveOptions, SolveReport};
use crate::transport::ShiftMode;
use crate::wave2fos::{fos_fixed_point_residual, solve_second_order, to_fos};

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_RESONANT: i32 = 2;
pub const EXIT_MAX_ITER: i32 = 3;
pub const EXIT_IDENTITY: i32 = 4;

/// Admissible range of `n_t` and `n_x`.
pub const GRID_RANGE: std::ops::RangeInclusive<usize> = 8..=4096;

#[derive(Debug, Parser)]
#[command(name = "perihyp", version, about = "Time-periodic solutions of 1D semilinear hyperbolic problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Problem description (JSON).
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Time nodes per period.
    #[arg(long)]
    pub nt: Option<usize>,
    /// Space cells.
    #[arg(long)]
    pub nx: Option<usize>,
    /// Residual tolerance of the solver.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shift-equation branch: auto, neumann, inverted or dense.
    #[arg(long, default_value = "auto")]
    pub mode: ShiftMode,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a first- or second-order problem.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// picard or quasi_newton.
        #[arg(long, default_value = "quasi_newton")]
        accelerant: Accelerant,
    },
    /// Evaluate the non-resonance conditions at a state.
    CheckNonres {
        #[command(flatten)]
        common: CommonArgs,
        /// State field (CSV); defaults to the exact, stationary or zero state.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Stationary eigenvalues by formula and by a collocation oracle.
    Eigen {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 5)]
        k_max: i64,
        /// Chebyshev degree of the oracle.
        #[arg(long, default_value_t = 64)]
        degree: usize,
    },
    /// The resonant family u_phi and its residuals.
    Counterexample {
        #[command(flatten)]
        common: CommonArgs,
        /// triangle, quadratic_spline or smooth_harmonic.
        #[arg(long, default_value = "triangle")]
        phi: PhiKind,
    },
    /// Residuals and Fourier regularity of a field or of the computed solution.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        /// Field to diagnose (CSV); the problem is solved when omitted.
        #[arg(long)]
        field: Option<PathBuf>,
        /// Probe abscissae of the regularity estimate.
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        probes: Vec<f64>,
    },
    /// Operator identity battery at two resolutions.
    Identities {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 20)]
        fields: usize,
    },
}

/// Resolved settings shared by all subcommands, echoed in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub problem: Option<PathBuf>,
    pub nt: usize,
    pub nx: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub mode: ShiftMode,
}

impl RunConfig {
    fn new(command: &'static str, c: &CommonArgs, default_grid: (usize, usize)) -> Result<Self> {
        let nt = c.nt.unwrap_or(default_grid.0);
        let nx = c.nx.unwrap_or(default_grid.1);
        for (name, n) in [("nt", nt), ("nx", nx)] {
            if !GRID_RANGE.contains(&n) {
                return Err(Error::Options(format!(
                    "--{name} {n} outside [{}, {}]",
                    GRID_RANGE.start(),
                    GRID_RANGE.end()
                )));
            }
        }
        if !(c.tol > 0.0) {
            return Err(Error::Options("--tol must be positive".into()));
        }
        Ok(Self {
            command,
            problem: c.problem.clone(),
            nt,
            nx,
            tol: c.tol,
            max_iter: c.max_iter,
            out: c.out.clone(),
            seed: c.seed,
            mode: c.mode,
        })
    }

    fn grids(&self) -> Result<(TimeGrid, SpaceGrid)> {
        Ok((TimeGrid::new(self.nt)?, SpaceGrid::new(self.nx)?))
    }

    fn load_problem(&self) -> Result<Problem> {
        let path = self
            .problem
            .as_ref()
            .ok_or_else(|| Error::Options(format!("`{}` needs --problem", self.command)))?;
        let p = Problem::from_path(path)?;
        let v = p.validate()?;
        if !v.passed {
            return Err(Error::InvalidProblem(v.describe()));
        }
        Ok(p)
    }

    fn prepare_out(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }

    fn solve_options(&self, accelerant: Accelerant) -> SolveOptions {
        SolveOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            accelerant,
            mode: self.mode,
            ..SolveOptions::default()
        }
    }
}

/// Parses the arguments, runs the subcommand and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Solve { common, accelerant } => cmd_solve(&common, accelerant),
        Command::CheckNonres { common, state } => cmd_check_nonres(&common, state.as_deref()),
        Command::Eigen { common, k_max, degree } => cmd_eigen(&common, k_max, degree),
        Command::Counterexample { common, phi } => cmd_counterexample(&common, phi),
        Command::Diagnose { common, field, probes } => cmd_diagnose(&common, field.as_deref(), &probes),
        Command::Identities { common, fields } => cmd_identities(&common, fields),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn write_field(path: &Path, field: &PeriodicField) -> Result<()> {
    field.write_csv(BufWriter::new(File::create(path)?))
}

fn read_field(path: &Path) -> Result<PeriodicField> {
    PeriodicField::read_csv(std::io::BufReader::new(File::open(path)?))
}

fn check_grid(field: &PeriodicField, cfg: &mut RunConfig) {
    cfg.nt = field.n_t();
    cfg.nx = field.space().cells();
}

/// Sup-norm distance of `u` to the exact solution of a manufactured problem.
fn exact_error(u: &PeriodicField, p: &Problem) -> Result<Option<f64>> {
    let exact = match p {
        Problem::FirstOrder(q) => q.exact_solution().map(|e| e.to_vec()),
        Problem::SecondOrder(q) => q.exact_solution().map(|e| vec![e.clone()]),
    };
    let Some(exact) = exact else { return Ok(None) };
    let reference = PeriodicField::try_from_fn(u.time(), u.space(), exact.len(), |c, t, x| exact[c].eval(&[t, x]))?;
    Ok(Some(u.sup_dist(&reference)?))
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    config: &'a RunConfig,
    outcome: &'static str,
    report: &'a SolveReport,
    exact_error: Option<f64>,
}

#[derive(Serialize)]
struct NonresOutput<'a> {
    config: &'a RunConfig,
    state: &'a str,
    reports: &'a [NonresonanceReport],
    /// Second order only: the integrand `(b_+ - b_-) / a`, for comparison.
    as_printed: &'a [NonresonanceReport],
    satisfied: bool,
}

fn log_nonresonance(reports: &[NonresonanceReport]) {
    for r in reports {
        say!("{:?}: margin {:.6e} ({:?})", r.condition_id, r.margin, r.verdict);
    }
}

pub fn cmd_solve(common: &CommonArgs, accelerant: Accelerant) -> Result<i32> {
    let cfg = RunConfig::new("solve", common, (64, 100))?;
    let problem = cfg.load_problem()?;
    let (time, space) = cfg.grids()?;
    let opts = cfg.solve_options(accelerant);
    let result = match &problem {
        Problem::FirstOrder(p) => picard_solve(p, &PeriodicField::zeros(&time, space, 2), &opts),
        Problem::SecondOrder(p) => solve_second_order(p, &PeriodicField::zeros(&time, space, 1), &opts),
    };
    let (report, outcome, code) = match result {
        Ok(r) => (r, "converged", EXIT_OK),
        Err(Error::ResonantIterate(r)) => (*r, "resonant_iterate", EXIT_RESONANT),
        Err(Error::MaxIterationsExceeded(r)) => (*r, "max_iterations_exceeded", EXIT_MAX_ITER),
        Err(e) => return Err(e),
    };
    let out = cfg.prepare_out()?;
    write_field(&out.join("solution.csv"), &report.solution)?;
    if let Some(v) = &report.first_order_field {
        write_field(&out.join("first_order_solution.csv"), v)?;
    }
    let output = SolveOutput {
        config: &cfg,
        outcome,
        report: &report,
        exact_error: exact_error(&report.solution, &problem)?,
    };
    write_json(&out.join("solve_report.json"), &output)?;
    let nonres = NonresOutput {
        config: &cfg,
        state: "final_iterate",
        reports: &report.nonresonance,
        as_printed: &[],
        satisfied: report.nonresonance.iter().any(NonresonanceReport::satisfied),
    };
    write_json(&out.join("nonresonance.json"), &nonres)?;
    say!(
        "{outcome} after {} iterations, residual {:.3e}",
        report.iterations,
        report.final_residual()
    );
    log_nonresonance(&report.nonresonance);
    Ok(code)
}

/// State at which the conditions are evaluated when none is given.
fn default_state(problem: &Problem, time: &TimeGrid, space: SpaceGrid) -> Result<(PeriodicField, &'static str)> {
    match problem {
        Problem::FirstOrder(p) => {
            if let Some(e) = p.exact_solution() {
                let f = PeriodicField::try_from_fn(time, space, 2, |c, t, x| e[c].eval(&[t, x]))?;
                return Ok((f, "exact"));
            }
            if let Some(s) = &p.stationary {
                let f = PeriodicField::try_from_fn(time, space, 2, |c, _, x| s[c].eval(&[x]))?;
                return Ok((f, "stationary"));
            }
            Ok((PeriodicField::zeros(time, space, 2), "zero"))
        }
        Problem::SecondOrder(p) => match p.exact_solution() {
            Some(e) => Ok((PeriodicField::try_from_fn(time, space, 1, |_, t, x| e.eval(&[t, x]))?, "exact")),
            None => Ok((PeriodicField::zeros(time, space, 1), "zero")),
        },
    }
}

pub fn cmd_check_nonres(common: &CommonArgs, state: Option<&Path>) -> Result<i32> {
    let mut cfg = RunConfig::new("check-nonres", common, (64, 100))?;
    let problem = cfg.load_problem()?;
    let (time, space) = cfg.grids()?;
    let (u, label) = match state {
        Some(path) => {
            let f = read_field(path)?;
            check_grid(&f, &mut cfg);
            (f, "file")
        }
        None => default_state(&problem, &time, space)?,
    };
    let (reports, as_printed) = match &problem {
        Problem::FirstOrder(p) => (check_first_order(&u, p, DEFAULT_TOLERANCE)?.to_vec(), Vec::new()),
        Problem::SecondOrder(p) => (
            check_second_order(&u, p, DEFAULT_TOLERANCE)?.to_vec(),
            check_second_order_as_printed(&u, p, DEFAULT_TOLERANCE)?.to_vec(),
        ),
    };
    let output = NonresOutput {
        config: &cfg,
        state: label,
        reports: &reports,
        as_printed: &as_printed,
        satisfied: reports.iter().any(NonresonanceReport::satisfied),
    };
    write_json(&cfg.prepare_out()?.join("nonresonance.json"), &output)?;
    log_nonresonance(&reports);
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct EigenEntry {
    k: i64,
    formula: Complex,
    oracle_distance: f64,
}

#[derive(Serialize)]
struct EigenOutput<'a> {
    config: &'a RunConfig,
    degree: usize,
    eigenvalues: Vec<EigenEntry>,
    max_oracle_distance: f64,
}

pub fn cmd_eigen(common: &CommonArgs, k_max: i64, degree: usize) -> Result<i32> {
    let cfg = RunConfig::new("eigen", common, (64, 100))?;
    let Problem::FirstOrder(p) = cfg.load_problem()? else {
        return Err(Error::Options("`eigen` needs a first-order problem".into()));
    };
    let stationary = p.stationary.clone();
    let ustat = move |x: f64| -> Result<[f64; 2]> {
        match &stationary {
            Some(s) => Ok([s[0].eval(&[x])?, s[1].eval(&[x])?]),
            None => Ok([0.0, 0.0]),
        }
    };
    let formula = stationary_eigenvalues(&p, &ustat, -k_max..=k_max)?;
    let oracle = chebyshev_eigenvalues(&p, &ustat, degree)?;
    let eigenvalues: Vec<EigenEntry> = formula
        .into_iter()
        .map(|(k, z)| EigenEntry {
            k,
            formula: z,
            oracle_distance: nearest_distance(z, &oracle),
        })
        .collect();
    let max_oracle_distance = eigenvalues.iter().map(|e| e.oracle_distance).fold(0.0, f64::max);
    for e in &eigenvalues {
        say!("k = {:3}: {:.12} {:+.12}i  (oracle distance {:.3e})", e.k, e.formula.re, e.formula.im, e.oracle_distance);
    }
    let output = EigenOutput {
        config: &cfg,
        degree,
        eigenvalues,
        max_oracle_distance,
    };
    write_json(&cfg.prepare_out()?.join("eigen.json"), &output)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ResidualPair {
    nt: usize,
    weak: f64,
    classical: f64,
}

#[derive(Serialize)]
struct CounterexampleOutput<'a> {
    config: &'a RunConfig,
    phi: PhiKind,
    nonresonance: Vec<NonresonanceReport>,
    /// Residuals at `n_t` and `2 n_t`.
    refinement: Vec<ResidualPair>,
    regularity: Option<&'a RegularityEstimate>,
}

pub const DEFAULT_PROBES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub fn cmd_counterexample(common: &CommonArgs, phi: PhiKind) -> Result<i32> {
    let cfg = RunConfig::new("counterexample", common, (128, 100))?;
    let (time, space) = cfg.grids()?;
    let (u, p) = counterexample_field(phi, &time, space)?;
    let nonresonance = check_first_order(&u, &p, DEFAULT_TOLERANCE)?.to_vec();
    let mut refinement = Vec::new();
    for nt in [cfg.nt, 2 * cfg.nt] {
        let (uf, pf) = counterexample_field(phi, &TimeGrid::new(nt)?, space)?;
        refinement.push(ResidualPair {
            nt,
            weak: weak_residual(&uf, &pf)?,
            classical: classical_residual(&uf, &Problem::FirstOrder(pf.clone()))?,
        });
    }
    let regularity = if cfg.nt >= crate::diagnostics::MIN_REGULARITY_NT {
        Some(regularity_estimate(&u, &DEFAULT_PROBES)?)
    } else {
        None
    };
    let out = cfg.prepare_out()?;
    write_field(&out.join("u_phi.csv"), &u)?;
    if let Some(r) = &regularity {
        r.write_csv(BufWriter::new(File::create(out.join("fourier.csv"))?))?;
    }
    for r in &refinement {
        say!("n_t = {:5}: weak residual {:.3e}, classical residual {:.3e}", r.nt, r.weak, r.classical);
    }
    log_nonresonance(&nonresonance);
    let output = CounterexampleOutput {
        config: &cfg,
        phi,
        nonresonance,
        refinement,
        regularity: regularity.as_ref(),
    };
    write_json(&out.join("counterexample.json"), &output)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DiagnoseOutput<'a> {
    config: &'a RunConfig,
    source: &'a str,
    weak_residual: f64,
    classical_residual: f64,
    exact_error: Option<f64>,
    regularity: Option<&'a RegularityEstimate>,
}

pub fn cmd_diagnose(common: &CommonArgs, field: Option<&Path>, probes: &[f64]) -> Result<i32> {
    let mut cfg = RunConfig::new("diagnose", common, (64, 100))?;
    let problem = cfg.load_problem()?;
    let (u, source) = match field {
        Some(path) => {
            let f = read_field(path)?;
            check_grid(&f, &mut cfg);
            (f, "file")
        }
        None => {
            let (time, space) = cfg.grids()?;
            let opts = cfg.solve_options(Accelerant::QuasiNewton);
            let result = match &problem {
                Problem::FirstOrder(p) => picard_solve(p, &PeriodicField::zeros(&time, space, 2), &opts),
                Problem::SecondOrder(p) => solve_second_order(p, &PeriodicField::zeros(&time, space, 1), &opts),
            };
            match result {
                Ok(r) => (r.solution, "solution"),
                Err(Error::ResonantIterate(r)) | Err(Error::MaxIterationsExceeded(r)) => (r.solution, "best_iterate"),
                Err(e) => return Err(e),
            }
        }
    };
    let weak = match &problem {
        Problem::FirstOrder(p) => weak_residual(&u, p)?,
        Problem::SecondOrder(p) => fos_fixed_point_residual(&to_fos(&u, p)?, p)?.sup_norm(),
    };
    let classical = classical_residual(&u, &problem)?;
    let regularity = if u.n_t() >= crate::diagnostics::MIN_REGULARITY_NT {
        Some(regularity_estimate(&u, probes)?)
    } else {
        None
    };
    let out = cfg.prepare_out()?;
    if let Some(r) = &regularity {
        r.write_csv(BufWriter::new(File::create(out.join("fourier.csv"))?))?;
        match r.exponent {
            Some(s) => say!("decay exponent {s:.3} (spectral: {})", r.spectral_flag),
            None => say!("no decay fit (spectral: {})", r.spectral_flag),
        }
    }
    say!("weak residual {weak:.3e}, classical residual {classical:.3e}");
    let output = DiagnoseOutput {
        config: &cfg,
        source,
        weak_residual: weak,
        classical_residual: classical,
        exact_error: exact_error(&u, &problem)?,
        regularity: regularity.as_ref(),
    };
    write_json(&out.join("diagnostics.json"), &output)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct IdentitiesOutput<'a> {
    config: &'a RunConfig,
    battery: crate::identities::BatteryReport,
}

pub fn cmd_identities(common: &CommonArgs, fields: usize) -> Result<i32> {
    let cfg = RunConfig::new("identities", common, (128, 200))?;
    let p: FirstOrderProblem = match &cfg.problem {
        Some(_) => match cfg.load_problem()? {
            Problem::FirstOrder(p) => p,
            Problem::SecondOrder(_) => return Err(Error::Options("`identities` needs a first-order problem".into())),
        },
        None => battery_problem(),
    };
    let fine = (2 * cfg.nt, 2 * cfg.nx);
    if !GRID_RANGE.contains(&fine.0) || !GRID_RANGE.contains(&fine.1) {
        return Err(Error::Options("the doubled grid exceeds the admissible range".into()));
    }
    let battery = run_battery(
        &p,
        &BatteryConfig {
            seed: cfg.seed,
            fields,
            coarse: (cfg.nt, cfg.nx),
            fine,
            mode: cfg.mode,
        },
    )?;
    for c in &battery.checks {
        say!(
            "{:<18} coarse {:.3e}  fine {:.3e}  ratio {:8.2}  {}",
            c.name,
            c.coarse,
            c.fine,
            c.ratio,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    let passed = battery.passed;
    write_json(&cfg.prepare_out()?.join("identities.json"), &IdentitiesOutput { config: &cfg, battery })?;
    Ok(if passed { EXIT_OK } else { EXIT_IDENTITY })
}
