//! Time-periodic solutions of the nonlinear problem through the fixed-point
//! equation `u = C(u) u + D(u) (F(u) - B(u) u)`.
//!
//! One iteration freezes the operators at the current iterate. The Picard
//! update solves the frozen linear problem,
//! `u+ = (I - C(u))^{-1} D(u) (F(u) - B(u) u)`; the quasi-Newton update also
//! accounts for the off-diagonal part `B~(u) = F'(u) - B(u)` by solving
//! `(I - (I - C)^{-1} D B~) w = u+ - u` and setting `u <- u + w`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::krylov::gmres;
use crate::nonresonance::{any_satisfied, reports_from_transport, NonresonanceReport, DEFAULT_TOLERANCE};
use crate::par;
use crate::problem::FirstOrderProblem;
use crate::transport::{Setup, ShiftMode, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Accelerant {
    Picard,
    QuasiNewton,
}

impl std::str::FromStr for Accelerant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard" => Ok(Accelerant::Picard),
            "quasi_newton" | "quasi-newton" | "qn" => Ok(Accelerant::QuasiNewton),
            other => Err(Error::Options(format!("unknown accelerant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Sup-norm tolerance on the fixed-point residual.
    pub tol: f64,
    /// Initial relaxation; halved while the residual grows.
    pub relaxation: f64,
    pub accelerant: Accelerant,
    /// Evaluate the non-resonance conditions every this many iterations
    /// (0 disables the check).
    pub check_resonance_every: usize,
    /// Margin tolerance of the non-resonance check.
    pub resonance_tol: f64,
    pub mode: ShiftMode,
    /// Relative tolerance of the inner quasi-Newton solve.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            relaxation: 1.0,
            accelerant: Accelerant::QuasiNewton,
            check_resonance_every: 1,
            resonance_tol: DEFAULT_TOLERANCE,
            mode: ShiftMode::Auto,
            inner_tol: 1e-11,
            inner_max_iter: 200,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Options("tol must be positive".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::Options("relaxation must lie in (0, 1]".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Options("max_iter must be positive".into()));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::Options("inner_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the fixed-point residual at every evaluated iterate.
    pub residual_history: Vec<f64>,
    /// Inner solver iterations per step.
    pub inner_iterations: Vec<usize>,
    pub accelerant: Accelerant,
    /// Non-resonance reports at the last checked iterate.
    pub nonresonance: Vec<NonresonanceReport>,
    /// The final (or best) iterate.
    #[serde(skip)]
    pub solution: PeriodicField,
    /// For wave equations: the first-order field behind `solution`.
    #[serde(skip)]
    pub first_order_field: Option<PeriodicField>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Everything the iteration needs from a state `u`.
pub(crate) struct Linearization {
    /// `F(u)` including sources.
    pub rhs: PeriodicField,
    /// Diagonal part `B(u)` of `F'(u)`.
    pub diagonal: PeriodicField,
    /// False when `F'(u) - B(u)` vanishes identically.
    pub coupled: bool,
    /// `w -> (F'(u) - B(u)) w`.
    pub coupling: Box<dyn Fn(&PeriodicField) -> Result<PeriodicField> + Send + Sync>,
}

/// A first-order periodic problem in fixed-point form.
pub(crate) trait FixedPointSystem {
    fn setup(&self) -> &Arc<Setup>;
    fn linearize(&self, u: &PeriodicField) -> Result<Linearization>;
    fn nonresonance(&self, tr: &Transport, tol: f64) -> Vec<NonresonanceReport>;
}

/// The system `d_t u_j + a_j d_x u_j = f_j(x, u) + g_j(t, x)`.
pub(crate) struct FirstOrderSystem<'a> {
    problem: &'a FirstOrderProblem,
    setup: Arc<Setup>,
    source: Option<PeriodicField>,
}

impl<'a> FirstOrderSystem<'a> {
    pub fn new(problem: &'a FirstOrderProblem, like: &PeriodicField) -> Result<Self> {
        if like.components() != 2 {
            return Err(Error::Shape("expected a two-component field".into()));
        }
        let setup = Arc::new(Setup::for_problem(problem, like.time(), like.space())?);
        let source = if problem.source.is_none() {
            None
        } else {
            Some(PeriodicField::try_from_fn(like.time(), like.space(), 2, |c, t, x| problem.source_value(c, t, x))?)
        };
        Ok(Self { problem, setup, source })
    }
}

/// `(f_j, d f_j / d u_1, d f_j / d u_2)` at all grid points.
fn pointwise_partials(p: &FirstOrderProblem, u: &PeriodicField) -> Result<[PeriodicField; 3]> {
    let space = u.space();
    let (n, np) = (u.n_t(), space.points());
    let columns = par::map_range(2 * np, |idx| -> Result<[Vec<f64>; 3]> {
        let (c, k) = (idx / np, idx % np);
        let x = space.node(k);
        let (c0, c1) = (u.column(0, k), u.column(1, k));
        let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let (v, d1, d2) = p.partials(c, x, [c0[i], c1[i]])?;
            out[0][i] = v;
            out[1][i] = d1;
            out[2][i] = d2;
        }
        Ok(out)
    });
    let mut data = [Vec::with_capacity(2 * np * n), Vec::with_capacity(2 * np * n), Vec::with_capacity(2 * np * n)];
    for col in columns {
        let col = col?;
        for (d, c) in data.iter_mut().zip(col) {
            d.extend(c);
        }
    }
    let [f, d1, d2] = data;
    let make = |d| PeriodicField::from_columns(u.time().clone(), space, 2, d);
    Ok([make(f)?, make(d1)?, make(d2)?])
}

impl FixedPointSystem for FirstOrderSystem<'_> {
    fn setup(&self) -> &Arc<Setup> {
        &self.setup
    }

    fn linearize(&self, u: &PeriodicField) -> Result<Linearization> {
        let [f, d1, d2] = pointwise_partials(self.problem, u)?;
        let rhs = match &self.source {
            Some(g) => f.add(g)?,
            None => f,
        };
        let n = u.n_t() * u.space().points();
        let mut diag = d1.data()[..n].to_vec();
        diag.extend_from_slice(&d2.data()[n..]);
        let diagonal = PeriodicField::from_columns(u.time().clone(), u.space(), 2, diag)?;
        // Off-diagonal weights: d f_1 / d u_2 on component 1, d f_2 / d u_1 on component 2.
        let mut off = d2.data()[..n].to_vec();
        off.extend_from_slice(&d1.data()[n..]);
        let coupled = off.iter().any(|&v| v != 0.0);
        let coupling = move |w: &PeriodicField| -> Result<PeriodicField> {
            let wd = w.data();
            let mut out = vec![0.0; 2 * n];
            for i in 0..n {
                out[i] = off[i] * wd[n + i];
                out[n + i] = off[n + i] * wd[i];
            }
            PeriodicField::from_columns(w.time().clone(), w.space(), 2, out)
        };
        Ok(Linearization {
            rhs,
            diagonal,
            coupled,
            coupling: Box::new(coupling),
        })
    }

    fn nonresonance(&self, tr: &Transport, tol: f64) -> Vec<NonresonanceReport> {
        reports_from_transport(tr, tol).to_vec()
    }
}

/// State of one frozen linearization.
struct Frozen {
    transport: Transport,
    lin: Linearization,
    /// `u - C u - D (F - B u)`.
    residual: PeriodicField,
    /// `D (F - B u)`.
    forcing: PeriodicField,
}

fn freeze<S: FixedPointSystem>(sys: &S, u: &PeriodicField) -> Result<Frozen> {
    let lin = sys.linearize(u)?;
    let transport = Transport::new(sys.setup().clone(), lin.diagonal.clone())?;
    let forcing = transport.apply_d(&lin.rhs.sub(&transport.apply_b(u)?)?)?;
    let residual = u.sub(&transport.apply_c(u)?)?.sub(&forcing)?;
    Ok(Frozen {
        transport,
        lin,
        residual,
        forcing,
    })
}

/// `u - C(u) u - D(u) (F(u) - B(u) u)` with `F` including sources.
pub fn fixed_point_residual(u: &PeriodicField, p: &FirstOrderProblem) -> Result<PeriodicField> {
    system_residual(&FirstOrderSystem::new(p, u)?, u)
}

/// Fixed-point residual of any system at `u`.
pub(crate) fn system_residual<S: FixedPointSystem>(sys: &S, u: &PeriodicField) -> Result<PeriodicField> {
    Ok(freeze(sys, u)?.residual)
}

/// Solves `(I - (I - C)^{-1} D B~) w = h` for the frozen state.
fn quasi_newton_correction(frozen: &Frozen, h: &PeriodicField, opts: &SolveOptions) -> Result<(PeriodicField, usize)> {
    let tr = &frozen.transport;
    let apply_k = |w: &PeriodicField| -> Result<PeriodicField> {
        let coupled = (frozen.lin.coupling)(w)?;
        Ok(tr.solve_linear(&coupled, opts.mode)?.field)
    };
    if !frozen.lin.coupled {
        return Ok((h.clone(), 0));
    }
    // A few Neumann sweeps first; switch to GMRES unless they contract fast.
    let mut w = h.clone();
    let mut last_change = f64::INFINITY;
    for sweep in 1..=3 {
        let next = apply_k(&w)?.add(h)?;
        let change = next.sup_dist(&w)?;
        w = next;
        if change <= opts.inner_tol * w.sup_norm().max(1e-300) {
            return Ok((w, sweep));
        }
        if change > 0.1 * last_change {
            break;
        }
        last_change = change;
    }
    let like = h.clone();
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let xf = PeriodicField::from_columns(like.time().clone(), like.space(), like.components(), x.to_vec())?;
        let kx = apply_k(&xf)?;
        Ok(x.iter().zip(kx.data()).map(|(a, b)| a - b).collect())
    };
    let sol = gmres(&apply, h.data(), 40, opts.inner_max_iter, opts.inner_tol)?;
    Ok((PeriodicField::from_columns(h.time().clone(), h.space(), h.components(), sol.x)?, sol.iterations))
}

/// One quasi-Newton step from `u` for a first-order problem.
pub fn quasi_newton_step(u: &PeriodicField, p: &FirstOrderProblem) -> Result<PeriodicField> {
    let sys = FirstOrderSystem::new(p, u)?;
    let opts = SolveOptions::default();
    let frozen = freeze(&sys, u)?;
    let picard = frozen.transport.solve_i_minus_c(&frozen.forcing, opts.mode)?.field;
    let h = picard.sub(u)?;
    let (w, _) = quasi_newton_correction(&frozen, &h, &opts)?;
    u.add(&w)
}

/// Maximal number of step halvings per iteration.
const MAX_HALVINGS: usize = 8;

pub(crate) fn solve_system<S: FixedPointSystem>(sys: &S, u0: &PeriodicField, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let mut report = SolveReport {
        converged: false,
        iterations: 0,
        residual_history: Vec::new(),
        inner_iterations: Vec::new(),
        accelerant: opts.accelerant,
        nonresonance: Vec::new(),
        solution: u0.clone(),
        first_order_field: None,
    };
    let mut u = u0.clone();
    let mut frozen = freeze(sys, &u)?;
    let mut best = (f64::INFINITY, u.clone());
    let mut omega = opts.relaxation;
    loop {
        let res = frozen.residual.sup_norm();
        report.iterations += 1;
        report.residual_history.push(res);
        log::debug!("iteration {}: residual {res:.3e}", report.iterations);
        if res < best.0 {
            best = (res, u.clone());
        }
        let check = opts.check_resonance_every > 0 && (report.iterations - 1).is_multiple_of(opts.check_resonance_every);
        if check || res <= opts.tol {
            report.nonresonance = sys.nonresonance(&frozen.transport, opts.resonance_tol);
        }
        // A resonant linearization is reported even at a zero residual.
        if check && !any_satisfied(&report.nonresonance) {
            report.solution = u;
            return Err(Error::ResonantIterate(Box::new(report)));
        }
        if res <= opts.tol {
            report.converged = true;
            report.solution = u;
            return Ok(report);
        }
        if report.iterations >= opts.max_iter {
            report.solution = best.1;
            return Err(Error::MaxIterationsExceeded(Box::new(report)));
        }
        let step = match compute_step(&frozen, &u, opts) {
            Ok((step, inner)) => {
                report.inner_iterations.push(inner);
                step
            }
            Err(Error::ResonantGain { .. }) => {
                report.nonresonance = sys.nonresonance(&frozen.transport, opts.resonance_tol);
                report.solution = u;
                return Err(Error::ResonantIterate(Box::new(report)));
            }
            Err(e) => return Err(e),
        };
        // Accept the relaxed step, halving while the residual grows.
        let mut halvings = 0;
        loop {
            let candidate = u.lincomb(1.0, &step, omega)?;
            let next = freeze(sys, &candidate);
            let accept = match &next {
                Ok(f) => f.residual.sup_norm() <= res || halvings >= MAX_HALVINGS,
                Err(_) => false,
            };
            if accept {
                u = candidate;
                frozen = next?;
                break;
            }
            if halvings >= MAX_HALVINGS {
                return next.map(|_| unreachable!("accepted above"));
            }
            halvings += 1;
            omega *= 0.5;
        }
        // Recover the full step once things improve again.
        omega = (2.0 * omega).min(opts.relaxation);
    }
}

fn compute_step(frozen: &Frozen, u: &PeriodicField, opts: &SolveOptions) -> Result<(PeriodicField, usize)> {
    let picard = frozen.transport.solve_i_minus_c(&frozen.forcing, opts.mode)?;
    let h = picard.field.sub(u)?;
    match opts.accelerant {
        Accelerant::Picard => Ok((h, picard.trace.iterations)),
        Accelerant::QuasiNewton => quasi_newton_correction(frozen, &h, opts),
    }
}

/// Solves a first-order problem from the initial guess `u0`.
pub fn picard_solve(p: &FirstOrderProblem, u0: &PeriodicField, opts: &SolveOptions) -> Result<SolveReport> {
    let sys = FirstOrderSystem::new(p, u0)?;
    solve_system(&sys, u0, opts)
}
