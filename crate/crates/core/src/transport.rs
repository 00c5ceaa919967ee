//! The characteristic operators of the linearized system
//!
//! ```text
//! A v = (d_t v_j + a_j d_x v_j)_j,        B v = (b_j v_j)_j,
//! [C v]_1(t, x) = r1 c_1(t, x, 0) v_2(t + alpha_1(x, 0), 0),
//! [C v]_2(t, x) = r2 c_2(t, x, 1) v_1(t + alpha_2(x, 1), 1),
//! [D v]_1(t, x) =  int_0^x c_1(t, x, y) v_1(t + alpha_1(x, y), y) / a_1(y) dy,
//! [D v]_2(t, x) = -int_x^1 c_2(t, x, y) v_2(t + alpha_2(x, y), y) / a_2(y) dy,
//! ```
//!
//! with `c_j(t, x, y) = exp(int_y^x b_j(t + alpha_j(x, z), z) / a_j(z) dz)`, and
//! the solution of `v = C v + f` by reduction to a scalar shift equation for a
//! boundary trace.
//!
//! Everything is computed in characteristic coordinates `sigma = t - A_j(x)`:
//! a grid column at `x_k` is moved to the frame by a spectral time shift of
//! `A_j(x_k)`, integrals along characteristics become integrals in `x` at
//! fixed `sigma`, and results are shifted back.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::characteristics::{TravelTimeTable, TravelTimes, DEFAULT_REFINEMENT};
use crate::error::{Error, Result};
use crate::field::{PeriodicField, SpaceGrid, TimeGrid};
use crate::krylov::gmres;
use crate::numerics::{cubic_stencil, unit_gauss, GL_NODES};
use crate::par;
use crate::problem::FirstOrderProblem;

/// Safety margin of the contraction tests.
pub const GAIN_MARGIN: f64 = 1e-8;
/// Relative tolerance of the shift-equation iterations.
pub const SHIFT_TOL: f64 = 1e-12;
const CORRECTION_RESTART: usize = 20;
const CORRECTION_MAX_ITER: usize = 200;
const CORRECTION_ROUNDS: usize = 3;
const CORRECTION_RTOL: f64 = 1e-8;
/// Largest relative residual accepted from the corrected inverted branch.
const CORRECTION_ACCEPT: f64 = 1e-9;

/// Geometry shared by all linearizations on fixed grids: speeds, reflection
/// constants, travel times and quadrature layout.
#[derive(Debug, Clone)]
pub struct Setup {
    time: TimeGrid,
    space: SpaceGrid,
    r: [f64; 2],
    travel: TravelTimeTable,
    speed_nodes: [Vec<f64>; 2],
    travel_nodes: [Vec<f64>; 2],
    /// Per cell and Gauss node: interpolation stencil in `x`.
    stencils: Vec<(usize, [f64; 4])>,
    /// Per family, cell and Gauss node: `1 / a_j(y)`.
    inv_speed_gauss: [Vec<f64>; 2],
}

type SpeedFn<'a> = &'a dyn Fn(f64) -> Result<f64>;

impl Setup {
    /// Builds the geometry for speeds `a_1`, `a_2` and constants `r_1`, `r_2`.
    pub fn new(time: &TimeGrid, space: SpaceGrid, speeds: [SpeedFn<'_>; 2], r: [f64; 2], refinement: usize) -> Result<Self> {
        let fine = space.cells() * refinement.max(1);
        let travel = TravelTimeTable {
            families: [TravelTimes::build(speeds[0], fine)?, TravelTimes::build(speeds[1], fine)?],
        };
        let rule = unit_gauss();
        let h = space.step();
        let mut stencils = Vec::with_capacity(space.cells() * GL_NODES);
        for k in 0..space.cells() {
            for q in 0..GL_NODES {
                stencils.push(cubic_stencil(k, space.cells(), rule.nodes[q]));
            }
        }
        let mut speed_nodes = [Vec::new(), Vec::new()];
        let mut travel_nodes = [Vec::new(), Vec::new()];
        let mut inv_speed_gauss = [Vec::new(), Vec::new()];
        for j in 0..2 {
            for x in space.nodes() {
                speed_nodes[j].push(speeds[j](x)?);
                travel_nodes[j].push(travel.families[j].at(x));
            }
            for k in 0..space.cells() {
                for q in 0..GL_NODES {
                    let y = (k as f64 + rule.nodes[q]) * h;
                    inv_speed_gauss[j].push(1.0 / speeds[j](y)?);
                }
            }
        }
        Ok(Self {
            time: time.clone(),
            space,
            r,
            travel,
            speed_nodes,
            travel_nodes,
            stencils,
            inv_speed_gauss,
        })
    }

    pub fn for_problem(p: &FirstOrderProblem, time: &TimeGrid, space: SpaceGrid) -> Result<Self> {
        let a1 = |x: f64| p.speed(0, x);
        let a2 = |x: f64| p.speed(1, x);
        Self::new(time, space, [&a1, &a2], p.r, DEFAULT_REFINEMENT)
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn space(&self) -> SpaceGrid {
        self.space
    }

    pub fn r(&self) -> [f64; 2] {
        self.r
    }

    pub fn travel_times(&self) -> &TravelTimeTable {
        &self.travel
    }

    /// `a_j(x_k)`.
    pub fn speed_at_node(&self, j: usize, k: usize) -> f64 {
        self.speed_nodes[j][k]
    }

    /// `A_j(x_k)`.
    pub fn travel_at_node(&self, j: usize, k: usize) -> f64 {
        self.travel_nodes[j][k]
    }

    /// `A_j(1)`.
    pub fn total_travel(&self, j: usize) -> f64 {
        self.travel_nodes[j][self.space.cells()]
    }

    fn check_field(&self, v: &PeriodicField) -> Result<()> {
        if v.time() != &self.time || v.space() != self.space {
            return Err(Error::Shape("field grids differ from the operator grids".into()));
        }
        if v.components() != 2 {
            return Err(Error::Shape(format!("expected a two-component field, got {}", v.components())));
        }
        Ok(())
    }

    /// Component `comp` of `v` in the characteristic frame of family `j`:
    /// `W(sigma, x_k) = v(sigma + A_j(x_k), x_k)`, layout `[k][i]`.
    fn to_frame(&self, v: &PeriodicField, comp: usize, j: usize) -> Vec<f64> {
        let n = self.time.len();
        let mut out = vec![0.0; self.space.points() * n];
        let plans = self.time.plans();
        par::for_each_chunk(&mut out, n, |k, dst| plans.shift_into(v.column(comp, k), self.travel_nodes[j][k], dst));
        out
    }

    /// Inverse of [`Setup::to_frame`].
    fn from_frame(&self, frame: &[f64], j: usize) -> Vec<f64> {
        let n = self.time.len();
        let mut out = vec![0.0; frame.len()];
        let plans = self.time.plans();
        par::for_each_chunk(&mut out, n, |k, dst| {
            plans.shift_into(&frame[k * n..(k + 1) * n], -self.travel_nodes[j][k], dst)
        });
        out
    }

    fn assemble(&self, first: Vec<f64>, mut second: Vec<f64>) -> PeriodicField {
        let mut data = first;
        data.append(&mut second);
        PeriodicField::from_parts(self.time.clone(), self.space, 2, data)
    }

    /// `A v`, with spectral `d_t` and fourth-order `d_x`.
    pub fn apply_a(&self, v: &PeriodicField) -> Result<PeriodicField> {
        self.check_field(v)?;
        let dt = v.dt();
        let dx = v.dx();
        let n = self.time.len();
        let mut data = dt.into_data();
        let np = self.space.points();
        for c in 0..2 {
            for k in 0..np {
                let a = self.speed_nodes[c][k];
                let base = (c * np + k) * n;
                for i in 0..n {
                    data[base + i] += a * dx.data()[base + i];
                }
            }
        }
        Ok(PeriodicField::from_parts(self.time.clone(), self.space, 2, data))
    }
}

/// Per-family weights in characteristic coordinates, layout `[k][i]`.
#[derive(Debug, Clone)]
struct FamilyWeights {
    /// `P_j(sigma, 1)`, where `P_j(sigma, x) = int_0^x b_j(sigma + A_j(z), z) / a_j(z) dz`.
    p_end: Vec<f64>,
    /// Weight of the reflected trace in `C`: `exp(P_1(sigma, x_k))` for family 1,
    /// `exp(P_2(sigma, x_k) - P_2(sigma, 1))` for family 2.
    c_weight: Vec<f64>,
    /// Propagation factor across cell `k` in the direction of integration.
    growth: Vec<f64>,
    /// Quadrature weights including the exponential and `1 / a_j`, layout `[k][q][i]`.
    quad: Vec<f64>,
}

/// Which scalar equation `v = C v + f` was reduced to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Unknown `v_2(., 0)`; contraction tied to the first non-resonance condition.
    TraceAtZero,
    /// Unknown `v_1(., 1)`; contraction tied to the second non-resonance condition.
    TraceAtOne,
}

/// Solution branch of a shift equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Neumann,
    Inverted,
    Dense,
}

/// How to solve a shift equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    #[default]
    Auto,
    Neumann,
    Inverted,
    Dense,
}

impl std::str::FromStr for ShiftMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => ShiftMode::Auto,
            "neumann" => ShiftMode::Neumann,
            "inverted" => ShiftMode::Inverted,
            "dense" => ShiftMode::Dense,
            other => return Err(Error::Options(format!("unknown mode `{other}`"))),
        })
    }
}

/// A solved boundary trace with the branch that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSolution {
    pub values: Vec<f64>,
    pub branch: Branch,
    pub iterations: usize,
}

/// Result of solving `v = C v + f`.
#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub field: PeriodicField,
    pub reduction: Reduction,
    pub trace: TraceSolution,
}

/// A linear operator on boundary traces of the form "multiply and shift".
trait ShiftOperator {
    fn apply(&self, v: &[f64]) -> Vec<f64>;
    fn apply_inverse(&self, v: &[f64]) -> Vec<f64>;
    /// `(max |gain|, min |gain|)` of the pointwise gain.
    fn gain_bounds(&self) -> (f64, f64);
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn iteration_cap(q: f64) -> usize {
    if q <= 0.0 {
        return 10;
    }
    let steps = (SHIFT_TOL.ln() / q.ln()).ceil();
    (10.0 * steps.max(1.0)).min(1e7) as usize
}

fn iterate(rhs: &[f64], q: f64, step: impl Fn(&[f64]) -> Vec<f64>, branch: Branch) -> Result<TraceSolution> {
    let cap = iteration_cap(q);
    let mut v = step(&vec![0.0; rhs.len()]);
    for it in 1..=cap {
        let next = step(&v);
        let change = next.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if change <= SHIFT_TOL * sup(&v).max(1.0) {
            return Ok(TraceSolution {
                values: v,
                branch,
                iterations: it + 1,
            });
        }
        if !change.is_finite() {
            break;
        }
    }
    Err(Error::InnerSolveStagnation {
        iterations: cap,
        residual: f64::NAN,
    })
}

fn solve_shift_operator(op: &dyn ShiftOperator, rhs: &[f64], mode: ShiftMode) -> Result<TraceSolution> {
    let (max, min) = op.gain_bounds();
    let contracting = max < 1.0 - GAIN_MARGIN;
    let expanding = min > 1.0 + GAIN_MARGIN;
    let neumann = || {
        iterate(
            rhs,
            max,
            |v| {
                let mut out = op.apply(v);
                out.iter_mut().zip(rhs).for_each(|(o, r)| *o += r);
                out
            },
            Branch::Neumann,
        )
    };
    // `apply_inverse` undoes the shifts only away from the Nyquist mode, so
    // the iteration is a preconditioner and GMRES removes what it misses.
    let precondition = |b: &[f64]| {
        iterate(
            b,
            1.0 / min,
            |v| {
                let diff: Vec<f64> = v.iter().zip(b).map(|(a, r)| a - r).collect();
                op.apply_inverse(&diff)
            },
            Branch::Inverted,
        )
    };
    let inverted = || {
        let mut sol = precondition(rhs)?;
        let residual = |v: &[f64]| -> Vec<f64> {
            let cv = op.apply(v);
            rhs.iter().zip(v).zip(&cv).map(|((r, x), c)| r - x + c).collect()
        };
        let apply = |y: &[f64]| -> Result<Vec<f64>> {
            let v = precondition(y)?.values;
            let cv = op.apply(&v);
            Ok(v.iter().zip(&cv).map(|(x, c)| x - c).collect())
        };
        for _ in 0..CORRECTION_ROUNDS {
            let res = residual(&sol.values);
            let rel = sup(&res) / sup(&sol.values).max(1.0);
            if rel <= SHIFT_TOL {
                return Ok(sol);
            }
            let kry = match gmres(&apply, &res, CORRECTION_RESTART, CORRECTION_MAX_ITER, CORRECTION_RTOL) {
                Ok(k) => k,
                Err(Error::InnerSolveStagnation { .. }) => break,
                Err(e) => return Err(e),
            };
            let correction = precondition(&kry.x)?.values;
            sol.values.iter_mut().zip(&correction).for_each(|(v, c)| *v += c);
            sol.iterations += kry.iterations;
        }
        let rel = sup(&residual(&sol.values)) / sup(&sol.values).max(1.0);
        if rel > CORRECTION_ACCEPT {
            return Err(Error::InnerSolveStagnation {
                iterations: sol.iterations,
                residual: rel,
            });
        }
        Ok(sol)
    };
    match mode {
        ShiftMode::Auto if contracting => neumann(),
        ShiftMode::Auto if expanding => inverted(),
        ShiftMode::Neumann if contracting => neumann(),
        ShiftMode::Inverted if expanding => inverted(),
        ShiftMode::Dense => dense_solve(op, rhs),
        _ => Err(Error::ResonantGain { max, min }),
    }
}

fn dense_solve(op: &dyn ShiftOperator, rhs: &[f64]) -> Result<TraceSolution> {
    let n = rhs.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut unit = vec![0.0; n];
    for jcol in 0..n {
        unit[jcol] = 1.0;
        let col = op.apply(&unit);
        unit[jcol] = 0.0;
        for (i, c) in col.iter().enumerate() {
            m[(i, jcol)] -= c;
        }
    }
    let lu = m.lu();
    let sol = lu.solve(&DVector::from_column_slice(rhs)).ok_or(Error::SingularShift)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularShift);
    }
    Ok(TraceSolution {
        values: sol.as_slice().to_vec(),
        branch: Branch::Dense,
        iterations: 1,
    })
}

/// The scalar equation `v(t) = gain(t) v(t + shift) + rhs(t)` on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftEquation {
    pub time: TimeGrid,
    pub gain: Vec<f64>,
    pub shift: f64,
    pub rhs: Vec<f64>,
}

impl ShiftOperator for ShiftEquation {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut s = self.time.shift(v, self.shift);
        s.iter_mut().zip(&self.gain).for_each(|(x, g)| *x *= g);
        s
    }

    fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = v.iter().zip(&self.gain).map(|(x, g)| x / g).collect();
        self.time.shift(&scaled, -self.shift)
    }

    fn gain_bounds(&self) -> (f64, f64) {
        let max = self.gain.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let min = self.gain.iter().fold(f64::INFINITY, |m, g| m.min(g.abs()));
        (max, min)
    }
}

/// Solves `v(t) = gain(t) v(t + shift) + rhs(t)`.
pub fn solve_shift_equation(eq: &ShiftEquation, mode: ShiftMode) -> Result<TraceSolution> {
    let n = eq.time.len();
    if eq.gain.len() != n || eq.rhs.len() != n {
        return Err(Error::Shape("shift equation data must match the time grid".into()));
    }
    if !eq.shift.is_finite() || eq.gain.iter().chain(&eq.rhs).any(|v| !v.is_finite()) {
        return Err(Error::Shape("shift equation data must be finite".into()));
    }
    solve_shift_operator(eq, &eq.rhs, mode)
}

/// The reduced operator on a boundary trace, written as the composition of
/// the frame operations used by [`Transport::apply_c`].
struct ReducedOperator<'a> {
    transport: &'a Transport,
    reduction: Reduction,
    /// Pointwise gain, for the contraction test.
    gain: Vec<f64>,
}

impl ReducedOperator<'_> {
    fn weights(&self) -> (&[f64], &[f64]) {
        let t = self.transport;
        let n = t.setup.time.len();
        let nx = t.setup.space.cells();
        (&t.fam[0].c_weight[nx * n..(nx + 1) * n], &t.fam[1].c_weight[..n])
    }
}

impl ShiftOperator for ReducedOperator<'_> {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let setup = &self.transport.setup;
        let time = &setup.time;
        let (w1, w2) = self.weights();
        let rr = setup.r[0] * setup.r[1];
        let (a1, a2) = (setup.total_travel(0), setup.total_travel(1));
        match self.reduction {
            Reduction::TraceAtZero => {
                let inner: Vec<f64> = v.iter().zip(w1).map(|(x, w)| x * w).collect();
                let s = time.shift(&time.shift(&inner, -a1), a2);
                s.iter().zip(w2).map(|(x, w)| rr * x * w).collect()
            }
            Reduction::TraceAtOne => {
                let s = time.shift(v, a2);
                let inner: Vec<f64> = s.iter().zip(w1).zip(w2).map(|((x, p), q)| x * p * q).collect();
                time.shift(&inner, -a1).into_iter().map(|x| rr * x).collect()
            }
        }
    }

    fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        let setup = &self.transport.setup;
        let time = &setup.time;
        let (w1, w2) = self.weights();
        let rr = setup.r[0] * setup.r[1];
        let (a1, a2) = (setup.total_travel(0), setup.total_travel(1));
        match self.reduction {
            Reduction::TraceAtZero => {
                let inner: Vec<f64> = v.iter().zip(w2).map(|(x, w)| x / (rr * w)).collect();
                let s = time.shift(&time.shift(&inner, -a2), a1);
                s.iter().zip(w1).map(|(x, w)| x / w).collect()
            }
            Reduction::TraceAtOne => {
                let s = time.shift(v, a1);
                let inner: Vec<f64> = s.iter().zip(w1).zip(w2).map(|((x, p), q)| x / (rr * p * q)).collect();
                time.shift(&inner, -a2)
            }
        }
    }

    fn gain_bounds(&self) -> (f64, f64) {
        let max = self.gain.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let min = self.gain.iter().fold(f64::INFINITY, |m, g| m.min(g.abs()));
        (max, min)
    }
}

/// The operators `B`, `C`, `D` for a fixed diagonal coefficient field
/// `b = (b_1, b_2)`, with all characteristic weights precomputed.
#[derive(Debug, Clone)]
pub struct Transport {
    setup: Arc<Setup>,
    b: PeriodicField,
    fam: [FamilyWeights; 2],
}

impl Transport {
    pub fn new(setup: Arc<Setup>, b: PeriodicField) -> Result<Self> {
        setup.check_field(&b)?;
        let fam = [family_weights(&setup, &b, 0), family_weights(&setup, &b, 1)];
        if fam.iter().any(|f| f.c_weight.iter().chain(&f.quad).chain(&f.growth).any(|v| !v.is_finite())) {
            return Err(Error::InvalidProblem("characteristic weights overflow".into()));
        }
        Ok(Self { setup, b, fam })
    }

    /// The operators at the state `u` of a first-order problem.
    pub fn at_state(p: &FirstOrderProblem, setup: Arc<Setup>, u: &PeriodicField) -> Result<Self> {
        let b = diagonal_coefficients(p, u)?;
        Self::new(setup, b)
    }

    pub fn setup(&self) -> &Arc<Setup> {
        &self.setup
    }

    pub fn coefficients(&self) -> &PeriodicField {
        &self.b
    }

    pub fn apply_a(&self, v: &PeriodicField) -> Result<PeriodicField> {
        self.setup.apply_a(v)
    }

    pub fn apply_b(&self, v: &PeriodicField) -> Result<PeriodicField> {
        self.setup.check_field(v)?;
        self.b.zip_with(v, |b, x| b * x)
    }

    /// `(A - B) v`.
    pub fn apply_a_minus_b(&self, v: &PeriodicField) -> Result<PeriodicField> {
        self.apply_a(v)?.sub(&self.apply_b(v)?)
    }

    /// Component `j` of `C v` given only the relevant boundary trace:
    /// `v_2(., 0)` for `j = 0`, `v_1(., 1)` for `j = 1`.
    fn c_component(&self, j: usize, trace: &[f64]) -> Vec<f64> {
        let setup = &self.setup;
        let n = setup.time.len();
        let r = setup.r[j];
        let source = if j == 0 {
            trace.to_vec()
        } else {
            setup.time.shift(trace, setup.total_travel(1))
        };
        let weight = &self.fam[j].c_weight;
        let mut frame = vec![0.0; weight.len()];
        for (k, col) in frame.chunks_mut(n).enumerate() {
            for i in 0..n {
                col[i] = r * weight[k * n + i] * source[i];
            }
        }
        setup.from_frame(&frame, j)
    }

    pub fn apply_c(&self, v: &PeriodicField) -> Result<PeriodicField> {
        self.setup.check_field(v)?;
        let nx = self.setup.space.cells();
        let first = self.c_component(0, v.column(1, 0));
        let second = self.c_component(1, v.column(0, nx));
        Ok(self.setup.assemble(first, second))
    }

    fn d_component(&self, v: &PeriodicField, j: usize) -> Vec<f64> {
        let setup = &self.setup;
        let n = setup.time.len();
        let nx = setup.space.cells();
        let frame = setup.to_frame(v, j, j);
        let weights = &self.fam[j];
        let mut w = vec![0.0; frame.len()];
        let mut gauss = vec![0.0; n];
        let cells: Box<dyn Iterator<Item = usize>> = if j == 0 { Box::new(0..nx) } else { Box::new((0..nx).rev()) };
        for k in cells {
            let (from, to) = if j == 0 { (k, k + 1) } else { (k + 1, k) };
            for i in 0..n {
                w[to * n + i] = weights.growth[k * n + i] * w[from * n + i];
            }
            for q in 0..GL_NODES {
                let (start, st) = setup.stencils[k * GL_NODES + q];
                for (i, g) in gauss.iter_mut().enumerate() {
                    *g = st[0] * frame[start * n + i]
                        + st[1] * frame[(start + 1) * n + i]
                        + st[2] * frame[(start + 2) * n + i]
                        + st[3] * frame[(start + 3) * n + i];
                }
                let qw = &weights.quad[(k * GL_NODES + q) * n..(k * GL_NODES + q + 1) * n];
                for i in 0..n {
                    w[to * n + i] += qw[i] * gauss[i];
                }
            }
        }
        setup.from_frame(&w, j)
    }

    pub fn apply_d(&self, v: &PeriodicField) -> Result<PeriodicField> {
        self.setup.check_field(v)?;
        let first = self.d_component(v, 0);
        let second = self.d_component(v, 1);
        Ok(self.setup.assemble(first, second))
    }

    /// Left-hand sides of the two non-resonance conditions as functions of
    /// `t`: `I(t) = int_0^1 b_2(t - alpha_2(x, 1), x) / a_2 - b_1(t - alpha_1(x, 1), x) / a_1 dx`
    /// and the variant with shifts `t + alpha_j(0, x)`.
    pub fn condition_integrals(&self) -> [Vec<f64>; 2] {
        let time = &self.setup.time;
        let (p1, p2) = (&self.fam[0].p_end, &self.fam[1].p_end);
        let s1 = time.shift(p1, -self.setup.total_travel(0));
        let s2 = time.shift(p2, -self.setup.total_travel(1));
        let first = s2.iter().zip(&s1).map(|(a, b)| a - b).collect();
        let second = p2.iter().zip(p1).map(|(a, b)| a - b).collect();
        [first, second]
    }

    /// Both condition integrals evaluated with the family integrals combined
    /// by a caller-chosen rule `combine(P_1, P_2)`.
    pub(crate) fn family_end_integrals(&self) -> [[Vec<f64>; 2]; 2] {
        let time = &self.setup.time;
        let (p1, p2) = (&self.fam[0].p_end, &self.fam[1].p_end);
        let s1 = time.shift(p1, -self.setup.total_travel(0));
        let s2 = time.shift(p2, -self.setup.total_travel(1));
        [[s1, s2], [p1.clone(), p2.clone()]]
    }

    fn reduced_operator(&self, reduction: Reduction) -> ReducedOperator<'_> {
        let setup = &self.setup;
        let time = &setup.time;
        let rr = (setup.r[0] * setup.r[1]).abs();
        let (p1, p2) = (&self.fam[0].p_end, &self.fam[1].p_end);
        let (a1, a2) = (setup.total_travel(0), setup.total_travel(1));
        let gain = match reduction {
            Reduction::TraceAtZero => {
                let s = time.shift(p1, a2 - a1);
                s.iter().zip(p2).map(|(x, y)| rr * (x - y).exp()).collect()
            }
            Reduction::TraceAtOne => {
                let d: Vec<f64> = p1.iter().zip(p2).map(|(x, y)| x - y).collect();
                time.shift(&d, -a1).into_iter().map(|x| rr * x.exp()).collect()
            }
        };
        ReducedOperator {
            transport: self,
            reduction,
            gain,
        }
    }

    /// The pointwise form `v(t) = gain(t) v(t + theta) + rhs(t)` of a reduction.
    pub fn shift_equation(&self, reduction: Reduction, f: &PeriodicField) -> Result<ShiftEquation> {
        self.setup.check_field(f)?;
        let op = self.reduced_operator(reduction);
        let signed = (self.setup.r[0] * self.setup.r[1]).signum();
        Ok(ShiftEquation {
            time: self.setup.time.clone(),
            gain: op.gain.iter().map(|g| signed * g).collect(),
            shift: self.setup.total_travel(1) - self.setup.total_travel(0),
            rhs: self.reduced_rhs(reduction, f),
        })
    }

    fn reduced_rhs(&self, reduction: Reduction, f: &PeriodicField) -> Vec<f64> {
        let setup = &self.setup;
        let time = &setup.time;
        let nx = setup.space.cells();
        let n = time.len();
        let w1 = &self.fam[0].c_weight[nx * n..(nx + 1) * n];
        let w2 = &self.fam[1].c_weight[..n];
        let (a1, a2) = (setup.total_travel(0), setup.total_travel(1));
        let (f1_end, f2_start) = (f.column(0, nx), f.column(1, 0));
        match reduction {
            Reduction::TraceAtZero => {
                let s = time.shift(f1_end, a2);
                (0..n).map(|i| setup.r[1] * w2[i] * s[i] + f2_start[i]).collect()
            }
            Reduction::TraceAtOne => {
                let inner: Vec<f64> = (0..n).map(|i| w1[i] * f2_start[i]).collect();
                let s = time.shift(&inner, -a1);
                (0..n).map(|i| setup.r[0] * s[i] + f1_end[i]).collect()
            }
        }
    }

    fn back_substitute(&self, reduction: Reduction, trace: &[f64], f: &PeriodicField) -> PeriodicField {
        let nx = self.setup.space.cells();
        let add = |mut c: Vec<f64>, comp: usize| {
            let len = c.len();
            let start = comp * len;
            c.iter_mut().zip(&f.data()[start..start + len]).for_each(|(x, y)| *x += y);
            c
        };
        let n = self.setup.time.len();
        match reduction {
            Reduction::TraceAtZero => {
                let v1 = add(self.c_component(0, trace), 0);
                let v1_end = v1[nx * n..(nx + 1) * n].to_vec();
                let v2 = add(self.c_component(1, &v1_end), 1);
                self.setup.assemble(v1, v2)
            }
            Reduction::TraceAtOne => {
                let v2 = add(self.c_component(1, trace), 1);
                let v2_start = v2[..n].to_vec();
                let v1 = add(self.c_component(0, &v2_start), 0);
                self.setup.assemble(v1, v2)
            }
        }
    }

    /// Solves `v = C v + f` through the scalar equation for a boundary trace.
    /// In `Auto` mode the trace at `x = 0` is tried first, then the trace at
    /// `x = 1`; `Dense` uses the trace at `x = 0`.
    pub fn solve_i_minus_c(&self, f: &PeriodicField, mode: ShiftMode) -> Result<ReducedSolution> {
        self.setup.check_field(f)?;
        let mut first_error = None;
        for reduction in [Reduction::TraceAtZero, Reduction::TraceAtOne] {
            let op = self.reduced_operator(reduction);
            let rhs = self.reduced_rhs(reduction, f);
            match solve_shift_operator(&op, &rhs, mode) {
                Ok(trace) => {
                    let field = self.back_substitute(reduction, &trace.values, f);
                    return Ok(ReducedSolution { field, reduction, trace });
                }
                Err(e @ Error::ResonantGain { .. }) => {
                    first_error.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(first_error.expect("at least one reduction attempted"))
    }

    /// `(A - B)^{-1} g = (I - C)^{-1} D g`.
    pub fn solve_linear(&self, g: &PeriodicField, mode: ShiftMode) -> Result<ReducedSolution> {
        self.solve_i_minus_c(&self.apply_d(g)?, mode)
    }
}

fn family_weights(setup: &Setup, b: &PeriodicField, j: usize) -> FamilyWeights {
    let n = setup.time.len();
    let nx = setup.space.cells();
    let h = setup.space.step();
    let rule = unit_gauss();
    let frame = setup.to_frame(b, j, j);
    let inv_a = &setup.inv_speed_gauss[j];
    let mut p_node = vec![0.0; (nx + 1) * n];
    let mut p_gauss = vec![0.0; nx * GL_NODES * n];
    let mut bq = vec![0.0; GL_NODES * n];
    for k in 0..nx {
        for q in 0..GL_NODES {
            let (start, st) = setup.stencils[k * GL_NODES + q];
            let ia = inv_a[k * GL_NODES + q];
            for i in 0..n {
                let v = st[0] * frame[start * n + i]
                    + st[1] * frame[(start + 1) * n + i]
                    + st[2] * frame[(start + 2) * n + i]
                    + st[3] * frame[(start + 3) * n + i];
                bq[q * n + i] = v * ia;
            }
        }
        for i in 0..n {
            let base = p_node[k * n + i];
            let mut cell = 0.0;
            for q in 0..GL_NODES {
                cell += rule.weights[q] * bq[q * n + i];
            }
            p_node[(k + 1) * n + i] = base + h * cell;
            for q in 0..GL_NODES {
                let mut part = 0.0;
                for pidx in 0..GL_NODES {
                    part += rule.cumulative[q][pidx] * bq[pidx * n + i];
                }
                p_gauss[(k * GL_NODES + q) * n + i] = base + h * part;
            }
        }
    }
    let p_end = p_node[nx * n..].to_vec();
    let mut c_weight = vec![0.0; (nx + 1) * n];
    let mut growth = vec![0.0; nx * n];
    let mut quad = vec![0.0; nx * GL_NODES * n];
    for k in 0..=nx {
        for i in 0..n {
            let p = p_node[k * n + i];
            c_weight[k * n + i] = if j == 0 { p.exp() } else { (p - p_end[i]).exp() };
        }
    }
    for k in 0..nx {
        for i in 0..n {
            let (pk, pk1) = (p_node[k * n + i], p_node[(k + 1) * n + i]);
            growth[k * n + i] = if j == 0 { (pk1 - pk).exp() } else { (pk - pk1).exp() };
            for q in 0..GL_NODES {
                let idx = (k * GL_NODES + q) * n + i;
                let w = h * rule.weights[q] * inv_a[k * GL_NODES + q];
                quad[idx] = if j == 0 {
                    w * (pk1 - p_gauss[idx]).exp()
                } else {
                    -w * (pk - p_gauss[idx]).exp()
                };
            }
        }
    }
    FamilyWeights {
        p_end,
        c_weight,
        growth,
        quad,
    }
}

/// `b_j(t, x) = d f_j / d u_j (x, u(t, x))` on the grid.
pub fn diagonal_coefficients(p: &FirstOrderProblem, u: &PeriodicField) -> Result<PeriodicField> {
    pointwise_state_map(u, |j, x, state| p.diagonal_partial(j, x, state))
}

/// Applies `f(component, x, (u1, u2))` at every grid point of a two-component
/// field.
pub(crate) fn pointwise_state_map<F>(u: &PeriodicField, f: F) -> Result<PeriodicField>
where
    F: Fn(usize, f64, [f64; 2]) -> Result<f64> + Send + Sync,
{
    if u.components() != 2 {
        return Err(Error::Shape("expected a two-component field".into()));
    }
    let space = u.space();
    let n = u.n_t();
    let np = space.points();
    let columns = par::map_range(2 * np, |idx| -> Result<Vec<f64>> {
        let (c, k) = (idx / np, idx % np);
        let x = space.node(k);
        let (c0, c1) = (u.column(0, k), u.column(1, k));
        (0..n).map(|i| f(c, x, [c0[i], c1[i]])).collect()
    });
    let mut data = Vec::with_capacity(2 * np * n);
    for col in columns {
        data.extend(col?);
    }
    Ok(PeriodicField::from_parts(u.time().clone(), space, 2, data))
}

/// `A v` for the speeds of `p`.
#[allow(non_snake_case)]
pub fn apply_A(v: &PeriodicField, p: &FirstOrderProblem) -> Result<PeriodicField> {
    Setup::for_problem(p, v.time(), v.space())?.apply_a(v)
}

/// `B(u) v`.
#[allow(non_snake_case)]
pub fn apply_B(u: &PeriodicField, v: &PeriodicField, p: &FirstOrderProblem) -> Result<PeriodicField> {
    u.check_same_shape(v)?;
    diagonal_coefficients(p, u)?.zip_with(v, |b, x| b * x)
}

fn transport_for(p: &FirstOrderProblem, u: &PeriodicField) -> Result<Transport> {
    let setup = Arc::new(Setup::for_problem(p, u.time(), u.space())?);
    Transport::at_state(p, setup, u)
}

/// `C(u) v`.
#[allow(non_snake_case)]
pub fn apply_C(u: &PeriodicField, v: &PeriodicField, p: &FirstOrderProblem) -> Result<PeriodicField> {
    transport_for(p, u)?.apply_c(v)
}

/// `D(u) v`.
#[allow(non_snake_case)]
pub fn apply_D(u: &PeriodicField, v: &PeriodicField, p: &FirstOrderProblem) -> Result<PeriodicField> {
    transport_for(p, u)?.apply_d(v)
}

/// `(I - C(u))^{-1} f`.
#[allow(non_snake_case)]
pub fn solve_I_minus_C(u: &PeriodicField, f: &PeriodicField, p: &FirstOrderProblem, mode: ShiftMode) -> Result<ReducedSolution> {
    transport_for(p, u)?.solve_i_minus_c(f, mode)
}

/// `(A - B(u))^{-1} g`.
pub fn solve_linear(u: &PeriodicField, g: &PeriodicField, p: &FirstOrderProblem, mode: ShiftMode) -> Result<ReducedSolution> {
    transport_for(p, u)?.solve_linear(g, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::random::{random_field, seeded_rng, Band};
    use std::f64::consts::PI;

    fn grids(nt: usize, nx: usize) -> (TimeGrid, SpaceGrid) {
        (TimeGrid::new(nt).unwrap(), SpaceGrid::new(nx).unwrap())
    }

    fn sysex() -> FirstOrderProblem {
        FirstOrderProblem::new("4", "-4", "0", "0", 1.0, -1.0).unwrap()
    }

    #[test]
    fn shift_equation_constant_cases() {
        let tg = TimeGrid::new(16).unwrap();
        let eq = ShiftEquation {
            time: tg.clone(),
            gain: vec![0.5; 16],
            shift: 0.3,
            rhs: vec![2.0; 16],
        };
        let sol = solve_shift_equation(&eq, ShiftMode::Auto).unwrap();
        assert_eq!(sol.branch, Branch::Neumann);
        assert!(sol.values.iter().all(|v| (v - 4.0).abs() < 1e-11));

        let eq = ShiftEquation {
            time: tg.clone(),
            gain: vec![2.0; 16],
            shift: 0.137,
            rhs: vec![1.0; 16],
        };
        let sol = solve_shift_equation(&eq, ShiftMode::Auto).unwrap();
        assert_eq!(sol.branch, Branch::Inverted);
        assert!(sol.values.iter().all(|v| (v + 1.0).abs() < 1e-11));
        let dense = solve_shift_equation(&eq, ShiftMode::Dense).unwrap();
        assert!(dense.values.iter().all(|v| (v + 1.0).abs() < 1e-11));

        let eq = ShiftEquation {
            time: tg,
            gain: vec![-1.0; 16],
            shift: -0.5,
            rhs: vec![1.0; 16],
        };
        assert!(matches!(solve_shift_equation(&eq, ShiftMode::Auto), Err(Error::ResonantGain { .. })));
    }

    #[test]
    fn c_on_the_resonant_example_is_a_pure_shift() {
        let (tg, sg) = grids(32, 16);
        let p = sysex();
        let v = PeriodicField::from_fn(&tg, sg, 2, |c, t, x| {
            (2.0 * PI * t).sin() * (1.0 + x) + c as f64 * (4.0 * PI * t).cos() * x
        })
        .unwrap();
        let u = PeriodicField::zeros(&tg, sg, 2);
        let cv = apply_C(&u, &v, &p).unwrap();
        let trace = |c: usize, t: f64, x: f64| v.eval(c, t, x).unwrap();
        for (i, t) in tg.nodes().enumerate() {
            for (k, x) in sg.nodes().enumerate() {
                assert!((cv.get(0, i, k) - trace(1, t - x / 4.0, 0.0)).abs() < 1e-12);
                assert!((cv.get(1, i, k) + trace(0, t + (x - 1.0) / 4.0, 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn c_vanishes_for_zero_traces_or_reflections() {
        let (tg, sg) = grids(16, 8);
        let v = PeriodicField::from_fn(&tg, sg, 2, |_, t, x| x * (1.0 - x) * (2.0 * PI * t).cos()).unwrap();
        let u = PeriodicField::zeros(&tg, sg, 2);
        assert!(apply_C(&u, &v, &sysex()).unwrap().sup_norm() < 1e-15);
        let p = FirstOrderProblem::new("1", "-1", "u1", "u2", 0.0, 0.0).unwrap();
        let w = random_field(&mut seeded_rng(1), &tg, sg, 2, Band::default());
        assert_eq!(apply_C(&u, &w, &p).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn d_examples_on_the_resonant_problem() {
        let (tg, sg) = grids(16, 8);
        let u = PeriodicField::zeros(&tg, sg, 2);
        let v = PeriodicField::from_fn(&tg, sg, 2, |c, _, _| if c == 0 { 1.0 } else { 0.0 }).unwrap();
        let dv = apply_D(&u, &v, &sysex()).unwrap();
        for i in 0..16 {
            for (k, x) in sg.nodes().enumerate() {
                assert!((dv.get(0, i, k) - x / 4.0).abs() < 1e-14);
            }
        }
        let w = random_field(&mut seeded_rng(3), &tg, sg, 2, Band::default());
        let p = FirstOrderProblem::new("2 + sin(pi*x)", "-1 - x", "-u1 + 0.2*u2", "0.4*u1 - u2", 0.5, 0.5).unwrap();
        let dw = apply_D(&w, &w, &p).unwrap();
        for i in 0..16 {
            assert_eq!(dw.get(0, i, 0), 0.0);
            assert_eq!(dw.get(1, i, 8), 0.0);
        }
    }

    #[test]
    fn d_matches_brute_force_quadrature() {
        let (tg, sg) = grids(32, 100);
        let p = FirstOrderProblem::new("2 + sin(pi*x)", "-1 - x", "-u1 + 0.3*u1^2*u2", "0.5*u1 - u2^3", 0.5, 0.7).unwrap();
        let mut rng = seeded_rng(11);
        let band = Band {
            t_modes: 2,
            x_modes: 2,
            amplitude: 0.5,
        };
        let u = random_field(&mut rng, &tg, sg, 2, band);
        let v = random_field(&mut rng, &tg, sg, 2, band);
        let dv = apply_D(&u, &v, &p).unwrap();
        let tt = crate::characteristics::build_travel_times(&p, 100, 4).unwrap();
        let ui = crate::field::FieldInterpolant::new(&u);
        let vi = crate::field::FieldInterpolant::new(&v);
        for &(i, k) in &[(3usize, 43usize), (10, 100), (0, 5), (7, 0)] {
            let t = tg.node(i);
            let x = sg.node(k);
            for j in 0..2 {
                let (lo, hi) = if j == 0 { (0.0, x) } else { (x, 1.0) };
                let mut acc = crate::numerics::gauss_integrate(lo, hi, 60, |y| {
                    let c = crate::characteristics::exp_weight(j, t, x, y, &ui, &p, &tt).unwrap();
                    let ty = t + tt.alpha(j, x, y);
                    c * vi.eval(j, ty, y).unwrap() / p.speed(j, y).unwrap()
                });
                if j == 1 {
                    acc = -acc;
                }
                assert!((dv.get(j, i, k) - acc).abs() < 1e-7, "j={j} i={i} k={k}: {} vs {acc}", dv.get(j, i, k));
            }
        }
    }

    #[test]
    fn solve_i_minus_c_residual_and_dense_agreement() {
        let (tg, sg) = grids(32, 40);
        let p = FirstOrderProblem::new("2 + sin(pi*x)", "-1 - x", "-u1 + 0.3*u1^2*u2", "0.5*u1 - u2^3", 0.5, 0.7).unwrap();
        let mut rng = seeded_rng(5);
        let u = random_field(&mut rng, &tg, sg, 2, Band::default());
        let f = random_field(&mut rng, &tg, sg, 2, Band::default());
        let setup = Arc::new(Setup::for_problem(&p, &tg, sg).unwrap());
        let tr = Transport::at_state(&p, setup, &u).unwrap();
        let sol = tr.solve_i_minus_c(&f, ShiftMode::Auto).unwrap();
        let v = &sol.field;
        let defect = v.sub(&tr.apply_c(v).unwrap()).unwrap().sub(&f).unwrap().sup_norm();
        assert!(defect < 1e-8, "defect {defect}");
        let dense = tr.solve_i_minus_c(&f, ShiftMode::Dense).unwrap();
        assert!(dense.field.sup_dist(v).unwrap() < 1e-8);
        let zero = tr.solve_i_minus_c(&PeriodicField::zeros(&tg, sg, 2), ShiftMode::Auto).unwrap();
        assert_eq!(zero.field.sup_norm(), 0.0);
    }

    #[test]
    fn solve_linear_satisfies_boundary_conditions() {
        let (tg, sg) = grids(32, 40);
        let p = FirstOrderProblem::new("1.5 + 0.5*x", "-1", "-u1", "-0.5*u2 + u1", 0.8, -1.5).unwrap();
        let mut rng = seeded_rng(9);
        let u = PeriodicField::zeros(&tg, sg, 2);
        let g = random_field(&mut rng, &tg, sg, 2, Band::default());
        let v = solve_linear(&u, &g, &p, ShiftMode::Auto).unwrap().field;
        for i in 0..32 {
            assert!((v.get(0, i, 0) - 0.8 * v.get(1, i, 0)).abs() < 1e-10);
            assert!((v.get(1, i, 40) + 1.5 * v.get(0, i, 40)).abs() < 1e-10);
        }
        let zero = solve_linear(&u, &PeriodicField::zeros(&tg, sg, 2), &p, ShiftMode::Auto).unwrap();
        assert_eq!(zero.field.sup_norm(), 0.0);
    }

    #[test]
    fn apply_b_examples() {
        let (tg, sg) = grids(8, 8);
        let v = random_field(&mut seeded_rng(2), &tg, sg, 2, Band::default());
        let u = PeriodicField::constant(&tg, sg, 2, 3.0);
        let p = FirstOrderProblem::new("1", "-1", "u2", "u1", 1.0, 1.0).unwrap();
        assert_eq!(apply_B(&u, &v, &p).unwrap().sup_norm(), 0.0);
        let p = FirstOrderProblem::new("1", "-1", "u1^2/2", "u1", 1.0, 1.0).unwrap();
        let bv = apply_B(&u, &v, &p).unwrap();
        for i in 0..8 {
            for k in 0..=8 {
                assert!((bv.get(0, i, k) - 3.0 * v.get(0, i, k)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn apply_a_annihilates_transported_profiles() {
        let (tg, sg) = grids(32, 200);
        let p = FirstOrderProblem::new("1 + x", "-2", "0", "0", 1.0, 1.0).unwrap();
        let phi = |s: f64| (2.0 * PI * s).sin() + 0.3 * (4.0 * PI * s).cos();
        let y = 0.4;
        let a1 = |x: f64| (1.0 + x).ln();
        let a2 = |x: f64| -x / 2.0;
        let v = PeriodicField::from_fn(&tg, sg, 2, |c, t, x| {
            if c == 0 {
                phi(t + a1(y) - a1(x))
            } else {
                phi(t + a2(y) - a2(x))
            }
        })
        .unwrap();
        let av = apply_A(&v, &p).unwrap();
        assert!(av.sup_norm() < 5e-5, "{}", av.sup_norm());
        let c = PeriodicField::constant(&tg, sg, 2, 2.0);
        assert!(apply_A(&c, &p).unwrap().sup_norm() < 1e-10);
    }
}
