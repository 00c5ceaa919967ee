//! The wave equation `u_tt - a^2 u_xx = f(x, u, u_t, u_x) + g` with
//! `u(t, 0) = 0`, `u_x(t, 1) = 0` as a first-order system.
//!
//! With `v_1 = u_t + a u_x` and `v_2 = u_t - a u_x`,
//!
//! ```text
//! d_t v_1 - a d_x v_1 = F(v),   d_t v_2 + a d_x v_2 = F(v),
//! F(v) = f(x, Jv, Kv, Lv) - a'/2 (v_1 - v_2) + g,
//! v_1(t, 0) = -v_2(t, 0),   v_2(t, 1) = v_1(t, 1),
//! ```
//!
//! where `Jv = 1/2 int_0^x (v_1 - v_2) / a`, `Kv = (v_1 + v_2) / 2` and
//! `Lv = (v_1 - v_2) / (2a)` recover `u`, `u_t` and `u_x`. The system has
//! speeds `(-a, a)` and reflections `(-1, 1)`, so the transport operators
//! apply unchanged.

use std::sync::Arc;

use crate::characteristics::DEFAULT_REFINEMENT;
use crate::error::{Error, Result};
use crate::field::{PeriodicField, SpaceGrid, TimeGrid};
use crate::nonresonance::{ConditionId, IntegralForm, NonresonanceReport};
use crate::numerics::{cubic_stencil, unit_gauss, GL_NODES};
use crate::par;
use crate::problem::SecondOrderProblem;
use crate::solver::{solve_system, system_residual, FixedPointSystem, Linearization, SolveOptions, SolveReport};
use crate::transport::{Setup, Transport};

/// Boundary defects above this are logged by [`to_fos`].
const BOUNDARY_WARNING: f64 = 1e-8;

/// Transport geometry of the first-order form: speeds `(-a, a)`,
/// reflections `(-1, 1)`.
pub fn fos_setup(p: &SecondOrderProblem, time: &TimeGrid, space: SpaceGrid) -> Result<Setup> {
    let a1 = |x: f64| Ok(-p.speed(x)?);
    let a2 = |x: f64| p.speed(x);
    Setup::new(time, space, [&a1, &a2], [-1.0, 1.0], DEFAULT_REFINEMENT)
}

fn check_scalar(u: &PeriodicField) -> Result<()> {
    if u.components() != 1 {
        return Err(Error::Shape(format!("expected a scalar field, got {} components", u.components())));
    }
    Ok(())
}

fn check_pair(v: &PeriodicField) -> Result<()> {
    if v.components() != 2 {
        return Err(Error::Shape(format!("expected a two-component field, got {}", v.components())));
    }
    Ok(())
}

fn speeds(p: &SecondOrderProblem, space: SpaceGrid) -> Result<Vec<(f64, f64)>> {
    space.nodes().map(|x| p.speed_and_slope(x)).collect()
}

/// `(u_t + a u_x, u_t - a u_x)`.
pub fn to_fos(u: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    check_scalar(u)?;
    let (ut, ux) = (u.dt(), u.dx());
    let a = speeds(p, u.space())?;
    let (n, np) = (u.n_t(), u.space().points());
    let mut data = vec![0.0; 2 * np * n];
    for k in 0..np {
        for i in 0..n {
            let (dt, dx) = (ut.get(0, i, k), a[k].0 * ux.get(0, i, k));
            data[k * n + i] = dt + dx;
            data[(np + k) * n + i] = dt - dx;
        }
    }
    let defect = (0..n)
        .map(|i| u.get(0, i, 0).abs().max(ux.get(0, i, np - 1).abs()))
        .fold(0.0, f64::max);
    if defect > BOUNDARY_WARNING {
        log::warn!("to_fos: boundary conditions violated by {defect:.3e}");
    }
    PeriodicField::from_columns(u.time().clone(), u.space(), 2, data)
}

/// Cumulative `int_0^x g` of grid values `g` (layout `[k][i]`), integrating
/// the piecewise cubic interpolant exactly by Gauss–Legendre rules.
fn cumulative_integral(g: &[f64], n: usize, space: SpaceGrid) -> Vec<f64> {
    let nx = space.cells();
    let h = space.step();
    let rule = unit_gauss();
    let mut out = vec![0.0; g.len()];
    for k in 0..nx {
        let mut weights = [0.0; 4];
        let mut start = 0;
        for q in 0..GL_NODES {
            let (s, st) = cubic_stencil(k, nx, rule.nodes[q]);
            start = s;
            for (w, c) in weights.iter_mut().zip(st) {
                *w += h * rule.weights[q] * c;
            }
        }
        for i in 0..n {
            let mut acc = out[k * n + i];
            for (m, w) in weights.iter().enumerate() {
                acc += w * g[(start + m) * n + i];
            }
            out[(k + 1) * n + i] = acc;
        }
    }
    out
}

/// `[J v](t, x) = 1/2 int_0^x (v_1 - v_2) / a dy`.
#[allow(non_snake_case)]
pub fn apply_J(v: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    let l = apply_L(v, p)?;
    let data = cumulative_integral(l.data(), v.n_t(), v.space());
    PeriodicField::from_columns(v.time().clone(), v.space(), 1, data)
}

/// `[K v] = (v_1 + v_2) / 2`.
#[allow(non_snake_case)]
pub fn apply_K(v: &PeriodicField) -> Result<PeriodicField> {
    check_pair(v)?;
    let m = v.n_t() * v.space().points();
    let d = v.data();
    let data = (0..m).map(|i| 0.5 * (d[i] + d[m + i])).collect();
    PeriodicField::from_columns(v.time().clone(), v.space(), 1, data)
}

/// `[L v] = (v_1 - v_2) / (2 a)`.
#[allow(non_snake_case)]
pub fn apply_L(v: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    check_pair(v)?;
    let a = speeds(p, v.space())?;
    let n = v.n_t();
    let m = n * v.space().points();
    let d = v.data();
    let data = (0..m).map(|i| (d[i] - d[m + i]) / (2.0 * a[i / n].0)).collect();
    PeriodicField::from_columns(v.time().clone(), v.space(), 1, data)
}

/// `u = J v`.
pub fn from_fos(v: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    apply_J(v, p)
}

/// Pointwise data of the first-order form at `v`.
struct FosPoint {
    /// `f(x, Jv, Kv, Lv)`.
    f: Vec<f64>,
    /// Partials of `f` in `u`, `u_t`, `u_x`.
    du: Vec<f64>,
    dut: Vec<f64>,
    dux: Vec<f64>,
}

fn fos_point(v: &PeriodicField, p: &SecondOrderProblem) -> Result<(FosPoint, Vec<(f64, f64)>)> {
    let (j, k, l) = (apply_J(v, p)?, apply_K(v)?, apply_L(v, p)?);
    let space = v.space();
    let n = v.n_t();
    let columns = par::map_range(space.points(), |c| -> Result<[Vec<f64>; 4]> {
        let x = space.node(c);
        let (jc, kc, lc) = (j.column(0, c), k.column(0, c), l.column(0, c));
        let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let d = p.partials(x, jc[i], kc[i], lc[i])?;
            for (o, val) in out.iter_mut().zip(d) {
                o[i] = val;
            }
        }
        Ok(out)
    });
    let mut pt = FosPoint {
        f: Vec::with_capacity(n * space.points()),
        du: Vec::with_capacity(n * space.points()),
        dut: Vec::with_capacity(n * space.points()),
        dux: Vec::with_capacity(n * space.points()),
    };
    for col in columns {
        let [f, du, dut, dux] = col?;
        pt.f.extend(f);
        pt.du.extend(du);
        pt.dut.extend(dut);
        pt.dux.extend(dux);
    }
    Ok((pt, speeds(p, space)?))
}

/// Coefficients `c_+ = d_3 f + d_4 f / a` and `c_- = d_3 f - d_4 f / a`
/// evaluated at `(x, Jv, Kv, Lv)`, as a two-component field.
pub fn fos_coefficients(v: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    let (pt, a) = fos_point(v, p)?;
    let n = v.n_t();
    let m = pt.f.len();
    let mut data = vec![0.0; 2 * m];
    for idx in 0..m {
        let ak = a[idx / n].0;
        data[idx] = pt.dut[idx] + pt.dux[idx] / ak;
        data[m + idx] = pt.dut[idx] - pt.dux[idx] / ak;
    }
    PeriodicField::from_columns(v.time().clone(), v.space(), 2, data)
}

fn source_field(p: &SecondOrderProblem, time: &TimeGrid, space: SpaceGrid) -> Result<Option<PeriodicField>> {
    if p.source.is_none() {
        return Ok(None);
    }
    PeriodicField::try_from_fn(time, space, 1, |_, t, x| p.source_value(t, x)).map(Some)
}

fn rhs_from(v: &PeriodicField, pt: &FosPoint, a: &[(f64, f64)], g: Option<&PeriodicField>) -> Result<PeriodicField> {
    let n = v.n_t();
    let m = pt.f.len();
    let d = v.data();
    let mut data = vec![0.0; 2 * m];
    for idx in 0..m {
        let mut val = pt.f[idx] - 0.5 * a[idx / n].1 * (d[idx] - d[m + idx]);
        if let Some(g) = g {
            val += g.data()[idx];
        }
        data[idx] = val;
        data[m + idx] = val;
    }
    PeriodicField::from_columns(v.time().clone(), v.space(), 2, data)
}

/// The common right-hand side `f(x, Jv, Kv, Lv) - a'/2 (v_1 - v_2) + g` of
/// both first-order equations.
pub fn fos_rhs(v: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    let (pt, a) = fos_point(v, p)?;
    let g = source_field(p, v.time(), v.space())?;
    rhs_from(v, &pt, &a, g.as_ref())
}

/// The split `F'(v) = B(v) + B~(v) + 𝒥(v)`.
#[derive(Debug, Clone)]
pub struct FosSplit {
    /// Diagonal weights `(c_+ - a') / 2` and `(c_- + a') / 2`.
    pub diagonal: PeriodicField,
    /// Off-diagonal weights: component 1 multiplies `w_2` by `(c_- + a') / 2`,
    /// component 2 multiplies `w_1` by `(c_+ - a') / 2`.
    pub off_diagonal: PeriodicField,
    /// `d_2 f` at `(x, Jv, Kv, Lv)`, scalar.
    pub nonlocal: PeriodicField,
    problem: SecondOrderProblem,
}

impl FosSplit {
    pub fn apply_b(&self, w: &PeriodicField) -> Result<PeriodicField> {
        self.diagonal.zip_with(w, |b, x| b * x)
    }

    #[allow(non_snake_case)]
    pub fn apply_B_tilde(&self, w: &PeriodicField) -> Result<PeriodicField> {
        check_pair(w)?;
        let m = w.n_t() * w.space().points();
        let (o, d) = (self.off_diagonal.data(), w.data());
        let data = (0..2 * m).map(|i| o[i] * d[(i + m) % (2 * m)]).collect();
        PeriodicField::from_columns(w.time().clone(), w.space(), 2, data)
    }

    /// `w -> (d_2 f [J w], d_2 f [J w])`.
    pub fn apply_nonlocal(&self, w: &PeriodicField) -> Result<PeriodicField> {
        let jw = apply_J(w, &self.problem)?;
        let prod = self.nonlocal.zip_with(&jw, |a, b| a * b)?;
        PeriodicField::stack(&prod, &prod)
    }

    /// `(B + B~ + 𝒥) w`, the directional derivative of [`fos_rhs`].
    pub fn apply_derivative(&self, w: &PeriodicField) -> Result<PeriodicField> {
        self.apply_b(w)?.add(&self.apply_B_tilde(w)?)?.add(&self.apply_nonlocal(w)?)
    }

    pub fn nonlocal_vanishes(&self) -> bool {
        self.nonlocal.sup_norm() == 0.0
    }
}

pub fn fos_linearization_split(v: &PeriodicField, p: &SecondOrderProblem) -> Result<FosSplit> {
    let (pt, a) = fos_point(v, p)?;
    split_from(v, &pt, &a, p)
}

fn split_from(v: &PeriodicField, pt: &FosPoint, a: &[(f64, f64)], p: &SecondOrderProblem) -> Result<FosSplit> {
    let n = v.n_t();
    let m = pt.f.len();
    let mut diag = vec![0.0; 2 * m];
    let mut off = vec![0.0; 2 * m];
    for idx in 0..m {
        let (ak, slope) = a[idx / n];
        let cp = pt.dut[idx] + pt.dux[idx] / ak;
        let cm = pt.dut[idx] - pt.dux[idx] / ak;
        diag[idx] = 0.5 * (cp - slope);
        diag[m + idx] = 0.5 * (cm + slope);
        off[idx] = 0.5 * (cm + slope);
        off[m + idx] = 0.5 * (cp - slope);
    }
    let make = |d: Vec<f64>, c| PeriodicField::from_columns(v.time().clone(), v.space(), c, d);
    Ok(FosSplit {
        diagonal: make(diag, 2)?,
        off_diagonal: make(off, 2)?,
        nonlocal: make(pt.du.clone(), 1)?,
        problem: p.clone(),
    })
}

/// `C(v) w` of the first-order form.
#[allow(non_snake_case)]
pub fn fos_apply_C(v: &PeriodicField, w: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    fos_transport(v, p)?.apply_c(w)
}

/// `D(v) w` of the first-order form.
#[allow(non_snake_case)]
pub fn fos_apply_D(v: &PeriodicField, w: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    fos_transport(v, p)?.apply_d(w)
}

fn fos_transport(v: &PeriodicField, p: &SecondOrderProblem) -> Result<Transport> {
    let setup = Arc::new(fos_setup(p, v.time(), v.space())?);
    Transport::new(setup, fos_linearization_split(v, p)?.diagonal)
}

/// The first-order form as a fixed-point system.
pub(crate) struct FosSystem<'a> {
    problem: &'a SecondOrderProblem,
    setup: Arc<Setup>,
    source: Option<PeriodicField>,
}

impl<'a> FosSystem<'a> {
    pub fn new(problem: &'a SecondOrderProblem, time: &TimeGrid, space: SpaceGrid) -> Result<Self> {
        Ok(Self {
            problem,
            setup: Arc::new(fos_setup(problem, time, space)?),
            source: source_field(problem, time, space)?,
        })
    }
}

impl FixedPointSystem for FosSystem<'_> {
    fn setup(&self) -> &Arc<Setup> {
        &self.setup
    }

    fn linearize(&self, v: &PeriodicField) -> Result<Linearization> {
        let (pt, a) = fos_point(v, self.problem)?;
        let rhs = rhs_from(v, &pt, &a, self.source.as_ref())?;
        let split = split_from(v, &pt, &a, self.problem)?;
        let coupled = split.off_diagonal.sup_norm() > 0.0 || !split.nonlocal_vanishes();
        let diagonal = split.diagonal.clone();
        let coupling = move |w: &PeriodicField| split.apply_B_tilde(w)?.add(&split.apply_nonlocal(w)?);
        Ok(Linearization {
            rhs,
            diagonal,
            coupled,
            coupling: Box::new(coupling),
        })
    }

    fn nonresonance(&self, tr: &Transport, tol: f64) -> Vec<NonresonanceReport> {
        // The diagonal weights give half of int (c_+ + c_-) / a.
        let [first, second] = tr.condition_integrals();
        let twice = |v: Vec<f64>| v.into_iter().map(|x| 2.0 * x).collect::<Vec<_>>();
        vec![
            NonresonanceReport::new(ConditionId::SecondOrder1, IntegralForm::Standard, 0.0, twice(first), tol),
            NonresonanceReport::new(ConditionId::SecondOrder2, IntegralForm::Standard, 0.0, twice(second), tol),
        ]
    }
}

/// Fixed-point residual of the first-order form at the field `v`.
pub fn fos_fixed_point_residual(v: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    check_pair(v)?;
    system_residual(&FosSystem::new(p, v.time(), v.space())?, v)
}

/// Solves the wave equation from the scalar initial guess `u0` through its
/// first-order form. The report's `solution` is `u = J v`; the first-order
/// field is kept in `first_order_field`.
pub fn solve_second_order(p: &SecondOrderProblem, u0: &PeriodicField, opts: &SolveOptions) -> Result<SolveReport> {
    check_scalar(u0)?;
    let v0 = to_fos(u0, p)?;
    let sys = FosSystem::new(p, u0.time(), u0.space())?;
    let finish = |mut report: SolveReport| -> Result<SolveReport> {
        let v = std::mem::replace(&mut report.solution, PeriodicField::zeros(u0.time(), u0.space(), 1));
        report.solution = from_fos(&v, p)?;
        report.first_order_field = Some(v);
        Ok(report)
    };
    match solve_system(&sys, &v0, opts) {
        Ok(report) => finish(report),
        Err(Error::ResonantIterate(report)) => Err(Error::ResonantIterate(Box::new(finish(*report)?))),
        Err(Error::MaxIterationsExceeded(report)) => Err(Error::MaxIterationsExceeded(Box::new(finish(*report)?))),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::random::{random_field, seeded_rng, Band};
    use crate::transport::Transport;
    use std::f64::consts::PI;

    fn grids(nt: usize, nx: usize) -> (TimeGrid, SpaceGrid) {
        (TimeGrid::new(nt).unwrap(), SpaceGrid::new(nx).unwrap())
    }

    #[test]
    fn to_fos_examples() {
        let (tg, sg) = grids(32, 40);
        let p = SecondOrderProblem::new("1", "0").unwrap();
        let u = PeriodicField::zeros(&tg, sg, 1);
        assert_eq!(to_fos(&u, &p).unwrap().sup_norm(), 0.0);
        let u = PeriodicField::from_fn(&tg, sg, 1, |_, t, x| (2.0 * PI * t).sin() * x).unwrap();
        let v = to_fos(&u, &p).unwrap();
        for (i, t) in tg.nodes().enumerate() {
            for (k, x) in sg.nodes().enumerate() {
                let (c, s) = ((2.0 * PI * t).cos(), (2.0 * PI * t).sin());
                assert!((v.get(0, i, k) - (2.0 * PI * c * x + s)).abs() < 1e-11);
                assert!((v.get(1, i, k) - (2.0 * PI * c * x - s)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn boundary_images_of_admissible_fields() {
        let (tg, sg) = grids(32, 200);
        let p = SecondOrderProblem::new("1 + 0.5*x", "0").unwrap();
        let u = PeriodicField::from_fn(&tg, sg, 1, |_, t, x| (2.0 * PI * t).cos() * (PI * x / 2.0).sin()).unwrap();
        let v = to_fos(&u, &p).unwrap();
        for i in 0..32 {
            assert!((v.get(0, i, 0) + v.get(1, i, 0)).abs() < 1e-12);
            assert!((v.get(0, i, 200) - v.get(1, i, 200)).abs() < 1e-8);
        }
    }

    #[test]
    fn jkl_examples_and_round_trip() {
        let (tg, sg) = grids(64, 400);
        let p = SecondOrderProblem::new("1", "0").unwrap();
        let same = PeriodicField::from_fn(&tg, sg, 2, |_, t, x| (2.0 * PI * t).sin() + x).unwrap();
        assert_eq!(apply_J(&same, &p).unwrap().sup_norm(), 0.0);
        assert_eq!(apply_L(&same, &p).unwrap().sup_norm(), 0.0);
        assert_eq!(apply_K(&same).unwrap().sup_dist(&same.component(0)).unwrap(), 0.0);
        let u = PeriodicField::from_fn(&tg, sg, 1, |_, t, x| (2.0 * PI * t).sin() * (PI * x / 2.0).sin()).unwrap();
        let v = to_fos(&u, &p).unwrap();
        let back = from_fos(&v, &p).unwrap();
        assert!(back.sup_dist(&u).unwrap() < 1e-8);
        for i in 0..64 {
            assert_eq!(back.get(0, i, 0), 0.0);
        }
        assert!(apply_K(&v).unwrap().sup_dist(&u.dt()).unwrap() < 1e-9);
        assert!(apply_L(&v, &p).unwrap().sup_dist(&u.dx()).unwrap() < 1e-12);
    }

    #[test]
    fn round_trip_with_variable_speed() {
        let (tg, sg) = grids(32, 400);
        let p = SecondOrderProblem::new("1 + 0.5*x", "0").unwrap();
        let u = PeriodicField::from_fn(&tg, sg, 1, |_, t, x| {
            (PI * x / 2.0).sin() * (0.5 * (2.0 * PI * t).sin()).exp() + x * (1.0 - x / 2.0) * (2.0 * PI * t).cos()
        })
        .unwrap();
        let back = from_fos(&to_fos(&u, &p).unwrap(), &p).unwrap();
        assert!(back.sup_dist(&u).unwrap() < 1e-9);
    }

    #[test]
    fn rhs_examples() {
        let (tg, sg) = grids(16, 40);
        let v = random_field(&mut seeded_rng(3), &tg, sg, 2, Band::default());
        let p = SecondOrderProblem::new("2", "0").unwrap();
        assert_eq!(fos_rhs(&v, &p).unwrap().sup_norm(), 0.0);
        let p = SecondOrderProblem::new("1 + 0.5*x", "u").unwrap();
        let rhs = fos_rhs(&v, &p).unwrap();
        let j = apply_J(&v, &p).unwrap();
        for i in 0..16 {
            for k in 0..=40 {
                assert_eq!(rhs.get(0, i, k), rhs.get(1, i, k));
                let expected = j.get(0, i, k) - 0.25 * (v.get(0, i, k) - v.get(1, i, k));
                assert!((rhs.get(0, i, k) - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn split_matches_finite_differences() {
        let (tg, sg) = grids(16, 40);
        let mut rng = seeded_rng(12);
        let v = random_field(&mut rng, &tg, sg, 2, Band::default());
        let w = random_field(&mut rng, &tg, sg, 2, Band::default());
        let p = SecondOrderProblem::new("1 + 0.5*x", "sin(u) - 0.3*ut*ux + 0.2*ut^2 - 0.1*u*ux").unwrap();
        let split = fos_linearization_split(&v, &p).unwrap();
        let eps = 1e-6;
        let plus = fos_rhs(&v.lincomb(1.0, &w, eps).unwrap(), &p).unwrap();
        let minus = fos_rhs(&v.lincomb(1.0, &w, -eps).unwrap(), &p).unwrap();
        let fd = plus.sub(&minus).unwrap().scale(0.5 / eps);
        let exact = split.apply_derivative(&w).unwrap();
        assert!(fd.sup_dist(&exact).unwrap() < 1e-6, "{}", fd.sup_dist(&exact).unwrap());
    }

    #[test]
    fn damping_split_weights() {
        let (tg, sg) = grids(16, 20);
        let v = random_field(&mut seeded_rng(5), &tg, sg, 2, Band::default());
        let p = SecondOrderProblem::new("1.5", "-0.1*ut").unwrap();
        let split = fos_linearization_split(&v, &p).unwrap();
        assert!(split.diagonal.data().iter().all(|&b| (b + 0.05).abs() < 1e-15));
        assert!(split.off_diagonal.data().iter().all(|&b| (b + 0.05).abs() < 1e-15));
        assert!(split.nonlocal_vanishes());
    }

    #[test]
    fn constant_speed_c_is_a_plain_reflection() {
        let (tg, sg) = grids(32, 20);
        let p = SecondOrderProblem::new("2", "0").unwrap();
        let v = PeriodicField::zeros(&tg, sg, 2);
        let w = random_field(&mut seeded_rng(9), &tg, sg, 2, Band::default());
        let cw = fos_apply_C(&v, &w, &p).unwrap();
        for (i, t) in tg.nodes().enumerate() {
            for (k, x) in sg.nodes().enumerate() {
                assert!((cw.get(0, i, k) + w.eval(1, t + x / 2.0, 0.0).unwrap()).abs() < 1e-12);
                assert!((cw.get(1, i, k) - w.eval(0, t + (1.0 - x) / 2.0, 1.0).unwrap()).abs() < 1e-12);
            }
        }
        let dw = fos_apply_D(&v, &w, &p).unwrap();
        for i in 0..32 {
            assert_eq!(dw.get(0, i, 0), 0.0);
        }
    }

    #[test]
    fn c_is_the_delegated_transport_operator() {
        let (tg, sg) = grids(16, 40);
        let mut rng = seeded_rng(14);
        let v = random_field(&mut rng, &tg, sg, 2, Band::default());
        let w = random_field(&mut rng, &tg, sg, 2, Band::default());
        let p = SecondOrderProblem::new("1 + 0.5*x", "-0.2*ut + 0.1*ux + sin(u)").unwrap();
        let setup = Arc::new(fos_setup(&p, &tg, sg).unwrap());
        let b = fos_linearization_split(&v, &p).unwrap().diagonal;
        let tr = Transport::new(setup, b).unwrap();
        assert_eq!(fos_apply_C(&v, &w, &p).unwrap().sup_dist(&tr.apply_c(&w).unwrap()).unwrap(), 0.0);
        let sol = tr.solve_linear(&w, crate::transport::ShiftMode::Auto).unwrap().field;
        for i in 0..16 {
            assert!((sol.get(0, i, 0) + sol.get(1, i, 0)).abs() < 1e-12);
            assert!((sol.get(1, i, 40) - sol.get(0, i, 40)).abs() < 1e-12);
        }
    }

    #[test]
    fn damped_manufactured_wave() {
        let (tg, sg) = grids(32, 200);
        let p = SecondOrderProblem::new("1 + 0.5*x", "-0.5*ut + 0.2*sin(u)")
            .unwrap()
            .with_manufactured("sin(pi*x/2)*(exp(0.5*sin(2*pi*t)) - 1) + (x - x^2/2)*0.3*cos(2*pi*t)")
            .unwrap();
        let exact = PeriodicField::try_from_fn(&tg, sg, 1, |_, t, x| p.exact_solution().unwrap().eval(&[t, x])).unwrap();
        let u0 = PeriodicField::zeros(&tg, sg, 1);
        let report = solve_second_order(&p, &u0, &SolveOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.solution.sup_dist(&exact).unwrap() < 1e-6, "{}", report.solution.sup_dist(&exact).unwrap());
        let trivial = SecondOrderProblem::new("1 + 0.5*x", "-0.5*ut").unwrap();
        let small = PeriodicField::from_fn(&tg, sg, 1, |_, t, x| 1e-3 * (2.0 * PI * t).sin() * x * (2.0 - x)).unwrap();
        let report = solve_second_order(&trivial, &small, &SolveOptions::default()).unwrap();
        assert!(report.solution.sup_norm() < 1e-10);
    }
}
