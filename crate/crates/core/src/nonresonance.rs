//! Non-resonance conditions and the spectrum of stationary linearizations.
//!
//! For a first-order system linearized at `u`, with `b_j = d f_j / d u_j`,
//! the two conditions read
//!
//! ```text
//! int_0^1 b_2(t - alpha_2(x, 1), x) / a_2 - b_1(t - alpha_1(x, 1), x) / a_1 dx != ln|r1 r2|,
//! int_0^1 b_2(t + alpha_2(0, x), x) / a_2 - b_1(t + alpha_1(0, x), x) / a_1 dx != ln|r1 r2|,
//! ```
//!
//! for all `t`. For the wave equation the first-order form with speeds
//! `(-a, a)`, reflections `(-1, 1)` and coefficients `(b_+, b_-)` gives
//! `int (b_+ + b_-) / a dx != 0` with the corresponding shifts.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::PeriodicField;
use crate::numerics::gauss_integrate;
use crate::problem::{FirstOrderProblem, SecondOrderProblem};
use crate::transport::{Setup, Transport};
use crate::wave2fos::fos_setup;

/// Default tolerance on margins.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    FirstOrder1,
    FirstOrder2,
    SecondOrder1,
    SecondOrder2,
}

/// How the integrand is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralForm {
    /// `b_2 / a_2 - b_1 / a_1` for systems, `(b_+ + b_-) / a` for waves.
    Standard,
    /// `(b_+ - b_-) / a` for waves, reported for comparison only.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonresonanceReport {
    pub condition_id: ConditionId,
    pub form: IntegralForm,
    /// `ln|r1 r2|`; `-inf` (serialized as `null`) when `r1 r2 = 0`.
    pub threshold: f64,
    /// `min_t |integral(t) - threshold|`.
    pub margin: f64,
    pub verdict: Verdict,
    pub tolerance: f64,
    /// The integral on the time grid.
    pub integral_values: Vec<f64>,
}

impl NonresonanceReport {
    pub(crate) fn new(condition_id: ConditionId, form: IntegralForm, threshold: f64, integral_values: Vec<f64>, tol: f64) -> Self {
        let margin = if threshold == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            integral_values.iter().fold(f64::INFINITY, |m, v| m.min((v - threshold).abs()))
        };
        let verdict = if margin > tol { Verdict::Satisfied } else { Verdict::Violated };
        Self {
            condition_id,
            form,
            threshold,
            margin,
            verdict,
            tolerance: tol,
            integral_values,
        }
    }

    pub fn satisfied(&self) -> bool {
        self.verdict == Verdict::Satisfied
    }
}

/// True if at least one of the two conditions holds.
pub fn any_satisfied(reports: &[NonresonanceReport]) -> bool {
    reports.iter().any(NonresonanceReport::satisfied)
}

fn threshold(r: [f64; 2]) -> f64 {
    let rr = (r[0] * r[1]).abs();
    if rr == 0.0 {
        f64::NEG_INFINITY
    } else {
        rr.ln()
    }
}

/// Both first-order reports from precomputed operators.
pub fn reports_from_transport(tr: &Transport, tol: f64) -> [NonresonanceReport; 2] {
    let [first, second] = tr.condition_integrals();
    let th = threshold(tr.setup().r());
    [
        NonresonanceReport::new(ConditionId::FirstOrder1, IntegralForm::Standard, th, first, tol),
        NonresonanceReport::new(ConditionId::FirstOrder2, IntegralForm::Standard, th, second, tol),
    ]
}

/// Evaluates both first-order conditions at the state `u`.
pub fn check_first_order(u: &PeriodicField, p: &FirstOrderProblem, tol: f64) -> Result<[NonresonanceReport; 2]> {
    let setup = Arc::new(Setup::for_problem(p, u.time(), u.space())?);
    let tr = Transport::at_state(p, setup, u)?;
    Ok(reports_from_transport(&tr, tol))
}

/// The coefficients `(b_+, b_-)` of a wave equation at a scalar state `u`,
/// with `u_t` spectral and `u_x` by fourth-order differences.
pub fn wave_coefficients(u: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    if u.components() != 1 {
        return Err(Error::Shape("expected a scalar field".into()));
    }
    let (ut, ux) = (u.dt(), u.dx());
    let (n, np) = (u.n_t(), u.space().points());
    let mut data = vec![0.0; 2 * np * n];
    for k in 0..np {
        let x = u.space().node(k);
        for i in 0..n {
            let (bp, bm) = p.b_plus_minus(x, u.get(0, i, k), ut.get(0, i, k), ux.get(0, i, k))?;
            data[k * n + i] = bp;
            data[(np + k) * n + i] = bm;
        }
    }
    PeriodicField::from_columns(u.time().clone(), u.space(), 2, data)
}

fn second_order_integrals(u: &PeriodicField, p: &SecondOrderProblem) -> Result<Transport> {
    let setup = Arc::new(fos_setup(p, u.time(), u.space())?);
    Transport::new(setup, wave_coefficients(u, p)?)
}

/// Evaluates both wave-equation conditions at the scalar state `u`;
/// the integrand is `(b_+ + b_-) / a` with threshold 0.
pub fn check_second_order(u: &PeriodicField, p: &SecondOrderProblem, tol: f64) -> Result<[NonresonanceReport; 2]> {
    let tr = second_order_integrals(u, p)?;
    let [first, second] = tr.condition_integrals();
    Ok([
        NonresonanceReport::new(ConditionId::SecondOrder1, IntegralForm::Standard, 0.0, first, tol),
        NonresonanceReport::new(ConditionId::SecondOrder2, IntegralForm::Standard, 0.0, second, tol),
    ])
}

/// The wave-equation conditions with the integrand `(b_+ - b_-) / a`.
pub fn check_second_order_as_printed(u: &PeriodicField, p: &SecondOrderProblem, tol: f64) -> Result<[NonresonanceReport; 2]> {
    let tr = second_order_integrals(u, p)?;
    // With family integrals P_1 = -int b_+ / a and P_2 = int b_- / a, the
    // printed integrand integrates to -(P_1 + P_2).
    let [[s1, s2], [p1, p2]] = tr.family_end_integrals();
    let neg_sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| -(x + y)).collect::<Vec<_>>();
    Ok([
        NonresonanceReport::new(ConditionId::SecondOrder1, IntegralForm::AsPrinted, 0.0, neg_sum(&s1, &s2), tol),
        NonresonanceReport::new(ConditionId::SecondOrder2, IntegralForm::AsPrinted, 0.0, neg_sum(&p1, &p2), tol),
    ])
}

/// A complex number as `(re, im)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

/// Quadrature cells for the eigenvalue integrals.
const EIGEN_CELLS: usize = 200;

/// Eigenvalues `lambda` of `a_j v_j' - b_j v_j = lambda v_j` with
/// `v_1(0) = r1 v_2(0)`, `v_2(1) = r2 v_1(1)`, `b_j(x) = d f_j / d u_j (x, ustat(x))`:
///
/// ```text
/// lambda_k = [ln|r1 r2| - int (b_2/a_2 - b_1/a_1) + i (2 k pi + pi [r1 r2 < 0])] / int (1/a_2 - 1/a_1)
/// ```
pub fn stationary_eigenvalues(
    p: &FirstOrderProblem,
    ustat: &dyn Fn(f64) -> Result<[f64; 2]>,
    k_range: std::ops::RangeInclusive<i64>,
) -> Result<Vec<(i64, Complex)>> {
    let rr = p.r[0] * p.r[1];
    if rr == 0.0 {
        return Ok(Vec::new());
    }
    let mut err = None;
    let mut integrate = |g: &dyn Fn(f64) -> Result<f64>| {
        gauss_integrate(0.0, 1.0, EIGEN_CELLS, |x| {
            g(x).unwrap_or_else(|e| {
                err.get_or_insert(e);
                0.0
            })
        })
    };
    let denom = integrate(&|x| Ok(1.0 / p.speed(1, x)? - 1.0 / p.speed(0, x)?));
    let b_int = integrate(&|x| {
        let u = ustat(x)?;
        Ok(p.diagonal_partial(1, x, u)? / p.speed(1, x)? - p.diagonal_partial(0, x, u)? / p.speed(0, x)?)
    });
    if let Some(e) = err {
        return Err(e);
    }
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateDenominator);
    }
    let re = (rr.abs().ln() - b_int) / denom;
    let phase = if rr < 0.0 { std::f64::consts::PI } else { 0.0 };
    Ok(k_range
        .map(|k| {
            let im = (2.0 * std::f64::consts::PI * k as f64 + phase) / denom;
            (k, Complex { re, im: im + 0.0 })
        })
        .collect())
}

/// Chebyshev collocation of the stationary eigenproblem: each component is
/// collocated at all nodes except its inflow boundary, where the boundary
/// condition eliminates the unknown. Returns all eigenvalues of the
/// resulting matrix; the accurate ones are those of moderate modulus.
pub fn chebyshev_eigenvalues(
    p: &FirstOrderProblem,
    ustat: &dyn Fn(f64) -> Result<[f64; 2]>,
    degree: usize,
) -> Result<Vec<Complex>> {
    let n = degree.max(4);
    // Nodes x_i = (1 - cos(pi i / n)) / 2, increasing from 0 to 1.
    let nodes: Vec<f64> = (0..=n).map(|i| 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / n as f64).cos())).collect();
    let diff = chebyshev_differentiation(&nodes);
    let m = n + 1;
    let mut speed = [vec![0.0; m], vec![0.0; m]];
    let mut coef = [vec![0.0; m], vec![0.0; m]];
    for (i, &x) in nodes.iter().enumerate() {
        let u = ustat(x)?;
        for j in 0..2 {
            speed[j][i] = p.speed(j, x)?;
            coef[j][i] = p.diagonal_partial(j, x, u)?;
        }
    }
    if speed[0][0] < 0.0 {
        return Err(Error::InvalidProblem("the collocation oracle expects a_1 > 0 > a_2".into()));
    }
    // Full operator on (v_1 at nodes 0..n, v_2 at nodes 0..n).
    let full = |row_c: usize, i: usize, col_c: usize, l: usize| -> f64 {
        if row_c != col_c {
            return 0.0;
        }
        let mut v = speed[row_c][i] * diff[(i, l)];
        if i == l {
            v -= coef[row_c][i];
        }
        v
    };
    // Free unknowns: v_1 at nodes 1..=n, v_2 at nodes 0..n-1.
    // Eliminated: v_1(0) = r1 v_2(0), v_2(1) = r2 v_1(1).
    let free: Vec<(usize, usize)> = (1..=n).map(|i| (0, i)).chain((0..n).map(|i| (1, i))).collect();
    let dim = free.len();
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    let pos = |c: usize, i: usize| free.iter().position(|&f| f == (c, i));
    for (row, &(rc, ri)) in free.iter().enumerate() {
        for col_c in 0..2 {
            for l in 0..m {
                let w = full(rc, ri, col_c, l);
                if w == 0.0 {
                    continue;
                }
                match pos(col_c, l) {
                    Some(col) => mat[(row, col)] += w,
                    None if col_c == 0 => mat[(row, pos(1, 0).expect("free"))] += w * p.r[0],
                    None => mat[(row, pos(0, n).expect("free"))] += w * p.r[1],
                }
            }
        }
    }
    Ok(mat
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex { re: z.re, im: z.im })
        .collect())
}

fn chebyshev_differentiation(nodes: &[f64]) -> DMatrix<f64> {
    let m = nodes.len();
    let weight = |i: usize| {
        let c = if i == 0 || i == m - 1 { 2.0 } else { 1.0 };
        if i.is_multiple_of(2) {
            c
        } else {
            -c
        }
    };
    let mut d = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                d[(i, j)] = weight(i) / weight(j) / (nodes[i] - nodes[j]);
            }
        }
    }
    for i in 0..m {
        let s: f64 = (0..m).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    d
}

/// Distance from `target` to the nearest entry of `candidates`.
pub fn nearest_distance(target: Complex, candidates: &[Complex]) -> f64 {
    candidates
        .iter()
        .map(|z| (z.re - target.re).hypot(z.im - target.im))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{SpaceGrid, TimeGrid};
    use crate::field::random::{random_field, seeded_rng, Band};
    use std::f64::consts::{LN_2, PI};

    fn grids() -> (TimeGrid, SpaceGrid) {
        (TimeGrid::new(32).unwrap(), SpaceGrid::new(40).unwrap())
    }

    #[test]
    fn resonant_example_has_zero_margins() {
        let (tg, sg) = grids();
        let p = FirstOrderProblem::new("4", "-4", "0", "0", 1.0, -1.0).unwrap();
        let u = random_field(&mut seeded_rng(4), &tg, sg, 2, Band::default());
        for r in check_first_order(&u, &p, DEFAULT_TOLERANCE).unwrap() {
            assert_eq!(r.margin, 0.0);
            assert_eq!(r.verdict, Verdict::Violated);
        }
    }

    #[test]
    fn uncoupled_diagonal_gives_log_margin() {
        let (tg, sg) = grids();
        let p = FirstOrderProblem::new("1 + x", "-2", "u2", "sin(u1)", 0.5, 1.0).unwrap();
        let u = random_field(&mut seeded_rng(8), &tg, sg, 2, Band::default());
        for r in check_first_order(&u, &p, DEFAULT_TOLERANCE).unwrap() {
            assert!((r.margin - LN_2).abs() < 1e-14);
            assert!(r.satisfied());
        }
        let p = FirstOrderProblem::new("1", "-1", "u1", "u2", 0.0, 1.0).unwrap();
        let r = check_first_order(&u, &p, DEFAULT_TOLERANCE).unwrap();
        assert!(r[0].margin.is_infinite() && r[0].satisfied());
    }

    #[test]
    fn time_independent_state_gives_equal_reports() {
        let (tg, sg) = grids();
        let p = FirstOrderProblem::new("2 + sin(pi*x)", "-1 - x", "-u1 + 0.3*u1^2*u2", "0.5*u1 - u2^3", 0.5, 0.7).unwrap();
        let u = PeriodicField::from_fn(&tg, sg, 2, |c, _, x| 0.5 * x + c as f64 * (PI * x).cos()).unwrap();
        let [a, b] = check_first_order(&u, &p, DEFAULT_TOLERANCE).unwrap();
        for (x, y) in a.integral_values.iter().zip(&b.integral_values) {
            assert!((x - y).abs() < 1e-13);
        }
        assert!((a.margin - b.margin).abs() < 1e-13);
    }

    #[test]
    fn first_condition_matches_pointwise_quadrature() {
        let (tg, sg) = (TimeGrid::new(32).unwrap(), SpaceGrid::new(200).unwrap());
        let p = FirstOrderProblem::new("2 + sin(pi*x)", "-1 - x", "-u1 + 0.3*u1^2*u2", "0.5*u1 - u2^3", 0.5, 0.7).unwrap();
        let band = Band {
            t_modes: 2,
            x_modes: 2,
            amplitude: 0.5,
        };
        let u = random_field(&mut seeded_rng(21), &tg, sg, 2, band);
        let [first, second] = check_first_order(&u, &p, DEFAULT_TOLERANCE).unwrap();
        let tt = crate::characteristics::build_travel_times(&p, 200, 4).unwrap();
        let ui = crate::field::FieldInterpolant::new(&u);
        for i in [0usize, 7, 19] {
            let t = tg.node(i);
            let integrand = |x: f64, variant: usize| {
                let mut acc = 0.0;
                for (j, sign) in [(0usize, -1.0), (1, 1.0)] {
                    let s = if variant == 0 { t - tt.alpha(j, x, 1.0) } else { t + tt.alpha(j, 0.0, x) };
                    let state = [ui.eval(0, s, x).unwrap(), ui.eval(1, s, x).unwrap()];
                    acc += sign * p.diagonal_partial(j, x, state).unwrap() / p.speed(j, x).unwrap();
                }
                acc
            };
            let i1 = gauss_integrate(0.0, 1.0, 100, |x| integrand(x, 0));
            let i2 = gauss_integrate(0.0, 1.0, 100, |x| integrand(x, 1));
            assert!((first.integral_values[i] - i1).abs() < 1e-7, "{} vs {i1}", first.integral_values[i]);
            assert!((second.integral_values[i] - i2).abs() < 1e-7, "{} vs {i2}", second.integral_values[i]);
        }
    }

    #[test]
    fn margins_are_shift_invariant() {
        let (tg, sg) = grids();
        let p = FirstOrderProblem::new("2 + sin(pi*x)", "-1 - x", "-u1 + 0.3*u1^2*u2", "0.5*u1 - u2^3", 0.5, 0.7).unwrap();
        let u = random_field(&mut seeded_rng(2), &tg, sg, 2, Band::default());
        let a = check_first_order(&u, &p, DEFAULT_TOLERANCE).unwrap();
        let b = check_first_order(&u.time_shift(0.25), &p, DEFAULT_TOLERANCE).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.margin - y.margin).abs() < 1e-10);
        }
    }

    #[test]
    fn damped_wave_margin() {
        let (tg, sg) = grids();
        let u = random_field(&mut seeded_rng(6), &tg, sg, 1, Band::default());
        let p = SecondOrderProblem::new("1 + 0.5*x", "-0.1*ut + sin(u)").unwrap();
        let expected = 0.2 * (1.5f64).ln() / 0.5;
        for r in check_second_order(&u, &p, DEFAULT_TOLERANCE).unwrap() {
            assert!((r.margin - expected).abs() < 1e-12, "{} vs {expected}", r.margin);
        }
        let printed = check_second_order_as_printed(&u, &p, DEFAULT_TOLERANCE).unwrap();
        assert!(printed.iter().all(|r| r.margin < 1e-12));
        let p = SecondOrderProblem::new("1", "u^3").unwrap();
        assert!(check_second_order(&u, &p, DEFAULT_TOLERANCE).unwrap().iter().all(|r| !r.satisfied()));
    }

    #[test]
    fn eigenvalue_formula_on_the_symmetric_fixture() {
        let p = FirstOrderProblem::new("1", "-1", "0", "0", 0.5, 0.5).unwrap();
        let zero = |_: f64| Ok([0.0, 0.0]);
        let lam = stationary_eigenvalues(&p, &zero, -3..=3).unwrap();
        for (k, z) in &lam {
            assert!((z.re - LN_2).abs() < 1e-12);
            assert!((z.im + PI * *k as f64).abs() < 1e-12);
        }
        let oracle = chebyshev_eigenvalues(&p, &zero, 64).unwrap();
        for k in -5..=5 {
            let target = Complex {
                re: LN_2,
                im: 2.0 * PI * k as f64,
            };
            assert!(nearest_distance(target, &oracle) < 1e-6);
        }
        let p = FirstOrderProblem::new("1", "-1", "0", "0", 1.0, -1.0).unwrap();
        for (_, z) in stationary_eigenvalues(&p, &zero, -2..=2).unwrap() {
            assert_eq!(z.re, 0.0);
        }
    }

    #[test]
    fn eigenvalue_formula_matches_oracle_on_variable_coefficients() {
        let p = FirstOrderProblem::new("1 + 0.5*x", "-(1 + 0.3*x^2)", "-0.4*u1 + 0.1*u1^2", "0.2*u2 + u1", -0.6, 0.9).unwrap();
        let ustat = |x: f64| Ok([x * (1.0 - x), x]);
        let oracle = chebyshev_eigenvalues(&p, &ustat, 80).unwrap();
        for (_, z) in stationary_eigenvalues(&p, &ustat, -4..=4).unwrap() {
            assert!(nearest_distance(z, &oracle) < 1e-6, "{z:?}");
        }
    }

    #[test]
    fn degenerate_denominator_is_reported() {
        let q = FirstOrderProblem::new("1", "1", "0", "0", 0.5, 0.5).unwrap();
        let zero = |_: f64| Ok([0.0, 0.0]);
        assert!(matches!(stationary_eigenvalues(&q, &zero, 0..=0), Err(Error::DegenerateDenominator)));
    }
}
