//! Travel times `A_j(x) = int_0^x dz / a_j(z)` and the exponential weights
//! carried along characteristics.
//!
//! The characteristic of family `j` through `(t, x)` visits `(t + alpha_j(x, y), y)`
//! with `alpha_j(x, y) = A_j(y) - A_j(x)`.

use crate::error::{Error, Result};
use crate::field::FieldInterpolant;
use crate::numerics::{gauss_integrate, partial_integral_weights, unit_gauss, GL_NODES};
use crate::problem::FirstOrderProblem;

/// Default number of fine cells per space-grid cell.
pub const DEFAULT_REFINEMENT: usize = 4;

/// Cumulative travel time of one family, tabulated at cell boundaries together
/// with `1 / a` at the Gauss nodes of every cell. Between boundaries the
/// degree-4 interpolant of `1 / a` is integrated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimes {
    cells: usize,
    values: Vec<f64>,
    inverse_speed: Vec<[f64; GL_NODES]>,
}

impl TravelTimes {
    /// Tabulates `A(x) = int_0^x dz / a(z)` on `cells` uniform cells with
    /// 5-point Gauss–Legendre quadrature per cell.
    pub fn build(mut speed: impl FnMut(f64) -> Result<f64>, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Grid("travel-time table needs at least one cell".into()));
        }
        let h = 1.0 / cells as f64;
        let rule = unit_gauss();
        let mut values = Vec::with_capacity(cells + 1);
        let mut inverse_speed = Vec::with_capacity(cells);
        let mut acc = 0.0;
        values.push(acc);
        for m in 0..cells {
            let x = m as f64 * h;
            let mut inv = [0.0; GL_NODES];
            for q in 0..GL_NODES {
                inv[q] = 1.0 / speed(x + h * rule.nodes[q])?;
                acc += h * rule.weights[q] * inv[q];
            }
            inverse_speed.push(inv);
            values.push(acc);
        }
        if let Some(bad) = values.iter().chain(inverse_speed.iter().flatten()).find(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem(format!("non-finite travel time {bad}")));
        }
        Ok(Self {
            cells,
            values,
            inverse_speed,
        })
    }

    /// `A(x)` for `x` in `[0, 1]`.
    pub fn at(&self, x: f64) -> f64 {
        let pos = x.clamp(0.0, 1.0) * self.cells as f64;
        let m = (pos.floor() as usize).min(self.cells - 1);
        let s = pos - m as f64;
        if s == 0.0 {
            return self.values[m];
        }
        if s == 1.0 {
            return self.values[m + 1];
        }
        let h = 1.0 / self.cells as f64;
        let w = partial_integral_weights(s);
        self.values[m] + h * w.iter().zip(&self.inverse_speed[m]).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `alpha(x, y) = A(y) - A(x)`.
    pub fn alpha(&self, x: f64, y: f64) -> f64 {
        self.at(y) - self.at(x)
    }

    /// `A(1)`.
    pub fn total(&self) -> f64 {
        self.values[self.cells]
    }
}

/// Travel times of both families of a first-order problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeTable {
    pub families: [TravelTimes; 2],
}

impl TravelTimeTable {
    pub fn family(&self, j: usize) -> &TravelTimes {
        &self.families[j]
    }

    pub fn alpha(&self, j: usize, x: f64, y: f64) -> f64 {
        self.families[j].alpha(x, y)
    }
}

/// Tabulates `A_1`, `A_2` on `refinement * cells` cells.
pub fn build_travel_times(p: &FirstOrderProblem, cells: usize, refinement: usize) -> Result<TravelTimeTable> {
    let fine = cells * refinement.max(1);
    Ok(TravelTimeTable {
        families: [
            TravelTimes::build(|x| p.speed(0, x), fine)?,
            TravelTimes::build(|x| p.speed(1, x), fine)?,
        ],
    })
}

/// `int_y^x h(t + alpha(x, z), z) dz` along the characteristic of `tt` through
/// `(t, x)`, split at the breakpoints of the travel-time table so that
/// piecewise interpolated integrands are integrated cell by cell.
pub fn characteristic_integral(
    tt: &TravelTimes,
    t: f64,
    x: f64,
    y: f64,
    mut integrand: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutsideDomain(x));
    }
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::OutsideDomain(y));
    }
    if x == y {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if y < x { (y, x, 1.0) } else { (x, y, -1.0) };
    let ax = tt.at(x);
    let h = 1.0 / tt.cells as f64;
    let first = (lo / h).floor() as usize;
    let mut acc = 0.0;
    let mut err = None;
    let mut k = first;
    loop {
        let a = (k as f64 * h).max(lo);
        let b = ((k + 1) as f64 * h).min(hi);
        if b > a {
            acc += gauss_integrate(a, b, 1, |z| match integrand(t + tt.at(z) - ax, z) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            });
        }
        if b >= hi {
            break;
        }
        k += 1;
    }
    if let Some(e) = err {
        return Err(e);
    }
    Ok(sign * acc)
}

/// The weight `c_j(t, x, y) = exp(int_y^x d_{u_j} f_j(z, u(t + alpha_j(x, z), z)) / a_j(z) dz)`
/// evaluated pointwise by quadrature with field interpolation.
pub fn exp_weight(
    j: usize,
    t: f64,
    x: f64,
    y: f64,
    u: &FieldInterpolant<'_>,
    p: &FirstOrderProblem,
    tt: &TravelTimeTable,
) -> Result<f64> {
    let integral = characteristic_integral(tt.family(j), t, x, y, |s, z| {
        let state = [u.eval(0, s, z)?, u.eval(1, s, z)?];
        Ok(p.diagonal_partial(j, z, state)? / p.speed(j, z)?)
    })?;
    Ok(integral.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{PeriodicField, SpaceGrid, TimeGrid};
    use std::f64::consts::{LN_2, PI};

    #[test]
    fn travel_time_examples() {
        let constant = TravelTimes::build(|_| Ok(4.0), 8).unwrap();
        assert!((constant.alpha(0.0, 1.0) - 0.25).abs() < 1e-15);
        let linear = TravelTimes::build(|x| Ok(1.0 + x), 64).unwrap();
        assert!((linear.alpha(0.0, 1.0) - LN_2).abs() < 1e-10);
        for &(x, y) in &[(0.1, 0.77), (0.5, 0.2), (0.33, 0.33)] {
            assert_eq!(linear.alpha(x, y), -linear.alpha(y, x));
            assert!((linear.alpha(x, y) - ((1.0 + y) / (1.0 + x)).ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn travel_times_are_monotone() {
        let neg = TravelTimes::build(|x| Ok(-(1.0 + 0.5 * (PI * x).sin())), 20).unwrap();
        let mut prev = neg.at(0.0);
        assert_eq!(prev, 0.0);
        for i in 1..=200 {
            let v = neg.at(i as f64 / 200.0);
            assert!(v < prev);
            prev = v;
        }
    }

    fn sample_problem() -> FirstOrderProblem {
        FirstOrderProblem::new("2 + sin(pi*x)", "-1 - x", "-u1 + 0.3*u1^2*u2", "0.5*u1 - u2^3", 0.5, 0.7).unwrap()
    }

    #[test]
    fn weights_without_self_coupling_are_one() {
        let p = FirstOrderProblem::new("1", "-1", "u2", "u1", 1.0, 1.0).unwrap();
        let tg = TimeGrid::new(8).unwrap();
        let sg = SpaceGrid::new(8).unwrap();
        let u = PeriodicField::from_fn(&tg, sg, 2, |c, t, x| (2.0 * PI * t).sin() + c as f64 * x).unwrap();
        let tt = build_travel_times(&p, 8, DEFAULT_REFINEMENT).unwrap();
        let ui = FieldInterpolant::new(&u);
        assert_eq!(exp_weight(0, 0.3, 0.7, 0.1, &ui, &p, &tt).unwrap(), 1.0);
    }

    #[test]
    fn time_independent_weight_matches_quadrature() {
        let p = FirstOrderProblem::new("1 + x", "-2", "-(1 + x^2)*u1", "0", 1.0, 1.0).unwrap();
        let tg = TimeGrid::new(8).unwrap();
        let sg = SpaceGrid::new(10).unwrap();
        let u = PeriodicField::zeros(&tg, sg, 2);
        let tt = build_travel_times(&p, 10, DEFAULT_REFINEMENT).unwrap();
        let ui = FieldInterpolant::new(&u);
        let (x, y) = (0.9, 0.15);
        let direct = gauss_integrate(y, x, 40, |z| -(1.0 + z * z) / (1.0 + z)).exp();
        let c = exp_weight(0, 0.4, x, y, &ui, &p, &tt).unwrap();
        assert!((c - direct).abs() < 1e-10);
    }

    #[test]
    fn weight_cocycle_and_periodicity() {
        let p = sample_problem();
        let tg = TimeGrid::new(16).unwrap();
        let sg = SpaceGrid::new(20).unwrap();
        let u = PeriodicField::from_fn(&tg, sg, 2, |c, t, x| {
            0.4 * (2.0 * PI * t).cos() * (1.0 + x) + 0.2 * c as f64 * (2.0 * PI * (t + x)).sin()
        })
        .unwrap();
        let tt = build_travel_times(&p, 20, DEFAULT_REFINEMENT).unwrap();
        let ui = FieldInterpolant::new(&u);
        for j in 0..2 {
            let (t, x, y, z) = (0.23, 0.81, 0.47, 0.05);
            let lhs = exp_weight(j, t, x, z, &ui, &p, &tt).unwrap();
            let rhs = exp_weight(j, t, x, y, &ui, &p, &tt).unwrap()
                * exp_weight(j, t + tt.alpha(j, x, y), y, z, &ui, &p, &tt).unwrap();
            assert!((lhs - rhs).abs() < 1e-9, "j={j}: {lhs} vs {rhs}");
            assert_eq!(exp_weight(j, t, x, x, &ui, &p, &tt).unwrap(), 1.0);
            let shifted = exp_weight(j, t + 1.0, x, y, &ui, &p, &tt).unwrap();
            assert!((shifted - exp_weight(j, t, x, y, &ui, &p, &tt).unwrap()).abs() < 1e-13);
        }
    }
}
