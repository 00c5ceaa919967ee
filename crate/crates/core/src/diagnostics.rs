//! Residuals, Fourier regularity estimates and the resonant counterexample
//! family `u_phi(t, x) = (phi(t - x/4), phi(t + x/4))` of the problem with
//! `a = (4, -4)`, `f = 0`, `r = (1, -1)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{PeriodicField, SpaceGrid, TimeGrid};
use crate::problem::{FirstOrderProblem, Problem, SecondOrderProblem};
use crate::solver::{fixed_point_residual, FirstOrderSystem, FixedPointSystem};
use crate::transport::Setup;

/// Sup-norm of `u - C(u) u - D(u) (F(u) - B(u) u)`. Needs no derivatives of
/// `u`, so it is meaningful for merely continuous fields.
pub fn weak_residual(u: &PeriodicField, p: &FirstOrderProblem) -> Result<f64> {
    Ok(fixed_point_residual(u, p)?.sup_norm())
}

/// Pointwise defect `d_t u + a d_x u - f(x, u) - g` of a first-order system.
pub fn first_order_defect(u: &PeriodicField, p: &FirstOrderProblem) -> Result<PeriodicField> {
    let setup = Setup::for_problem(p, u.time(), u.space())?;
    let rhs = FirstOrderSystem::new(p, u)?.linearize(u)?.rhs;
    setup.apply_a(u)?.sub(&rhs)
}

/// Pointwise defect `u_tt - a^2 u_xx - f(x, u, u_t, u_x) - g` of a wave equation.
pub fn second_order_defect(u: &PeriodicField, p: &SecondOrderProblem) -> Result<PeriodicField> {
    if u.components() != 1 {
        return Err(Error::Shape("expected a one-component field".into()));
    }
    let ut = u.dt();
    let utt = ut.dt();
    let ux = u.dx();
    let uxx = u.dxx();
    let time = u.time();
    let space = u.space();
    let mut out = Vec::with_capacity(u.data().len());
    for k in 0..space.points() {
        let x = space.node(k);
        let a = p.speed(x)?;
        for i in 0..u.n_t() {
            let t = time.node(i);
            let f = p.nonlinearity(x, u.get(0, i, k), ut.get(0, i, k), ux.get(0, i, k))?;
            let g = p.source_value(t, x)?;
            out.push(utt.get(0, i, k) - a * a * uxx.get(0, i, k) - f - g);
        }
    }
    PeriodicField::from_columns(time.clone(), space, 1, out)
}

/// Sup-norm of the pointwise PDE defect, with spectral `t` derivatives and
/// finite-difference `x` derivatives.
pub fn classical_residual(u: &PeriodicField, p: &Problem) -> Result<f64> {
    let defect = match p {
        Problem::FirstOrder(p) => first_order_defect(u, p)?,
        Problem::SecondOrder(p) => second_order_defect(u, p)?,
    };
    Ok(defect.sup_norm())
}

/// Normalised Fourier magnitudes `|c_k|` of the profile `t -> u(t, x)`,
/// maximised over components, for `k = 0..=n/2`.
#[derive(Debug, Clone, Serialize)]
pub struct FourierProfile {
    pub x: f64,
    pub magnitudes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityEstimate {
    pub profiles: Vec<FourierProfile>,
    /// Maximum of the profiles over the probed `x`.
    pub envelope: Vec<f64>,
    /// Inclusive range of harmonics considered by the fit.
    pub window: (usize, usize),
    /// Harmonics above the noise floor that entered the fit.
    pub fitted_modes: Vec<usize>,
    /// `s` in `|c_k| ~ k^(-s)`; `None` when fewer than two modes are usable.
    pub exponent: Option<f64>,
    /// Set when the envelope drops below the noise floor inside the window.
    pub spectral_flag: bool,
}

/// Relative level below which harmonics count as zero.
pub const SPECTRAL_FLOOR: f64 = 1e-12;
/// Smallest `n_t` accepted by [`regularity_estimate`].
pub const MIN_REGULARITY_NT: usize = 64;

impl RegularityEstimate {
    /// Writes `x,k,magnitude` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,k,magnitude")?;
        for p in &self.profiles {
            for (k, m) in p.magnitudes.iter().enumerate() {
                writeln!(w, "{:.16e},{k},{:.16e}", p.x, m)?;
            }
        }
        Ok(())
    }
}

/// Fits the algebraic decay of the time harmonics of `u` at the given `x`
/// over `k` in `[4, n_t / 4]`.
pub fn regularity_estimate(u: &PeriodicField, x_probe: &[f64]) -> Result<RegularityEstimate> {
    let n = u.n_t();
    if n < MIN_REGULARITY_NT {
        return Err(Error::Grid(format!("regularity estimates need n_t >= {MIN_REGULARITY_NT}, got {n}")));
    }
    if x_probe.is_empty() {
        return Err(Error::Options("no probe points given".into()));
    }
    let plans = u.time().plans();
    let space = u.space();
    let half = n / 2;
    let mut profiles = Vec::with_capacity(x_probe.len());
    for &x in x_probe {
        let (start, w) = space.stencil(x)?;
        let mut magnitudes = vec![0.0f64; half + 1];
        for c in 0..u.components() {
            let mut row = vec![0.0; n];
            for (s, ws) in w.iter().enumerate() {
                for (r, v) in row.iter_mut().zip(u.column(c, start + s)) {
                    *r += ws * v;
                }
            }
            let spec = plans.spectrum(&row);
            for (m, z) in magnitudes.iter_mut().zip(&spec) {
                *m = m.max(z.norm() / n as f64);
            }
        }
        profiles.push(FourierProfile { x, magnitudes });
    }
    let envelope: Vec<f64> = (0..=half)
        .map(|k| profiles.iter().map(|p| p.magnitudes[k]).fold(0.0, f64::max))
        .collect();
    let window = (4, n / 4);
    let peak = envelope[1..].iter().copied().fold(0.0, f64::max);
    let floor = SPECTRAL_FLOOR * peak;
    let tail_max = envelope[window.1..].iter().copied().fold(0.0, f64::max);
    let spectral_flag = peak == 0.0 || tail_max < floor;
    let fitted_modes: Vec<usize> = (window.0..=window.1).filter(|&k| envelope[k] > floor && envelope[k] > 0.0).collect();
    let exponent = if fitted_modes.len() >= 2 {
        let pts: Vec<(f64, f64)> = fitted_modes.iter().map(|&k| ((k as f64).ln(), envelope[k].ln())).collect();
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / m, sy / m);
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        Some(-sxy / sxx)
    } else {
        None
    };
    Ok(RegularityEstimate {
        profiles,
        envelope,
        window,
        fitted_modes,
        exponent,
        spectral_flag,
    })
}

/// Anti-periodic profiles `phi(t + 1/2) = -phi(t)` of the counterexample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiKind {
    /// `4 |t - 1/2| - 1` on one period: continuous with kinks.
    Triangle,
    /// `8 t (1/2 - t)` on `[0, 1/2]`, continued anti-periodically: `C^1`.
    QuadraticSpline,
    /// `sin(2 pi t)`.
    SmoothHarmonic,
}

impl std::str::FromStr for PhiKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triangle" => Ok(PhiKind::Triangle),
            "quadratic_spline" | "quadratic-spline" => Ok(PhiKind::QuadraticSpline),
            "smooth_harmonic" | "smooth-harmonic" => Ok(PhiKind::SmoothHarmonic),
            other => Err(Error::Options(format!("unknown phi kind `{other}`"))),
        }
    }
}

impl PhiKind {
    pub const ALL: [PhiKind; 3] = [PhiKind::Triangle, PhiKind::QuadraticSpline, PhiKind::SmoothHarmonic];

    pub fn name(self) -> &'static str {
        match self {
            PhiKind::Triangle => "triangle",
            PhiKind::QuadraticSpline => "quadratic_spline",
            PhiKind::SmoothHarmonic => "smooth_harmonic",
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        let tau = t.rem_euclid(1.0);
        match self {
            PhiKind::Triangle => 4.0 * (tau - 0.5).abs() - 1.0,
            PhiKind::QuadraticSpline => {
                let q = |s: f64| 8.0 * s * (0.5 - s);
                if tau < 0.5 {
                    q(tau)
                } else {
                    -q(tau - 0.5)
                }
            }
            PhiKind::SmoothHarmonic => (2.0 * std::f64::consts::PI * tau).sin(),
        }
    }
}

/// The resonant problem `a = (4, -4)`, `f = 0`, `r = (1, -1)`.
pub fn counterexample_problem() -> FirstOrderProblem {
    FirstOrderProblem::new("4", "-4", "0", "0", 1.0, -1.0).expect("fixed problem parses")
}

/// Samples `u_phi` and returns it with the resonant problem. The boundary
/// conditions hold exactly because `phi` is anti-periodic.
pub fn counterexample_field(kind: PhiKind, time: &TimeGrid, space: SpaceGrid) -> Result<(PeriodicField, FirstOrderProblem)> {
    let u = PeriodicField::from_fn(time, space, 2, |c, t, x| {
        if c == 0 {
            kind.eval(t - x / 4.0)
        } else {
            kind.eval(t + x / 4.0)
        }
    })?;
    let last = space.points() - 1;
    for i in 0..time.len() {
        let left = u.get(0, i, 0) - u.get(1, i, 0);
        let right = u.get(1, i, last) + u.get(0, i, last);
        assert!(
            left.abs() <= 1e-14 && right.abs() <= 1e-14,
            "u_phi violates the boundary conditions at t = {}",
            time.node(i)
        );
    }
    Ok((u, counterexample_problem()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::random::{random_field, seeded_rng, Band};
    use crate::nonresonance::check_first_order;
    use std::f64::consts::PI;

    fn grids(nt: usize, nx: usize) -> (TimeGrid, SpaceGrid) {
        (TimeGrid::new(nt).unwrap(), SpaceGrid::new(nx).unwrap())
    }

    #[test]
    fn phi_kinds_are_anti_periodic() {
        for kind in PhiKind::ALL {
            for i in 0..64 {
                let t = i as f64 / 64.0;
                assert!((kind.eval(t + 0.5) + kind.eval(t)).abs() < 1e-15, "{kind:?} at {t}");
            }
        }
    }

    #[test]
    fn counterexample_is_resonant_for_any_state() {
        let (tg, sg) = grids(32, 40);
        let (u, p) = counterexample_field(PhiKind::Triangle, &tg, sg).unwrap();
        let other = random_field(&mut seeded_rng(3), &tg, sg, 2, Band::default());
        for state in [&u, &other] {
            for r in check_first_order(state, &p, 1e-8).unwrap() {
                assert!(r.margin.abs() <= 1e-12);
                assert!(!r.satisfied());
            }
        }
    }

    #[test]
    fn smooth_member_is_a_classical_solution() {
        let (tg, sg) = grids(32, 200);
        let (u, p) = counterexample_field(PhiKind::SmoothHarmonic, &tg, sg).unwrap();
        let r = classical_residual(&u, &Problem::FirstOrder(p.clone())).unwrap();
        assert!(r <= 1e-8, "{r}");
        assert!(weak_residual(&u, &p).unwrap() <= 1e-12);
    }

    #[test]
    fn triangle_member_is_weak_but_not_classical() {
        let mut weak = Vec::new();
        let mut classical = Vec::new();
        for nt in [64, 128, 256] {
            let (tg, sg) = grids(nt, 100);
            let (u, p) = counterexample_field(PhiKind::Triangle, &tg, sg).unwrap();
            weak.push(weak_residual(&u, &p).unwrap());
            classical.push(classical_residual(&u, &Problem::FirstOrder(p)).unwrap());
        }
        for w in weak.windows(2) {
            assert!(w[0] / w[1] >= 1.8, "{weak:?}");
        }
        for c in classical.windows(2) {
            assert!(c[1] >= 0.9 * c[0], "{classical:?}");
        }
    }

    #[test]
    fn regularity_of_the_profiles() {
        let (tg, sg) = grids(256, 20);
        let probes = [0.0, 0.3, 0.7, 1.0];
        let (tri, _) = counterexample_field(PhiKind::Triangle, &tg, sg).unwrap();
        let s = regularity_estimate(&tri, &probes).unwrap().exponent.unwrap();
        assert!((s - 2.0).abs() <= 0.3, "{s}");
        let (quad, _) = counterexample_field(PhiKind::QuadraticSpline, &tg, sg).unwrap();
        let s = regularity_estimate(&quad, &probes).unwrap().exponent.unwrap();
        assert!((s - 3.0).abs() <= 0.3, "{s}");
        let (sine, _) = counterexample_field(PhiKind::SmoothHarmonic, &tg, sg).unwrap();
        assert!(regularity_estimate(&sine, &probes).unwrap().spectral_flag);
    }

    #[test]
    fn regularity_needs_enough_samples() {
        let (tg, sg) = grids(32, 8);
        let u = PeriodicField::zeros(&tg, sg, 1);
        assert!(matches!(regularity_estimate(&u, &[0.5]), Err(Error::Grid(_))));
    }

    #[test]
    fn zero_state_has_zero_classical_residual() {
        let (tg, sg) = grids(16, 20);
        let p = FirstOrderProblem::new("1 + x", "-2", "sin(u1) + u2^2", "-u2", 0.5, 0.5).unwrap();
        let u = PeriodicField::zeros(&tg, sg, 2);
        assert_eq!(classical_residual(&u, &Problem::FirstOrder(p)).unwrap(), 0.0);
    }

    #[test]
    fn manufactured_wave_has_small_classical_residual() {
        let (tg, sg) = grids(32, 200);
        let p = SecondOrderProblem::new("1 + 0.5*x", "-0.5*ut + 0.2*sin(u)")
            .unwrap()
            .with_manufactured("sin(pi*x/2)*cos(2*pi*t)")
            .unwrap();
        let u = PeriodicField::from_fn(&tg, sg, 1, |_, t, x| (PI * x / 2.0).sin() * (2.0 * PI * t).cos()).unwrap();
        let r = classical_residual(&u, &Problem::SecondOrder(p)).unwrap();
        assert!(r <= 1e-6, "{r}");
    }

    #[test]
    fn weak_residual_is_shift_invariant_on_autonomous_problems() {
        let (tg, sg) = grids(64, 60);
        let p = FirstOrderProblem::new("2 + sin(pi*x)", "-1 - x", "-u1 + 0.3*u2^2", "0.5*sin(u1) - u2", 0.6, 0.7).unwrap();
        let u = random_field(&mut seeded_rng(11), &tg, sg, 2, Band::default());
        let r0 = weak_residual(&u, &p).unwrap();
        let r1 = weak_residual(&u.time_shift(5.0 / 64.0), &p).unwrap();
        assert!((r0 - r1).abs() <= 1e-9, "{r0} {r1}");
        let shifted = fixed_point_residual(&u.time_shift(0.237), &p).unwrap();
        let expected = fixed_point_residual(&u, &p).unwrap().time_shift(0.237);
        assert!(shifted.sup_dist(&expected).unwrap() <= 1e-9);
    }

    #[test]
    fn profile_csv_has_header_and_rows() {
        let (tg, sg) = grids(64, 8);
        let (u, _) = counterexample_field(PhiKind::SmoothHarmonic, &tg, sg).unwrap();
        let est = regularity_estimate(&u, &[0.5]).unwrap();
        let mut buf = Vec::new();
        est.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,k,magnitude\n"));
        assert_eq!(text.lines().count(), 1 + 33);
    }
}
