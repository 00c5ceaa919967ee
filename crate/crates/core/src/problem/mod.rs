//! Problem definitions for the first-order system
//!
//! ```text
//! d_t u_j + a_j(x) d_x u_j = f_j(x, u1, u2) + g_j(t, x),   j = 1, 2,
//! u1(t, 0) = r1 u2(t, 0),  u2(t, 1) = r2 u1(t, 1),  u(t + 1, x) = u(t, x)
//! ```
//!
//! and the second-order equation
//!
//! ```text
//! d_t^2 u - a(x)^2 d_x^2 u = f(x, u, d_t u, d_x u) + g(t, x),
//! u(t, 0) = 0,  d_x u(t, 1) = 0,  u(t + 1, x) = u(t, x).
//! ```
//!
//! The source `g` is optional. It is either given explicitly or derived from
//! a prescribed exact solution (method of manufactured solutions).

pub mod dual;
pub mod expr;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use dual::{Dual, Real};
pub use expr::Expr;

pub const SPEED_VARS: [&str; 1] = ["x"];
pub const SYSTEM_VARS: [&str; 3] = ["x", "u1", "u2"];
pub const WAVE_VARS: [&str; 4] = ["x", "u", "ut", "ux"];
pub const SOURCE_VARS: [&str; 2] = ["t", "x"];

/// Number of sample points used by [`FirstOrderProblem::validate`] and
/// [`SecondOrderProblem::validate`].
pub const VALIDATION_POINTS: usize = 1000;
/// Minimal admissible margin of the validation checks.
pub const VALIDATION_MARGIN: f64 = 1e-10;

/// Optional time-dependent source term.
#[derive(Debug, Clone, PartialEq)]
pub enum Source<const N: usize> {
    None,
    /// `g_j(t, x)` given explicitly.
    Explicit([Expr; N]),
    /// `g` chosen so that the given `u*(t, x)` is an exact solution.
    Manufactured([Expr; N]),
}

impl<const N: usize> Source<N> {
    pub fn is_none(&self) -> bool {
        matches!(self, Source::None)
    }
}

fn parse_all<const N: usize>(srcs: [&str; N], vars: &[&str]) -> Result<[Expr; N]> {
    let mut out = Vec::with_capacity(N);
    for s in srcs {
        out.push(Expr::parse(s, vars)?);
    }
    Ok(out.try_into().expect("length N"))
}

/// Value, first derivative in `t` and first derivative in `x` of an
/// expression over `(t, x)`.
fn first_derivatives(e: &Expr, t: f64, x: f64) -> Result<(f64, f64, f64)> {
    let dt = e.eval_real(&[Dual::var(t), Dual::constant(x)])?;
    let dx = e.eval_real(&[Dual::constant(t), Dual::var(x)])?;
    Ok((dt.re, dt.eps, dx.eps))
}

/// Value together with first and second derivatives in `t` and in `x`:
/// `(u, u_t, u_tt, u_x, u_xx)`.
fn second_derivatives(e: &Expr, t: f64, x: f64) -> Result<(f64, f64, f64, f64, f64)> {
    let var = |v: f64| Dual::new(Dual::var(v), Dual::cst(1.0));
    let cst = |v: f64| Dual::<Dual<f64>>::cst(v);
    let dt = e.eval_real(&[var(t), cst(x)])?;
    let dx = e.eval_real(&[cst(t), var(x)])?;
    Ok((dt.re.re, dt.eps.re, dt.eps.eps, dx.eps.re, dx.eps.eps))
}

/// `d_t u_j + a_j d_x u_j = f_j(x, u) + g_j(t, x)` with the boundary
/// conditions of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderProblem {
    pub a: [Expr; 2],
    pub f: [Expr; 2],
    pub r: [f64; 2],
    pub source: Source<2>,
    /// Optional time-independent profile `(u1(x), u2(x))` for eigenvalue
    /// computations.
    pub stationary: Option<[Expr; 2]>,
}

impl FirstOrderProblem {
    pub fn new(a1: &str, a2: &str, f1: &str, f2: &str, r1: f64, r2: f64) -> Result<Self> {
        if !r1.is_finite() || !r2.is_finite() {
            return Err(Error::InvalidProblem("reflection constants must be finite".into()));
        }
        Ok(Self {
            a: parse_all([a1, a2], &SPEED_VARS)?,
            f: parse_all([f1, f2], &SYSTEM_VARS)?,
            r: [r1, r2],
            source: Source::None,
            stationary: None,
        })
    }

    /// Adds an explicit source `g_j(t, x)`.
    pub fn with_source(mut self, g1: &str, g2: &str) -> Result<Self> {
        self.source = Source::Explicit(parse_all([g1, g2], &SOURCE_VARS)?);
        Ok(self)
    }

    /// Adds the source that makes `(u1*(t, x), u2*(t, x))` an exact solution.
    pub fn with_manufactured(mut self, u1: &str, u2: &str) -> Result<Self> {
        self.source = Source::Manufactured(parse_all([u1, u2], &SOURCE_VARS)?);
        Ok(self)
    }

    pub fn with_stationary(mut self, u1: &str, u2: &str) -> Result<Self> {
        self.stationary = Some(parse_all([u1, u2], &SPEED_VARS)?);
        Ok(self)
    }

    /// Whether the problem has no explicit time dependence.
    pub fn is_autonomous(&self) -> bool {
        self.source.is_none()
    }

    pub fn speed(&self, j: usize, x: f64) -> Result<f64> {
        self.a[j].eval(&[x])
    }

    /// `f_j(x, u1, u2)`.
    pub fn nonlinearity(&self, j: usize, x: f64, u: [f64; 2]) -> Result<f64> {
        self.f[j].eval(&[x, u[0], u[1]])
    }

    /// `d f_j / d u_j` at `(x, u)`.
    pub fn diagonal_partial(&self, j: usize, x: f64, u: [f64; 2]) -> Result<f64> {
        Ok(self.f[j].eval_partial(&[x, u[0], u[1]], 1 + j)?.1)
    }

    /// `(f_j, d f_j / d u1, d f_j / d u2)` at `(x, u)`.
    pub fn partials(&self, j: usize, x: f64, u: [f64; 2]) -> Result<(f64, f64, f64)> {
        let (v, p) = self.f[j].eval_partials(&[x, u[0], u[1]], &[1, 2])?;
        Ok((v, p[0], p[1]))
    }

    /// The source `g_j(t, x)`; zero when absent.
    pub fn source_value(&self, j: usize, t: f64, x: f64) -> Result<f64> {
        match &self.source {
            Source::None => Ok(0.0),
            Source::Explicit(g) => g[j].eval(&[t, x]),
            Source::Manufactured(us) => {
                let (u1, _, _) = first_derivatives(&us[0], t, x)?;
                let (u2, _, _) = first_derivatives(&us[1], t, x)?;
                let (_, ut, ux) = first_derivatives(&us[j], t, x)?;
                Ok(ut + self.speed(j, x)? * ux - self.nonlinearity(j, x, [u1, u2])?)
            }
        }
    }

    /// The prescribed exact solution, if any.
    pub fn exact_solution(&self) -> Option<&[Expr; 2]> {
        match &self.source {
            Source::Manufactured(us) => Some(us),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        let mut min_a = [f64::INFINITY; 2];
        let mut min_gap = f64::INFINITY;
        let mut signs = [[false; 2]; 2];
        let mut gap_signs = [false; 2];
        for i in 0..VALIDATION_POINTS {
            let x = i as f64 / (VALIDATION_POINTS - 1) as f64;
            let a1 = self.speed(0, x)?;
            let a2 = self.speed(1, x)?;
            for (j, a) in [a1, a2].into_iter().enumerate() {
                min_a[j] = min_a[j].min(a.abs());
                signs[j][(a > 0.0) as usize] = true;
            }
            min_gap = min_gap.min((a1 - a2).abs());
            gap_signs[(a1 > a2) as usize] = true;
        }
        let sign_constant = signs.iter().all(|s| !(s[0] && s[1])) && !(gap_signs[0] && gap_signs[1]);
        let mut boundary_defect = None;
        if let Some(us) = self.exact_solution() {
            let mut worst: f64 = 0.0;
            for i in 0..64 {
                let t = i as f64 / 64.0;
                let left = us[0].eval(&[t, 0.0])? - self.r[0] * us[1].eval(&[t, 0.0])?;
                let right = us[1].eval(&[t, 1.0])? - self.r[1] * us[0].eval(&[t, 1.0])?;
                worst = worst.max(left.abs()).max(right.abs());
            }
            boundary_defect = Some(worst);
        }
        let margins_ok = min_a.iter().all(|&m| m > VALIDATION_MARGIN) && min_gap > VALIDATION_MARGIN;
        let boundary_ok = boundary_defect.is_none_or(|d| d <= 1e-10);
        Ok(ValidationReport {
            min_abs_speed: min_a.to_vec(),
            min_speed_gap: Some(min_gap),
            sign_constant,
            boundary_defect,
            passed: margins_ok && sign_constant && boundary_ok,
        })
    }

    /// Validation that turns a failed report into an error.
    pub fn ensure_valid(&self) -> Result<ValidationReport> {
        let report = self.validate()?;
        if !report.passed {
            return Err(Error::InvalidProblem(report.describe()));
        }
        Ok(report)
    }
}

/// `d_t^2 u - a(x)^2 d_x^2 u = f(x, u, u_t, u_x) + g(t, x)` with
/// `u(t, 0) = 0` and `u_x(t, 1) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderProblem {
    pub a: Expr,
    pub f: Expr,
    pub source: Source<1>,
}

impl SecondOrderProblem {
    pub fn new(a: &str, f: &str) -> Result<Self> {
        Ok(Self {
            a: Expr::parse(a, &SPEED_VARS)?,
            f: Expr::parse(f, &WAVE_VARS)?,
            source: Source::None,
        })
    }

    pub fn with_source(mut self, g: &str) -> Result<Self> {
        self.source = Source::Explicit([Expr::parse(g, &SOURCE_VARS)?]);
        Ok(self)
    }

    pub fn with_manufactured(mut self, u: &str) -> Result<Self> {
        self.source = Source::Manufactured([Expr::parse(u, &SOURCE_VARS)?]);
        Ok(self)
    }

    pub fn is_autonomous(&self) -> bool {
        self.source.is_none()
    }

    pub fn speed(&self, x: f64) -> Result<f64> {
        self.a.eval(&[x])
    }

    /// `(a(x), a'(x))`, the derivative by dual numbers.
    pub fn speed_and_slope(&self, x: f64) -> Result<(f64, f64)> {
        self.a.eval_partial(&[x], 0)
    }

    pub fn nonlinearity(&self, x: f64, u: f64, ut: f64, ux: f64) -> Result<f64> {
        self.f.eval(&[x, u, ut, ux])
    }

    /// `(f, d_2 f, d_3 f, d_4 f)`: value and partials in `u`, `u_t`, `u_x`.
    pub fn partials(&self, x: f64, u: f64, ut: f64, ux: f64) -> Result<[f64; 4]> {
        let (v, p) = self.f.eval_partials(&[x, u, ut, ux], &[1, 2, 3])?;
        Ok([v, p[0], p[1], p[2]])
    }

    /// `b_+ = d_3 f + d_4 f / a` and `b_- = d_3 f - d_4 f / a`.
    pub fn b_plus_minus(&self, x: f64, u: f64, ut: f64, ux: f64) -> Result<(f64, f64)> {
        let p = self.partials(x, u, ut, ux)?;
        let a = self.speed(x)?;
        Ok((p[2] + p[3] / a, p[2] - p[3] / a))
    }

    pub fn source_value(&self, t: f64, x: f64) -> Result<f64> {
        match &self.source {
            Source::None => Ok(0.0),
            Source::Explicit([g]) => g.eval(&[t, x]),
            Source::Manufactured([u]) => {
                let (v, ut, utt, ux, uxx) = second_derivatives(u, t, x)?;
                let a = self.speed(x)?;
                Ok(utt - a * a * uxx - self.nonlinearity(x, v, ut, ux)?)
            }
        }
    }

    pub fn exact_solution(&self) -> Option<&Expr> {
        match &self.source {
            Source::Manufactured([u]) => Some(u),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        let mut min_a = f64::INFINITY;
        let mut signs = [false; 2];
        for i in 0..VALIDATION_POINTS {
            let x = i as f64 / (VALIDATION_POINTS - 1) as f64;
            let a = self.speed(x)?;
            min_a = min_a.min(a.abs());
            signs[(a > 0.0) as usize] = true;
        }
        let sign_constant = !(signs[0] && signs[1]);
        let mut boundary_defect = None;
        if let Some(u) = self.exact_solution() {
            let mut worst: f64 = 0.0;
            for i in 0..64 {
                let t = i as f64 / 64.0;
                let left = u.eval(&[t, 0.0])?;
                let (_, _, _, ux, _) = second_derivatives(u, t, 1.0)?;
                worst = worst.max(left.abs()).max(ux.abs());
            }
            boundary_defect = Some(worst);
        }
        let boundary_ok = boundary_defect.is_none_or(|d| d <= 1e-10);
        Ok(ValidationReport {
            min_abs_speed: vec![min_a],
            min_speed_gap: None,
            sign_constant,
            boundary_defect,
            passed: min_a > VALIDATION_MARGIN && sign_constant && boundary_ok,
        })
    }

    pub fn ensure_valid(&self) -> Result<ValidationReport> {
        let report = self.validate()?;
        if !report.passed {
            return Err(Error::InvalidProblem(report.describe()));
        }
        Ok(report)
    }
}

/// Outcome of the sampling-based coefficient checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `min |a_j|` per family (one entry for second-order problems).
    pub min_abs_speed: Vec<f64>,
    /// `min |a1 - a2|` for first-order problems.
    pub min_speed_gap: Option<f64>,
    /// No sign change of `a_j` (and of `a1 - a2`) between samples.
    pub sign_constant: bool,
    /// Largest boundary-condition defect of a prescribed exact solution.
    pub boundary_defect: Option<f64>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn describe(&self) -> String {
        let mut parts = vec![format!("min |a| = {:?}", self.min_abs_speed)];
        if let Some(g) = self.min_speed_gap {
            parts.push(format!("min |a1 - a2| = {g:e}"));
        }
        if !self.sign_constant {
            parts.push("coefficient changes sign".into());
        }
        if let Some(d) = self.boundary_defect {
            parts.push(format!("exact-solution boundary defect = {d:e}"));
        }
        parts.join(", ")
    }
}

/// Either problem class, as read from a problem file.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    FirstOrder(FirstOrderProblem),
    SecondOrder(SecondOrderProblem),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ExprText {
    Text(String),
    Number(f64),
}

impl ExprText {
    fn text(&self) -> String {
        match self {
            ExprText::Text(s) => s.clone(),
            ExprText::Number(v) => format!("{v:?}"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Exact {
    u1: Option<ExprText>,
    u2: Option<ExprText>,
    u: Option<ExprText>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    kind: String,
    a1: Option<ExprText>,
    a2: Option<ExprText>,
    f1: Option<ExprText>,
    f2: Option<ExprText>,
    r1: Option<f64>,
    r2: Option<f64>,
    a: Option<ExprText>,
    f: Option<ExprText>,
    g1: Option<ExprText>,
    g2: Option<ExprText>,
    g: Option<ExprText>,
    manufactured: Option<Exact>,
    stationary: Option<Exact>,
}

fn required(field: &Option<ExprText>, name: &str) -> Result<String> {
    field
        .as_ref()
        .map(ExprText::text)
        .ok_or_else(|| Error::InvalidProblem(format!("missing field `{name}`")))
}

impl Problem {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        match file.kind.as_str() {
            "first_order" => {
                let r1 = file.r1.ok_or_else(|| Error::InvalidProblem("missing field `r1`".into()))?;
                let r2 = file.r2.ok_or_else(|| Error::InvalidProblem("missing field `r2`".into()))?;
                let mut p = FirstOrderProblem::new(
                    &required(&file.a1, "a1")?,
                    &required(&file.a2, "a2")?,
                    &required(&file.f1, "f1")?,
                    &required(&file.f2, "f2")?,
                    r1,
                    r2,
                )?;
                match (&file.g1, &file.g2, &file.manufactured) {
                    (None, None, None) => {}
                    (Some(_), Some(_), None) => {
                        p = p.with_source(&required(&file.g1, "g1")?, &required(&file.g2, "g2")?)?
                    }
                    (None, None, Some(m)) => p = p.with_manufactured(&required(&m.u1, "manufactured.u1")?, &required(&m.u2, "manufactured.u2")?)?,
                    _ => return Err(Error::InvalidProblem("give either both g1 and g2 or a manufactured solution".into())),
                }
                if let Some(s) = &file.stationary {
                    p = p.with_stationary(&required(&s.u1, "stationary.u1")?, &required(&s.u2, "stationary.u2")?)?;
                }
                Ok(Problem::FirstOrder(p))
            }
            "second_order" => {
                let mut p = SecondOrderProblem::new(&required(&file.a, "a")?, &required(&file.f, "f")?)?;
                match (&file.g, &file.manufactured) {
                    (None, None) => {}
                    (Some(g), None) => p = p.with_source(&g.text())?,
                    (None, Some(m)) => p = p.with_manufactured(&required(&m.u, "manufactured.u")?)?,
                    _ => return Err(Error::InvalidProblem("give either g or a manufactured solution".into())),
                }
                Ok(Problem::SecondOrder(p))
            }
            other => Err(Error::InvalidProblem(format!("unknown kind `{other}`"))),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        match self {
            Problem::FirstOrder(p) => p.validate(),
            Problem::SecondOrder(p) => p.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_examples() {
        let p = FirstOrderProblem::new("4", "-4", "0", "0", 1.0, -1.0).unwrap();
        let r = p.validate().unwrap();
        assert!(r.passed);
        assert_eq!(r.min_abs_speed, vec![4.0, 4.0]);
        assert_eq!(r.min_speed_gap, Some(8.0));

        let p = FirstOrderProblem::new("x - 0.5", "-1", "0", "0", 1.0, 1.0).unwrap();
        assert!(!p.validate().unwrap().passed);
        let p = FirstOrderProblem::new("1", "1", "0", "0", 1.0, 1.0).unwrap();
        assert!(!p.validate().unwrap().passed);
        let p = SecondOrderProblem::new("1 + x", "0").unwrap();
        assert!(p.validate().unwrap().passed);
    }

    #[test]
    fn manufactured_source_cancels_the_defect() {
        let p = FirstOrderProblem::new("1 + x", "-2", "-u1 + u2^2", "sin(u1)", 1.0, 1.0)
            .unwrap()
            .with_manufactured("cos(2*pi*t) * x", "sin(2*pi*t)")
            .unwrap();
        let (t, x) = (0.3, 0.7);
        let u1 = (2.0 * std::f64::consts::PI * t).cos() * x;
        let u2 = (2.0 * std::f64::consts::PI * t).sin();
        let u1t = -2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * t).sin() * x;
        let u1x = (2.0 * std::f64::consts::PI * t).cos();
        let g = p.source_value(0, t, x).unwrap();
        assert!((g - (u1t + (1.0 + x) * u1x - (-u1 + u2 * u2))).abs() < 1e-12);
    }

    #[test]
    fn second_order_source_uses_second_derivatives() {
        let p = SecondOrderProblem::new("1 + x", "-ut").unwrap().with_manufactured("x^3 * t").unwrap();
        let (t, x) = (0.4, 0.5);
        let a = 1.0 + x;
        let expected = 0.0 - a * a * 6.0 * x * t - (-(x * x * x));
        assert!((p.source_value(t, x).unwrap() - expected).abs() < 1e-12);
        let (a, da) = p.speed_and_slope(0.3).unwrap();
        assert_eq!((a, da), (1.3, 1.0));
    }

    #[test]
    fn problem_files() {
        let p = Problem::from_json_str(r#"{"kind":"first_order","a1":"4","a2":-4,"f1":"0","f2":"0","r1":1,"r2":-1}"#).unwrap();
        assert!(matches!(p, Problem::FirstOrder(_)));
        let p = Problem::from_json_str(r#"{"kind":"second_order","a":"1","f":"-0.1*ut"}"#).unwrap();
        assert!(matches!(p, Problem::SecondOrder(_)));
        let err = Problem::from_json_str(r#"{"kind":"first_order","a1":"4 +","a2":"-4","f1":"0","f2":"0","r1":1,"r2":-1}"#);
        assert!(matches!(err, Err(Error::Syntax { pos: 3, .. })));
        assert!(Problem::from_json_str(r#"{"kind":"third_order"}"#).is_err());
    }
}
