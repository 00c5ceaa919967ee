//! Browser bindings: solve a wave equation, check its non-resonance
//! conditions and inspect the resonant counterexample family.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use perihyp::diagnostics::{classical_residual, counterexample_field, regularity_estimate, weak_residual, PhiKind};
use perihyp::field::{PeriodicField, SpaceGrid, TimeGrid};
use perihyp::nonresonance::{check_second_order, NonresonanceReport, DEFAULT_TOLERANCE};
use perihyp::problem::{Problem, SecondOrderProblem};
use perihyp::solver::SolveOptions;
use perihyp::wave2fos::solve_second_order;
use perihyp::Error;

const MAX_GRID: usize = 256;

#[derive(Serialize)]
struct Margin {
    condition: String,
    margin: f64,
    satisfied: bool,
}

fn margins(reports: &[NonresonanceReport]) -> Vec<Margin> {
    reports
        .iter()
        .map(|r| Margin {
            condition: format!("{:?}", r.condition_id),
            margin: r.margin,
            satisfied: r.satisfied(),
        })
        .collect()
}

fn grids(nt: usize, nx: usize) -> Result<(TimeGrid, SpaceGrid), String> {
    if !(8..=MAX_GRID).contains(&nt) || !(8..=MAX_GRID).contains(&nx) {
        return Err(format!("grid sizes must lie in [8, {MAX_GRID}]"));
    }
    Ok((TimeGrid::new(nt).map_err(|e| e.to_string())?, SpaceGrid::new(nx).map_err(|e| e.to_string())?))
}

fn wave_problem(a: &str, f: &str, g: &str) -> Result<SecondOrderProblem, String> {
    let mut p = SecondOrderProblem::new(a, f).map_err(|e| e.to_string())?;
    if !g.trim().is_empty() {
        p = p.with_source(g).map_err(|e| e.to_string())?;
    }
    let v = p.validate().map_err(|e| e.to_string())?;
    if !v.passed {
        return Err(v.describe());
    }
    Ok(p)
}

#[derive(Serialize)]
struct WaveSolution {
    outcome: &'static str,
    iterations: usize,
    residual_history: Vec<f64>,
    margins: Vec<Margin>,
    nt: usize,
    nx: usize,
    /// `u(t_i, x_k)` at index `k * nt + i`.
    values: Vec<f64>,
}

/// Solves `u_tt - a^2 u_xx = f(x, u, u_t, u_x) + g(t, x)` from zero.
pub fn solve_wave_json(a: &str, f: &str, g: &str, nt: usize, nx: usize) -> Result<String, String> {
    let p = wave_problem(a, f, g)?;
    let (time, space) = grids(nt, nx)?;
    let opts = SolveOptions {
        max_iter: 40,
        tol: 1e-9,
        ..SolveOptions::default()
    };
    let (report, outcome) = match solve_second_order(&p, &PeriodicField::zeros(&time, space, 1), &opts) {
        Ok(r) => (r, "converged"),
        Err(Error::ResonantIterate(r)) => (*r, "resonant"),
        Err(Error::MaxIterationsExceeded(r)) => (*r, "not converged"),
        Err(e) => return Err(e.to_string()),
    };
    let out = WaveSolution {
        outcome,
        iterations: report.iterations,
        residual_history: report.residual_history.clone(),
        margins: margins(&report.nonresonance),
        nt,
        nx,
        values: report.solution.data().to_vec(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Non-resonance margins of a wave equation at `u = 0`.
pub fn wave_margins_json(a: &str, f: &str, nt: usize, nx: usize) -> Result<String, String> {
    let p = wave_problem(a, f, "")?;
    let (time, space) = grids(nt, nx)?;
    let reports = check_second_order(&PeriodicField::zeros(&time, space, 1), &p, DEFAULT_TOLERANCE).map_err(|e| e.to_string())?;
    serde_json::to_string(&margins(&reports)).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Counterexample {
    nt: Vec<usize>,
    weak: Vec<f64>,
    classical: Vec<f64>,
    envelope: Vec<f64>,
    exponent: Option<f64>,
    spectral: bool,
}

/// Residuals of `u_phi` under refinement in `t` and its Fourier envelope.
pub fn counterexample_json(phi: &str, nt: usize) -> Result<String, String> {
    let kind: PhiKind = phi.parse().map_err(|e: Error| e.to_string())?;
    let (_, space) = grids(nt, 40)?;
    let mut out = Counterexample {
        nt: Vec::new(),
        weak: Vec::new(),
        classical: Vec::new(),
        envelope: Vec::new(),
        exponent: None,
        spectral: false,
    };
    let mut n = nt;
    while n <= 4 * nt {
        let time = TimeGrid::new(n).map_err(|e| e.to_string())?;
        let (u, p) = counterexample_field(kind, &time, space).map_err(|e| e.to_string())?;
        out.nt.push(n);
        out.weak.push(weak_residual(&u, &p).map_err(|e| e.to_string())?);
        out.classical.push(classical_residual(&u, &Problem::FirstOrder(p)).map_err(|e| e.to_string())?);
        if n >= 64 && out.envelope.is_empty() {
            let est = regularity_estimate(&u, &[0.0, 0.5, 1.0]).map_err(|e| e.to_string())?;
            out.envelope = est.envelope;
            out.exponent = est.exponent;
            out.spectral = est.spectral_flag;
        }
        n *= 2;
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn solve_wave(a: &str, f: &str, g: &str, nt: usize, nx: usize) -> Result<String, JsValue> {
    solve_wave_json(a, f, g, nt, nx).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn wave_margins(a: &str, f: &str, nt: usize, nx: usize) -> Result<String, JsValue> {
    wave_margins_json(a, f, nt, nx).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn counterexample(phi: &str, nt: usize) -> Result<String, JsValue> {
    counterexample_json(phi, nt).map_err(|e| JsValue::from_str(&e))
}
