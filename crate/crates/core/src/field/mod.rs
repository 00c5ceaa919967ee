//! Grid samples of functions on `R x [0, 1]` that are 1-periodic in `t`.
//!
//! In `t` a field is represented by its trigonometric interpolant, in `x` by
//! piecewise cubic Lagrange interpolation. Samples are stored column-wise:
//! for each component and each space node the `n_t` time samples are
//! contiguous.

pub mod random;
pub mod spectral;

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{cubic_stencil, diff1, diff2};
use spectral::FftPlans;

/// Uniform nodes `t_i = i / n` on one period.
#[derive(Clone)]
pub struct TimeGrid {
    plans: Arc<FftPlans>,
}

impl TimeGrid {
    pub const MIN_POINTS: usize = 4;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_POINTS {
            return Err(Error::Grid(format!("time grid needs at least {} nodes, got {n}", Self::MIN_POINTS)));
        }
        Ok(Self {
            plans: Arc::new(FftPlans::new(n)),
        })
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.len() as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    pub fn plans(&self) -> &FftPlans {
        &self.plans
    }

    /// Samples of `t -> p(t + s)` for the interpolant `p` of `values`.
    pub fn shift(&self, values: &[f64], s: f64) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        self.plans.shift_into(values, s, &mut out);
        out
    }

    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        self.plans.derivative_into(values, &mut out);
        out
    }
}

impl PartialEq for TimeGrid {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
    }
}

impl fmt::Debug for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeGrid({})", self.len())
    }
}

/// Uniform nodes `x_k = k / n`, `k = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceGrid {
    cells: usize,
}

impl SpaceGrid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(cells: usize) -> Result<Self> {
        if cells < Self::MIN_CELLS {
            return Err(Error::Grid(format!("space grid needs at least {} cells, got {cells}", Self::MIN_CELLS)));
        }
        Ok(Self { cells })
    }

    /// Number of cells `n_x`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of nodes `n_x + 1`.
    pub fn points(&self) -> usize {
        self.cells + 1
    }

    pub fn step(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.cells {
            1.0
        } else {
            k as f64 / self.cells as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points()).map(|k| self.node(k))
    }

    /// Interpolation stencil for an arbitrary `x` in `[0, 1]`.
    pub fn stencil(&self, x: f64) -> Result<(usize, [f64; 4])> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutsideDomain(x));
        }
        let pos = x * self.cells as f64;
        let cell = (pos.floor() as usize).min(self.cells - 1);
        Ok(cubic_stencil(cell, self.cells, pos - cell as f64))
    }
}

/// Samples of a 1-periodic-in-`t` function with one or two components.
#[derive(Clone, PartialEq)]
pub struct PeriodicField {
    time: TimeGrid,
    space: SpaceGrid,
    ncomp: usize,
    data: Vec<f64>,
}

impl fmt::Debug for PeriodicField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicField")
            .field("n_t", &self.time.len())
            .field("n_x", &self.space.cells())
            .field("components", &self.ncomp)
            .finish()
    }
}

impl PeriodicField {
    /// Builds a field from column-major samples: index `(c * (n_x+1) + k) * n_t + i`.
    pub fn from_columns(time: TimeGrid, space: SpaceGrid, ncomp: usize, data: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&ncomp) {
            return Err(Error::Shape(format!("fields have 1 or 2 components, got {ncomp}")));
        }
        let expected = ncomp * space.points() * time.len();
        if data.len() != expected {
            return Err(Error::Shape(format!("expected {expected} samples, got {}", data.len())));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite sample at flat index {bad}")));
        }
        Ok(Self {
            time,
            space,
            ncomp,
            data,
        })
    }

    pub fn from_fn(time: &TimeGrid, space: SpaceGrid, ncomp: usize, mut f: impl FnMut(usize, f64, f64) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(ncomp * space.points() * time.len());
        for c in 0..ncomp {
            for k in 0..space.points() {
                let x = space.node(k);
                for i in 0..time.len() {
                    data.push(f(c, time.node(i), x));
                }
            }
        }
        Self::from_columns(time.clone(), space, ncomp, data)
    }

    pub fn try_from_fn(
        time: &TimeGrid,
        space: SpaceGrid,
        ncomp: usize,
        mut f: impl FnMut(usize, f64, f64) -> Result<f64>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(ncomp * space.points() * time.len());
        for c in 0..ncomp {
            for k in 0..space.points() {
                let x = space.node(k);
                for i in 0..time.len() {
                    data.push(f(c, time.node(i), x)?);
                }
            }
        }
        Self::from_columns(time.clone(), space, ncomp, data)
    }

    pub fn constant(time: &TimeGrid, space: SpaceGrid, ncomp: usize, value: f64) -> Self {
        let len = ncomp * space.points() * time.len();
        Self {
            time: time.clone(),
            space,
            ncomp,
            data: vec![value; len],
        }
    }

    pub fn zeros(time: &TimeGrid, space: SpaceGrid, ncomp: usize) -> Self {
        Self::constant(time, space, ncomp, 0.0)
    }

    /// Crate-internal constructor that skips the finiteness scan.
    pub(crate) fn from_parts(time: TimeGrid, space: SpaceGrid, ncomp: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), ncomp * space.points() * time.len());
        Self {
            time,
            space,
            ncomp,
            data,
        }
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn space(&self) -> SpaceGrid {
        self.space
    }

    pub fn components(&self) -> usize {
        self.ncomp
    }

    pub fn n_t(&self) -> usize {
        self.time.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, i: usize, k: usize) -> usize {
        (c * self.space.points() + k) * self.time.len() + i
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, k: usize) -> f64 {
        self.data[self.index(c, i, k)]
    }

    /// Time samples of component `c` at space node `k`.
    pub fn column(&self, c: usize, k: usize) -> &[f64] {
        let n = self.time.len();
        let start = self.index(c, 0, k);
        &self.data[start..start + n]
    }

    /// Samples of component `c` at time node `i` across all space nodes.
    pub fn row(&self, c: usize, i: usize) -> Vec<f64> {
        (0..self.space.points()).map(|k| self.get(c, i, k)).collect()
    }

    pub fn component(&self, c: usize) -> PeriodicField {
        let len = self.space.points() * self.time.len();
        let start = c * len;
        Self::from_parts(self.time.clone(), self.space, 1, self.data[start..start + len].to_vec())
    }

    /// Stacks two scalar fields into a two-component field.
    pub fn stack(first: &PeriodicField, second: &PeriodicField) -> Result<PeriodicField> {
        first.check_compatible(second)?;
        if first.ncomp != 1 || second.ncomp != 1 {
            return Err(Error::Shape("stack expects scalar fields".into()));
        }
        let mut data = first.data.clone();
        data.extend_from_slice(&second.data);
        Ok(Self::from_parts(first.time.clone(), first.space, 2, data))
    }

    pub fn check_compatible(&self, other: &PeriodicField) -> Result<()> {
        if self.time != other.time || self.space != other.space {
            return Err(Error::Shape(format!(
                "grids differ: ({}, {}) vs ({}, {})",
                self.n_t(),
                self.space.cells(),
                other.n_t(),
                other.space.cells()
            )));
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &PeriodicField) -> Result<()> {
        self.check_compatible(other)?;
        if self.ncomp != other.ncomp {
            return Err(Error::Shape(format!("{} vs {} components", self.ncomp, other.ncomp)));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PeriodicField {
        Self::from_parts(self.time.clone(), self.space, self.ncomp, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields with identical shape.
    pub fn zip_with(&self, other: &PeriodicField, f: impl Fn(f64, f64) -> f64) -> Result<PeriodicField> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_parts(self.time.clone(), self.space, self.ncomp, data))
    }

    pub fn scale(&self, s: f64) -> PeriodicField {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &PeriodicField) -> Result<PeriodicField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &PeriodicField) -> Result<PeriodicField> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &PeriodicField, beta: f64) -> Result<PeriodicField> {
        self.zip_with(other, |a, b| alpha * a + beta * b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_dist(&self, other: &PeriodicField) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn dot(&self, other: &PeriodicField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Point evaluation; `t` is reduced modulo 1.
    pub fn eval(&self, comp: usize, t: f64, x: f64) -> Result<f64> {
        let (start, w) = self.space.stencil(x)?;
        let plans = self.time.plans();
        let mut acc = 0.0;
        for (m, wm) in w.iter().enumerate() {
            let spec = plans.spectrum(self.column(comp, start + m));
            acc += wm * plans.eval_spectrum(&spec, t);
        }
        Ok(acc)
    }

    /// Field whose value at `(t, x)` is this field's value at `(t + phi, x)`.
    pub fn time_shift(&self, phi: f64) -> PeriodicField {
        let n = self.time.len();
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.data.chunks(n).zip(data.chunks_mut(n)) {
            self.time.plans().shift_into(src, phi, dst);
        }
        Self::from_parts(self.time.clone(), self.space, self.ncomp, data)
    }

    /// Spectral derivative in `t`.
    pub fn dt(&self) -> PeriodicField {
        let n = self.time.len();
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.data.chunks(n).zip(data.chunks_mut(n)) {
            self.time.plans().derivative_into(src, dst);
        }
        Self::from_parts(self.time.clone(), self.space, self.ncomp, data)
    }

    fn map_rows(&self, op: impl Fn(&[f64], f64, &mut [f64])) -> PeriodicField {
        let n = self.time.len();
        let nx = self.space.points();
        let h = self.space.step();
        let mut data = vec![0.0; self.data.len()];
        let mut row = vec![0.0; nx];
        let mut out = vec![0.0; nx];
        for c in 0..self.ncomp {
            for i in 0..n {
                for (k, r) in row.iter_mut().enumerate() {
                    *r = self.get(c, i, k);
                }
                op(&row, h, &mut out);
                for (k, o) in out.iter().enumerate() {
                    data[(c * nx + k) * n + i] = *o;
                }
            }
        }
        Self::from_parts(self.time.clone(), self.space, self.ncomp, data)
    }

    /// Fourth-order finite-difference derivative in `x`.
    pub fn dx(&self) -> PeriodicField {
        self.map_rows(diff1)
    }

    /// Fourth-order finite-difference second derivative in `x`.
    pub fn dxx(&self) -> PeriodicField {
        self.map_rows(diff2)
    }

    /// Writes `t,x,comp,value` rows, `comp` varying fastest.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,comp,value")?;
        for i in 0..self.n_t() {
            let t = self.time.node(i);
            for k in 0..self.space.points() {
                let x = self.space.node(k);
                for c in 0..self.ncomp {
                    writeln!(w, "{t:.16e},{x:.16e},{c},{:.16e}", self.get(c, i, k))?;
                }
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`PeriodicField::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<PeriodicField> {
        let mut rows: Vec<(f64, f64, usize, f64)> = Vec::new();
        for (line_no, line) in r.lines().enumerate() {
            let line = line?;
            if line_no == 0 {
                if line.trim() != "t,x,comp,value" {
                    return Err(Error::Shape(format!("unexpected CSV header `{line}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || Error::Shape(format!("malformed CSV line {}: `{line}`", line_no + 1));
            if parts.len() != 4 {
                return Err(bad());
            }
            let t: f64 = parts[0].trim().parse().map_err(|_| bad())?;
            let x: f64 = parts[1].trim().parse().map_err(|_| bad())?;
            let c: usize = parts[2].trim().parse().map_err(|_| bad())?;
            let v: f64 = parts[3].trim().parse().map_err(|_| bad())?;
            rows.push((t, x, c, v));
        }
        let ncomp = rows.iter().map(|r| r.2).max().map_or(0, |m| m + 1);
        let nx_points = rows.iter().take_while(|r| r.0 == rows[0].0).count() / ncomp.max(1);
        if ncomp == 0 || nx_points < 2 || !rows.len().is_multiple_of(ncomp * nx_points) {
            return Err(Error::Shape("CSV does not describe a full grid".into()));
        }
        let n_t = rows.len() / (ncomp * nx_points);
        let time = TimeGrid::new(n_t)?;
        let space = SpaceGrid::new(nx_points - 1)?;
        let mut data = vec![0.0; rows.len()];
        for (idx, &(t, x, c, v)) in rows.iter().enumerate() {
            let i = idx / (ncomp * nx_points);
            let k = (idx / ncomp) % nx_points;
            if c != idx % ncomp || (t - time.node(i)).abs() > 1e-12 || (x - space.node(k)).abs() > 1e-12 {
                return Err(Error::Shape(format!("CSV row {} is out of grid order", idx + 2)));
            }
            data[(c * nx_points + k) * n_t + i] = v;
        }
        PeriodicField::from_columns(time, space, ncomp, data)
    }
}

/// Caches the per-column spectra of a field for repeated point evaluation.
pub struct FieldInterpolant<'a> {
    field: &'a PeriodicField,
    spectra: Vec<Vec<Complex64>>,
}

impl<'a> FieldInterpolant<'a> {
    pub fn new(field: &'a PeriodicField) -> Self {
        let plans = field.time.plans();
        let spectra = (0..field.ncomp)
            .flat_map(|c| (0..field.space.points()).map(move |k| (c, k)))
            .map(|(c, k)| plans.spectrum(field.column(c, k)))
            .collect();
        Self { field, spectra }
    }

    pub fn field(&self) -> &PeriodicField {
        self.field
    }

    pub fn eval(&self, comp: usize, t: f64, x: f64) -> Result<f64> {
        let (start, w) = self.field.space.stencil(x)?;
        let plans = self.field.time.plans();
        let base = comp * self.field.space.points();
        Ok(w
            .iter()
            .enumerate()
            .map(|(m, wm)| wm * plans.eval_spectrum(&self.spectra[base + start + m], t))
            .sum())
    }
}
