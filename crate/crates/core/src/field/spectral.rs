//! Trigonometric interpolation on the uniform grid `t_i = i / n` of one period.
//!
//! For even `n` the Nyquist mode is represented by `cos(pi n t)`, which keeps
//! the interpolant real and makes every shift a convolution with a fixed
//! kernel (see [`shift_kernel`]).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct FftPlans {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FftPlans {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FftPlans").field("n", &self.n).finish()
    }
}

impl FftPlans {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Unnormalised DFT coefficients `c_k = sum_j v_j exp(-2 pi i k j / n)`.
    pub fn spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Signed frequency of DFT index `k`.
    #[inline]
    pub fn frequency(&self, k: usize) -> isize {
        if 2 * k <= self.n {
            k as isize
        } else {
            k as isize - self.n as isize
        }
    }

    fn is_nyquist(&self, k: usize) -> bool {
        self.n.is_multiple_of(2) && 2 * k == self.n
    }

    /// Writes samples of `t -> p(t + s)` to `out`, where `p` interpolates the
    /// spectrum.
    pub fn shifted_from_spectrum(&self, spec: &[Complex64], s: f64, out: &mut [f64]) {
        let n = self.n;
        let s = s.rem_euclid(1.0);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n {
            let factor = if self.is_nyquist(k) {
                Complex64::new((PI * n as f64 * s).cos(), 0.0)
            } else {
                let phase = 2.0 * PI * self.frequency(k) as f64 * s;
                Complex64::new(phase.cos(), phase.sin())
            };
            buf[k] = spec[k] * factor;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }

    /// Writes samples of `t -> p(t + s)`; grid-aligned shifts are exact rolls.
    pub fn shift_into(&self, values: &[f64], s: f64, out: &mut [f64]) {
        let n = self.n;
        let s = s.rem_euclid(1.0);
        let m = s * n as f64;
        if m == m.round() {
            let m = (m as usize) % n;
            for i in 0..n {
                out[i] = values[(i + m) % n];
            }
            return;
        }
        let spec = self.spectrum(values);
        self.shifted_from_spectrum(&spec, s, out);
    }

    /// Spectral derivative in `t`; the Nyquist mode is dropped.
    pub fn derivative_into(&self, values: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut buf = self.spectrum(values);
        for (k, c) in buf.iter_mut().enumerate() {
            if self.is_nyquist(k) {
                *c = Complex64::new(0.0, 0.0);
            } else {
                let w = 2.0 * PI * self.frequency(k) as f64;
                *c *= Complex64::new(0.0, w);
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }

    /// Evaluates the real trigonometric interpolant at `t`.
    pub fn eval_spectrum(&self, spec: &[Complex64], t: f64) -> f64 {
        let n = self.n;
        let t = t.rem_euclid(1.0);
        let mut acc = spec[0].re;
        let top = (n - 1) / 2;
        for k in 1..=top {
            let phase = 2.0 * PI * k as f64 * t;
            acc += 2.0 * (spec[k].re * phase.cos() - spec[k].im * phase.sin());
        }
        if n.is_multiple_of(2) {
            acc += spec[n / 2].re * (PI * n as f64 * t).cos();
        }
        acc / n as f64
    }
}

/// Value of the shift kernel: `(S_s v)_i = sum_j K(t_i + s - t_j) v_j`.
pub fn shift_kernel(n: usize, tau: f64) -> f64 {
    let mut acc = 1.0;
    let top = (n - 1) / 2;
    for k in 1..=top {
        acc += 2.0 * (2.0 * PI * k as f64 * tau).cos();
    }
    if n.is_multiple_of(2) {
        acc += (PI * n as f64 * tau).cos();
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_matches_fft_shift() {
        for n in [8usize, 9] {
            let plans = FftPlans::new(n);
            let v: Vec<f64> = (0..n).map(|i| ((i * i) % 7) as f64 - 2.5).collect();
            let s = 0.137;
            let mut out = vec![0.0; n];
            plans.shift_into(&v, s, &mut out);
            for i in 0..n {
                let direct: f64 = (0..n)
                    .map(|j| shift_kernel(n, (i as f64 - j as f64) / n as f64 + s) * v[j])
                    .sum();
                assert!((direct - out[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_matches_samples() {
        let n = 10;
        let plans = FftPlans::new(n);
        let v: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 0.1 * i as f64).collect();
        let spec = plans.spectrum(&v);
        for (i, &vi) in v.iter().enumerate() {
            assert!((plans.eval_spectrum(&spec, i as f64 / n as f64) - vi).abs() < 1e-13);
        }
    }
}
