//! Scalars for forward-mode differentiation.
//!
//! [`Real`] is implemented by `f64` and by [`Dual<T>`] for any `T: Real`, so
//! nesting `Dual<Dual<f64>>` yields second derivatives.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    /// Underlying real value.
    fn value(self) -> f64;
    /// Whether every component (value and all derivative parts) is finite.
    fn all_finite(self) -> bool;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Power with a constant real exponent; the base must be nonnegative
    /// unless the exponent is an integer.
    fn powc(self, c: f64) -> Self;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn all_finite(self) -> bool {
        self.is_finite()
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powc(self, c: f64) -> Self {
        f64::powf(self, c)
    }
}

/// `re + eps * d` with `d^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    /// A variable with unit derivative.
    pub fn var(re: T) -> Self {
        Self { re, eps: T::cst(1.0) }
    }

    pub fn constant(re: T) -> Self {
        Self { re, eps: T::cst(0.0) }
    }

    fn chain(self, value: T, slope: T) -> Self {
        Self {
            re: value,
            eps: slope * self.eps,
        }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Self::new(q, (self.eps - q * o.eps) / o.re)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<T: Real> Real for Dual<T> {
    fn cst(v: f64) -> Self {
        Self::constant(T::cst(v))
    }
    fn value(self) -> f64 {
        self.re.value()
    }
    fn all_finite(self) -> bool {
        self.re.all_finite() && self.eps.all_finite()
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), T::cst(1.0) / self.re)
    }
    fn tanh(self) -> Self {
        let th = self.re.tanh();
        self.chain(th, T::cst(1.0) - th * th)
    }
    fn abs(self) -> Self {
        if self.re.value() < 0.0 {
            -self
        } else {
            self
        }
    }
    fn powi(self, n: i32) -> Self {
        let slope = if n == 0 {
            T::cst(0.0)
        } else {
            T::cst(n as f64) * self.re.powi(n - 1)
        };
        self.chain(self.re.powi(n), slope)
    }
    fn powc(self, c: f64) -> Self {
        let slope = if c == 0.0 {
            T::cst(0.0)
        } else {
            T::cst(c) * self.re.powc(c - 1.0)
        };
        self.chain(self.re.powc(c), slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_and_second_derivatives() {
        let x = Dual::var(Dual::var(0.7_f64));
        let y = (x * x).sin();
        // d/dx sin(x^2) = 2x cos(x^2); d2 = 2 cos(x^2) - 4x^2 sin(x^2)
        let v: f64 = 0.7;
        assert!((y.re.re - (v * v).sin()).abs() < 1e-15);
        assert!((y.eps.re - 2.0 * v * (v * v).cos()).abs() < 1e-14);
        assert!((y.eps.eps - (2.0 * (v * v).cos() - 4.0 * v * v * (v * v).sin())).abs() < 1e-13);
    }

    #[test]
    fn quotient_and_power_rules() {
        let x = Dual::var(2.0);
        let q = Dual::cst(1.0) / x;
        assert!((q.eps + 0.25).abs() < 1e-15);
        let p = x.powc(1.5);
        assert!((p.eps - 1.5 * 2f64.sqrt()).abs() < 1e-14);
        let c = x.powi(0);
        assert_eq!((c.re, c.eps), (1.0, 0.0));
    }
}
