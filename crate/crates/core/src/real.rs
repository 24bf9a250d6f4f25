//! Scalars that carry forward-mode derivatives.
//!
//! The spline code is written once against [`Real`] and evaluated either on
//! plain `f64` or on [`Dual<N>`], which tracks the gradient with respect to
//! `N` seeded inputs. Heads use this to obtain exact per-spline Jacobians.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + std::fmt::Debug
{
    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    /// `ln(1 + e^x)`, evaluated without overflow.
    fn softplus(self) -> Self;
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn softplus(self) -> Self {
        softplus(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Dual { v, g: [0.0; N] }
    }

    /// Independent variable number `i`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; N];
        g[i] = 1.0;
        Dual { v, g }
    }

    #[inline]
    fn chain(self, v: f64, dv: f64) -> Self {
        let mut g = self.g;
        for gi in &mut g {
            *gi *= dv;
        }
        Dual { v, g }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut g = self.g;
        for (a, b) in g.iter_mut().zip(o.g.iter()) {
            *a += b;
        }
        Dual { v: self.v + o.v, g }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut g = self.g;
        for (a, b) in g.iter_mut().zip(o.g.iter()) {
            *a -= b;
        }
        Dual { v: self.v - o.v, g }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut g = [0.0; N];
        for i in 0..N {
            g[i] = self.g[i] * o.v + o.g[i] * self.v;
        }
        Dual { v: self.v * o.v, g }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        let mut g = [0.0; N];
        for i in 0..N {
            g[i] = (self.g[i] - v * o.g[i]) * inv;
        }
        Dual { v, g }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        Dual {
            v: self.v + o,
            g: self.g,
        }
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        Dual {
            v: self.v - o,
            g: self.g,
        }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        self.chain(self.v * o, o)
    }
}

impl<const N: usize> Real for Dual<N> {
    fn cst(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn softplus(self) -> Self {
        self.chain(softplus(self.v), sigmoid(self.v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_matches_hand_derivatives() {
        // f(a, b) = ln(a * b + 1) / softplus(a - b)
        let a = Dual::<2>::var(0.7, 0);
        let b = Dual::<2>::var(-1.3, 1);
        let f = (a * b + 1.0).ln() / (a - b).softplus();
        let h = 1e-6;
        let fv = |a: f64, b: f64| (a * b + 1.0).ln() / softplus(a - b);
        let da = (fv(0.7 + h, -1.3) - fv(0.7 - h, -1.3)) / (2.0 * h);
        let db = (fv(0.7, -1.3 + h) - fv(0.7, -1.3 - h)) / (2.0 * h);
        assert!((f.v - fv(0.7, -1.3)).abs() < 1e-15);
        assert!((f.g[0] - da).abs() < 1e-8);
        assert!((f.g[1] - db).abs() < 1e-8);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
    }
}
