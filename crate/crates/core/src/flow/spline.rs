//! Monotone rational-quadratic splines with linear tails.

use crate::error::{Error, Result};
use crate::real::Real;

pub const KNOTS: usize = 5;
pub const BINS: usize = KNOTS - 1;
/// Free reals per spline: knots then values.
pub const RAW_PER_SPLINE: usize = 2 * KNOTS;
/// Smallest gap between consecutive knots (and between consecutive values).
pub const MIN_GAP: f64 = 1e-3;

/// Cumulative sum of `[raw_0, MIN_GAP + softplus(raw_1), ...]`.
pub fn cumulative_monotone<T: Real>(raw: &[T]) -> [T; KNOTS] {
    assert_eq!(raw.len(), KNOTS);
    let mut out = [raw[0]; KNOTS];
    for i in 1..KNOTS {
        out[i] = out[i - 1] + (raw[i].softplus() + MIN_GAP);
    }
    out
}

/// Splits ten unconstrained reals into strictly increasing knots and values.
pub fn make_monotone_params<T: Real>(raw: &[T]) -> ([T; KNOTS], [T; KNOTS]) {
    assert_eq!(raw.len(), RAW_PER_SPLINE);
    (
        cumulative_monotone(&raw[..KNOTS]),
        cumulative_monotone(&raw[KNOTS..]),
    )
}

/// Knot derivatives computed from the knot/value pairs alone.
///
/// With secants `Δ_j` over bin `j` and centred secants `δ_i` spanning knots
/// `i-1..i+1`, interior knots get `Δ_i Δ_{i-1} / δ_i`, and the edge knots get
/// `Δ_1² / δ_2` and `Δ_4² / δ_4`. Interior values are weighted harmonic means
/// of the neighbouring secants, so they always lie between them.
pub fn gregory_derivatives<T: Real>(knots: &[T; KNOTS], values: &[T; KNOTS]) -> [T; KNOTS] {
    let secant: [T; BINS] =
        std::array::from_fn(|j| (values[j + 1] - values[j]) / (knots[j + 1] - knots[j]));
    let centred = |i: usize| (values[i + 1] - values[i - 1]) / (knots[i + 1] - knots[i - 1]);
    let mut d = [secant[0]; KNOTS];
    d[0] = secant[0] * secant[0] / centred(1);
    for i in 1..KNOTS - 1 {
        d[i] = secant[i] * secant[i - 1] / centred(i);
    }
    d[KNOTS - 1] = secant[BINS - 1] * secant[BINS - 1] / centred(KNOTS - 2);
    d
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spline<T = f64> {
    pub knots: [T; KNOTS],
    pub values: [T; KNOTS],
    pub derivs: [T; KNOTS],
}

enum Segment {
    Left,
    Bin(usize),
    Right,
}

impl<T: Real> Spline<T> {
    pub fn with_gregory(knots: [T; KNOTS], values: [T; KNOTS]) -> Self {
        let derivs = gregory_derivatives(&knots, &values);
        Spline {
            knots,
            values,
            derivs,
        }
    }

    /// Builds a spline from ten raw reals; `knot_shift` is added to every knot.
    pub fn from_raw(raw: &[T], knot_shift: f64) -> Self {
        let (mut knots, values) = make_monotone_params(raw);
        if knot_shift != 0.0 {
            for k in &mut knots {
                *k = *k + knot_shift;
            }
        }
        Spline::with_gregory(knots, values)
    }

    fn segment(&self, x: f64) -> Segment {
        if x < self.knots[0].val() {
            return Segment::Left;
        }
        if x >= self.knots[KNOTS - 1].val() {
            return Segment::Right;
        }
        let mut b = 0;
        while b + 1 < BINS && x >= self.knots[b + 1].val() {
            b += 1;
        }
        Segment::Bin(b)
    }

    /// Returns `(T(x), ln T'(x))`.
    pub fn forward_log(&self, x: T) -> (T, T) {
        match self.segment(x.val()) {
            Segment::Left => {
                let d = self.derivs[0];
                (self.values[0] + d * (x - self.knots[0]), d.ln())
            }
            Segment::Right => {
                let d = self.derivs[KNOTS - 1];
                (
                    self.values[KNOTS - 1] + d * (x - self.knots[KNOTS - 1]),
                    d.ln(),
                )
            }
            Segment::Bin(b) => {
                let width = self.knots[b + 1] - self.knots[b];
                let height = self.values[b + 1] - self.values[b];
                let s = height / width;
                let (d0, d1) = (self.derivs[b], self.derivs[b + 1]);
                let xi = (x - self.knots[b]) / width;
                let om = -xi + 1.0;
                let xo = xi * om;
                let num = height * (s * xi * xi + d0 * xo);
                let den = s + (d1 + d0 - s * 2.0) * xo;
                let y = self.values[b] + num / den;
                let slope_num = s * s * (d1 * xi * xi + s * xo * 2.0 + d0 * om * om);
                (y, slope_num.ln() - den.ln() * 2.0)
            }
        }
    }
}

impl Spline<f64> {
    /// Checks ordering, gap floor and derivative positivity.
    pub fn validate(&self) -> Result<()> {
        for i in 1..KNOTS {
            if !(self.knots[i] - self.knots[i - 1] >= MIN_GAP * (1.0 - 1e-9)) {
                return Err(Error::contract(format!(
                    "knots must increase by at least {MIN_GAP}: {:?}",
                    self.knots
                )));
            }
            if !(self.values[i] - self.values[i - 1] >= MIN_GAP * (1.0 - 1e-9)) {
                return Err(Error::contract(format!(
                    "values must increase by at least {MIN_GAP}: {:?}",
                    self.values
                )));
            }
        }
        if !self.derivs.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(Error::contract(format!(
                "knot derivatives must be finite and positive: {:?}",
                self.derivs
            )));
        }
        Ok(())
    }

    /// Returns `(T(x), T'(x))`.
    pub fn forward(&self, x: f64) -> (f64, f64) {
        let (y, ld) = self.forward_log(x);
        (y, ld.exp())
    }

    pub fn inverse(&self, y: f64) -> f64 {
        let last = KNOTS - 1;
        if y < self.values[0] {
            return self.knots[0] + (y - self.values[0]) / self.derivs[0];
        }
        if y >= self.values[last] {
            return self.knots[last] + (y - self.values[last]) / self.derivs[last];
        }
        let mut b = 0;
        while b + 1 < BINS && y >= self.values[b + 1] {
            b += 1;
        }
        let width = self.knots[b + 1] - self.knots[b];
        let height = self.values[b + 1] - self.values[b];
        let s = height / width;
        let (d0, d1) = (self.derivs[b], self.derivs[b + 1]);
        let dy = y - self.values[b];
        let curv = d1 + d0 - 2.0 * s;
        let a = height * (s - d0) + dy * curv;
        let bq = height * d0 - dy * curv;
        let c = -s * dy;
        let disc = (bq * bq - 4.0 * a * c).max(0.0);
        // Root of a xi^2 + bq xi + c in [0, 1], in the cancellation-free form.
        let xi = (2.0 * c) / (-bq - disc.sqrt());
        let xi = if xi.is_finite() { xi.clamp(0.0, 1.0) } else { 0.0 };
        self.knots[b] + xi * width
    }

    /// Left and right limits of `T'` at knot `i`.
    pub fn knot_derivative_limits(&self, i: usize) -> (f64, f64) {
        assert!(i < KNOTS);
        let bin_end = |b: usize, at_right: bool| {
            let width = self.knots[b + 1] - self.knots[b];
            let s = (self.values[b + 1] - self.values[b]) / width;
            let (d0, d1) = (self.derivs[b], self.derivs[b + 1]);
            let xi: f64 = if at_right { 1.0 } else { 0.0 };
            let xo = xi * (1.0 - xi);
            let den = s + (d1 + d0 - 2.0 * s) * xo;
            s * s * (d1 * xi * xi + 2.0 * s * xo + d0 * (1.0 - xi).powi(2)) / (den * den)
        };
        let left = if i == 0 {
            self.derivs[0]
        } else {
            bin_end(i - 1, true)
        };
        let right = if i == KNOTS - 1 {
            self.derivs[KNOTS - 1]
        } else {
            bin_end(i, false)
        };
        (left, right)
    }

    /// Number of interior knots whose derivative falls outside the range of
    /// the two adjacent secant slopes. Such a derivative forces the density
    /// into a spike or notch at the knot.
    pub fn shape_violations(&self) -> usize {
        (1..KNOTS - 1)
            .filter(|&i| {
                let l = (self.values[i] - self.values[i - 1]) / (self.knots[i] - self.knots[i - 1]);
                let r = (self.values[i + 1] - self.values[i]) / (self.knots[i + 1] - self.knots[i]);
                let (lo, hi) = if l <= r { (l, r) } else { (r, l) };
                let d = self.derivs[i];
                d < lo * (1.0 - 1e-9) || d > hi * (1.0 + 1e-9)
            })
            .count()
    }
}
