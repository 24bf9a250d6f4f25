//! Rational-quadratic spline normalizing flow over a standard-normal base.
//!
//! A lead time's flow is a chain of [`SPLINES_PER_FLOW`] splines, applied
//! data side first: `z = T_4(T_3(T_2(T_1(x))))`. The predictive density is
//! `φ(z) · dz/dx`, its CDF is `Φ(z)` and its quantile function runs the chain
//! backwards from `Φ⁻¹(τ)`.

mod spline;

pub use spline::{
    cumulative_monotone, gregory_derivatives, make_monotone_params, Spline, BINS, KNOTS, MIN_GAP,
    RAW_PER_SPLINE,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::stats::{normal_cdf, normal_quantile, LN_SQRT_2PI};

pub const SPLINES_PER_FLOW: usize = 4;
/// Free reals describing one lead time's flow.
pub const RAW_PER_LEAD: usize = SPLINES_PER_FLOW * RAW_PER_SPLINE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeadFlow<T = f64> {
    pub splines: [Spline<T>; SPLINES_PER_FLOW],
}

impl<T: Real> LeadFlow<T> {
    /// Builds the chain from 40 raw reals (spline 1 to 4, knots then values).
    /// `anchor` shifts the first spline's knots, i.e. the data axis.
    pub fn from_raw(raw: &[T], anchor: f64) -> Self {
        assert_eq!(raw.len(), RAW_PER_LEAD);
        LeadFlow {
            splines: std::array::from_fn(|l| {
                let shift = if l == 0 { anchor } else { 0.0 };
                Spline::from_raw(&raw[l * RAW_PER_SPLINE..(l + 1) * RAW_PER_SPLINE], shift)
            }),
        }
    }

    /// Returns `(z, ln dz/dx)`.
    pub fn transform_log(&self, x: T) -> (T, T) {
        let mut z = x;
        let mut log_deriv = T::cst(0.0);
        for s in &self.splines {
            let (y, ld) = s.forward_log(z);
            z = y;
            log_deriv = log_deriv + ld;
        }
        (z, log_deriv)
    }
}

impl LeadFlow<f64> {
    pub fn identity() -> Self {
        let k = [0.0, 1.0, 2.0, 3.0, 4.0];
        LeadFlow {
            splines: [Spline::with_gregory(k, k); SPLINES_PER_FLOW],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.splines.iter().try_for_each(Spline::validate)
    }

    pub fn transform(&self, x: f64) -> (f64, f64) {
        self.transform_log(x)
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.splines.iter().rev().fold(z, |y, s| s.inverse(y))
    }

    /// Log-density including the `ln √(2π)` constant.
    pub fn logpdf(&self, x: f64) -> f64 {
        let (z, ld) = self.transform_log(x);
        -0.5 * z * z - LN_SQRT_2PI + ld
    }

    pub fn cdf(&self, x: f64) -> f64 {
        normal_cdf(self.transform_log(x).0)
    }

    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!("quantile level {tau} outside (0, 1)")));
        }
        Ok(self.inverse(normal_quantile(tau)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        self.inverse(z)
    }

    /// Flattened knots then values, spline 1 to 4.
    pub fn to_knots_values(&self) -> Vec<f64> {
        self.splines
            .iter()
            .flat_map(|s| s.knots.iter().chain(s.values.iter()).copied())
            .collect()
    }

    /// Inverse of [`LeadFlow::to_knots_values`], recomputing derivatives.
    pub fn from_knots_values(kv: &[f64]) -> Result<Self> {
        if kv.len() != RAW_PER_LEAD {
            return Err(Error::contract(format!(
                "expected {RAW_PER_LEAD} knot/value reals, got {}",
                kv.len()
            )));
        }
        let flow = LeadFlow {
            splines: std::array::from_fn(|l| {
                let o = l * RAW_PER_SPLINE;
                let knots: [f64; KNOTS] = kv[o..o + KNOTS].try_into().unwrap();
                let values: [f64; KNOTS] = kv[o + KNOTS..o + 2 * KNOTS].try_into().unwrap();
                Spline::with_gregory(knots, values)
            }),
        };
        flow.validate()?;
        Ok(flow)
    }

    /// Knots, values and derivatives, spline 1 to 4; used where the
    /// derivatives were not derived from the knots.
    pub fn to_knots_values_derivs(&self) -> Vec<f64> {
        self.splines
            .iter()
            .flat_map(|s| s.knots.iter().chain(s.values.iter()).chain(s.derivs.iter()).copied())
            .collect()
    }

    pub fn from_knots_values_derivs(kvd: &[f64]) -> Result<Self> {
        const PER: usize = 3 * KNOTS;
        if kvd.len() != SPLINES_PER_FLOW * PER {
            return Err(Error::contract(format!(
                "expected {} knot/value/derivative reals, got {}",
                SPLINES_PER_FLOW * PER,
                kvd.len()
            )));
        }
        let part = |l: usize, k: usize| -> [f64; KNOTS] { kvd[l * PER + k * KNOTS..l * PER + (k + 1) * KNOTS].try_into().unwrap() };
        let flow = LeadFlow {
            splines: std::array::from_fn(|l| Spline {
                knots: part(l, 0),
                values: part(l, 1),
                derivs: part(l, 2),
            }),
        };
        flow.validate()?;
        Ok(flow)
    }

    /// Interior knot derivatives outside the range of their adjacent secant
    /// slopes, summed over the chain.
    pub fn shape_violations(&self) -> usize {
        self.splines.iter().map(Spline::shape_violations).sum()
    }
}

/// One flow per lead time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub leads: Vec<LeadFlow>,
}

impl FlowParams {
    /// Builds flows from `leads × 40` raw reals with per-lead anchors.
    pub fn from_raw(raw: &[f64], anchors: &[f64]) -> Result<Self> {
        if raw.len() != anchors.len() * RAW_PER_LEAD {
            return Err(Error::contract(format!(
                "flow head expects {} raw reals for {} lead times, got {}",
                anchors.len() * RAW_PER_LEAD,
                anchors.len(),
                raw.len()
            )));
        }
        Ok(FlowParams {
            leads: raw
                .chunks_exact(RAW_PER_LEAD)
                .zip(anchors)
                .map(|(r, &a)| LeadFlow::from_raw(r, a))
                .collect(),
        })
    }

    pub fn free_parameter_count(&self) -> usize {
        self.leads.len() * RAW_PER_LEAD
    }

    fn lead(&self, lead: usize) -> Result<&LeadFlow> {
        self.leads.get(lead).ok_or_else(|| {
            Error::contract(format!(
                "lead index {lead} outside 0..{}",
                self.leads.len()
            ))
        })
    }
}

pub fn flow_transform(x: f64, f: &FlowParams, lead: usize) -> Result<(f64, f64)> {
    Ok(f.lead(lead)?.transform(x))
}

pub fn flow_logpdf(x: f64, f: &FlowParams, lead: usize) -> Result<f64> {
    Ok(f.lead(lead)?.logpdf(x))
}

pub fn flow_cdf(x: f64, f: &FlowParams, lead: usize) -> Result<f64> {
    Ok(f.lead(lead)?.cdf(x))
}

pub fn flow_quantile(tau: f64, f: &FlowParams, lead: usize) -> Result<f64> {
    f.lead(lead)?.quantile(tau)
}
