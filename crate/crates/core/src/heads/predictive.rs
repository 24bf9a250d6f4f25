use super::{BernsteinLead, NormalLead, QuantileLevels};
use crate::data::TruthLaw;
use crate::flow::LeadFlow;
use crate::metrics::{crps_normal, crps_quantile_approx};

/// What the verification code needs from a univariate predictive law.
pub trait Predictive {
    fn cdf(&self, y: f64) -> f64;
    /// Quantile at level `tau` in `(0, 1)`.
    fn quantile(&self, tau: f64) -> f64;
    /// Log-density, where the law has one.
    fn logpdf(&self, _y: f64) -> Option<f64> {
        None
    }
    fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

/// Predictive law of a single (station, issue time, lead time) triple.
// Flows are stored inline; boxing them would cost an allocation per triple.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum LeadDistribution {
    Normal(NormalLead),
    Flow(LeadFlow),
    Bernstein(BernsteinLead),
    Truth(TruthLaw),
}

impl Predictive for LeadDistribution {
    fn cdf(&self, y: f64) -> f64 {
        match self {
            LeadDistribution::Normal(n) => n.cdf(y),
            LeadDistribution::Flow(f) => f.cdf(y),
            LeadDistribution::Bernstein(b) => b.cdf(y),
            LeadDistribution::Truth(t) => t.cdf(y),
        }
    }

    fn quantile(&self, tau: f64) -> f64 {
        match self {
            LeadDistribution::Normal(n) => n.quantile(tau),
            LeadDistribution::Flow(f) => f.inverse(crate::stats::normal_quantile(tau)),
            LeadDistribution::Bernstein(b) => b.quantile(tau),
            LeadDistribution::Truth(t) => t.quantile(tau),
        }
    }

    fn logpdf(&self, y: f64) -> Option<f64> {
        match self {
            LeadDistribution::Normal(n) => Some(n.logpdf(y)),
            LeadDistribution::Flow(f) => Some(f.logpdf(y)),
            LeadDistribution::Bernstein(_) => None,
            LeadDistribution::Truth(t) => Some(t.pdf(y).ln()),
        }
    }

    fn median(&self) -> f64 {
        match self {
            LeadDistribution::Normal(n) => n.mu,
            _ => self.quantile(0.5),
        }
    }
}

impl LeadDistribution {
    /// CRPS: closed form for normal laws, quantile quadrature otherwise.
    pub fn crps(&self, y: f64, levels: &QuantileLevels) -> f64 {
        match self {
            LeadDistribution::Normal(n) => crps_normal(n.mu, n.sigma, y).expect("sigma > 0 by construction"),
            LeadDistribution::Truth(t) if t.as_normal().is_some() => {
                let n = t.as_normal().unwrap();
                crps_normal(n.mu, n.sigma, y).expect("positive scale")
            }
            _ => {
                let q: Vec<f64> = levels.as_slice().iter().map(|&t| self.quantile(t)).collect();
                crps_quantile_approx(&q, y, levels)
            }
        }
    }
}

/// Quantiles per lead time at every level, with a count of crossings
/// (adjacent levels whose quantiles decrease). Crossings are reported as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileMatrix {
    pub values: Vec<Vec<f64>>,
    pub crossings: usize,
}

pub fn head_quantiles(dists: &[LeadDistribution], levels: &QuantileLevels) -> QuantileMatrix {
    let values: Vec<Vec<f64>> = dists
        .iter()
        .map(|d| levels.as_slice().iter().map(|&t| d.quantile(t)).collect())
        .collect();
    let crossings = values
        .iter()
        .map(|row| row.windows(2).filter(|w| w[0] > w[1]).count())
        .sum();
    QuantileMatrix { values, crossings }
}
