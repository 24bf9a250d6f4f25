//! Distribution heads: map the network's output vector to one predictive
//! distribution per lead time, and supply the training loss and its gradient.
//!
//! Every head lays its raw outputs out lead by lead: lead `j` owns
//! `raw[j·p .. (j+1)·p]` where `p` is [`HeadKind::params_per_lead`].

mod bernstein;
mod flow_head;
mod normal;
mod predictive;

pub use bernstein::{bernstein_basis, bernstein_quantile, pinball_loss, BernsteinLead, BERNSTEIN_COEFFS};
pub use flow_head::{flow_lead_nll, free_flow_lead, FREE_RAW_PER_LEAD};
pub use normal::{normal_head, normal_nll, NormalLead, NormalParams};
pub use predictive::{head_quantiles, LeadDistribution, Predictive, QuantileMatrix};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{LeadFlow, RAW_PER_LEAD};
use crate::stats::LN_SQRT_2PI;
use crate::LEAD_TIMES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Flow,
    Normal,
    Bernstein,
    /// Spline flow whose knot derivatives are predicted by the network
    /// instead of being derived from knots and values. Comparison baseline
    /// for the Gregory flow only; not offered on the command line.
    FreeDerivativeFlow,
}

impl HeadKind {
    pub fn params_per_lead(self) -> usize {
        match self {
            HeadKind::Flow => RAW_PER_LEAD,
            HeadKind::Normal => 2,
            HeadKind::Bernstein => BERNSTEIN_COEFFS,
            HeadKind::FreeDerivativeFlow => FREE_RAW_PER_LEAD,
        }
    }

    pub fn param_count(self) -> usize {
        LEAD_TIMES * self.params_per_lead()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Flow => "flow",
            HeadKind::Normal => "normal",
            HeadKind::Bernstein => "bernstein",
            HeadKind::FreeDerivativeFlow => "free-derivative-flow",
        }
    }

    /// Whether the training loss is a negative log-likelihood.
    pub fn is_likelihood(self) -> bool {
        !matches!(self, HeadKind::Bernstein)
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flow" => Ok(HeadKind::Flow),
            "normal" => Ok(HeadKind::Normal),
            "bernstein" => Ok(HeadKind::Bernstein),
            "free-derivative-flow" => Ok(HeadKind::FreeDerivativeFlow),
            other => Err(Error::config(format!(
                "unknown head '{other}' (expected flow, normal or bernstein)"
            ))),
        }
    }
}

/// Equidistant interior quantile levels `i / (n + 1)`, `i = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileLevels {
    levels: Vec<f64>,
}

impl QuantileLevels {
    pub const DEFAULT_COUNT: usize = 100;

    pub fn equidistant(n: usize) -> Self {
        QuantileLevels {
            levels: (1..=n).map(|i| i as f64 / (n + 1) as f64).collect(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

impl Default for QuantileLevels {
    fn default() -> Self {
        QuantileLevels::equidistant(Self::DEFAULT_COUNT)
    }
}

/// Loss summed over the scored lead times of one sample, and how many
/// lead times were scored (missing observations are skipped).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerm {
    pub sum: f64,
    pub count: usize,
}

impl std::ops::AddAssign for LossTerm {
    fn add_assign(&mut self, o: Self) {
        self.sum += o.sum;
        self.count += o.count;
    }
}

impl LossTerm {
    pub fn mean(self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }
}

/// A head bound to its per-lead anchors (ensemble mean and spread).
#[derive(Debug, Clone)]
pub struct Head {
    kind: HeadKind,
    levels: QuantileLevels,
    basis: Vec<[f64; BERNSTEIN_COEFFS]>,
}

impl Head {
    pub fn new(kind: HeadKind) -> Self {
        let levels = QuantileLevels::default();
        let basis = levels.as_slice().iter().map(|&t| bernstein_basis(t)).collect();
        Head {
            kind,
            levels,
            basis,
        }
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn levels(&self) -> &QuantileLevels {
        &self.levels
    }

    pub fn output_dim(&self) -> usize {
        self.kind.param_count()
    }

    fn check(&self, raw: &[f64], ens_mean: &[f64], ens_std: &[f64], obs: Option<&[f64]>) -> Result<()> {
        let p = self.kind.params_per_lead();
        let leads = ens_mean.len();
        if raw.len() != leads * p || ens_std.len() != leads || obs.is_some_and(|o| o.len() != leads) {
            return Err(Error::contract(format!(
                "{} head: raw {} / ens_mean {} / ens_std {} / obs {:?} are inconsistent",
                self.kind,
                raw.len(),
                ens_mean.len(),
                ens_std.len(),
                obs.map(<[f64]>::len)
            )));
        }
        Ok(())
    }

    /// Training loss of one sample. When `grad` is given, the derivative of
    /// `sum` with respect to `raw` is added into it.
    pub fn loss(
        &self,
        raw: &[f64],
        ens_mean: &[f64],
        ens_std: &[f64],
        obs: &[f64],
        mut grad: Option<&mut [f64]>,
    ) -> Result<LossTerm> {
        self.check(raw, ens_mean, ens_std, Some(obs))?;
        let p = self.kind.params_per_lead();
        let mut term = LossTerm::default();
        for (j, &y) in obs.iter().enumerate() {
            if !y.is_finite() {
                continue;
            }
            let r = &raw[j * p..(j + 1) * p];
            let g = grad.as_deref_mut().map(|g| &mut g[j * p..(j + 1) * p]);
            let value = match self.kind {
                HeadKind::Normal => normal::lead_loss(r, ens_mean[j], ens_std[j], y, g),
                HeadKind::Bernstein => bernstein::lead_loss(r, ens_mean[j], y, &self.levels, &self.basis, g),
                HeadKind::Flow => flow_head::flow_lead_nll(r, ens_mean[j], y, g),
                HeadKind::FreeDerivativeFlow => flow_head::free_flow_lead_nll(r, ens_mean[j], y, g),
            };
            term.sum += value;
            term.count += 1;
        }
        Ok(term)
    }

    /// Loss of each lead time of one sample; `None` where the observation
    /// is missing.
    pub fn lead_losses(&self, raw: &[f64], ens_mean: &[f64], ens_std: &[f64], obs: &[f64]) -> Result<Vec<Option<f64>>> {
        self.check(raw, ens_mean, ens_std, Some(obs))?;
        let p = self.kind.params_per_lead();
        Ok(obs
            .iter()
            .enumerate()
            .map(|(j, &y)| {
                y.is_finite().then(|| {
                    let r = &raw[j * p..(j + 1) * p];
                    match self.kind {
                        HeadKind::Normal => normal::lead_loss(r, ens_mean[j], ens_std[j], y, None),
                        HeadKind::Bernstein => bernstein::lead_loss(r, ens_mean[j], y, &self.levels, &self.basis, None),
                        HeadKind::Flow => flow_head::flow_lead_nll(r, ens_mean[j], y, None),
                        HeadKind::FreeDerivativeFlow => flow_head::free_flow_lead_nll(r, ens_mean[j], y, None),
                    }
                })
            })
            .collect())
    }

    /// Per-lead predictive distributions for one sample.
    pub fn distributions(&self, raw: &[f64], ens_mean: &[f64], ens_std: &[f64]) -> Result<Vec<LeadDistribution>> {
        self.check(raw, ens_mean, ens_std, None)?;
        let p = self.kind.params_per_lead();
        Ok((0..ens_mean.len())
            .map(|j| {
                let r = &raw[j * p..(j + 1) * p];
                match self.kind {
                    HeadKind::Normal => {
                        let n = normal_head(r, ens_mean[j], ens_std[j]);
                        LeadDistribution::Normal(n)
                    }
                    HeadKind::Bernstein => {
                        LeadDistribution::Bernstein(BernsteinLead::anchored(r, ens_mean[j]))
                    }
                    HeadKind::Flow => LeadDistribution::Flow(LeadFlow::from_raw(r, ens_mean[j])),
                    HeadKind::FreeDerivativeFlow => LeadDistribution::Flow(free_flow_lead(r, ens_mean[j])),
                }
            })
            .collect())
    }
}

/// Mean over lead times of the flow loss `z²/2 − ln dz/dx`, constant dropped.
pub fn flow_nll(raw: &[f64], ens_mean: &[f64], obs: &[f64]) -> Result<f64> {
    let zeros = vec![0.0; ens_mean.len()];
    Ok(Head::new(HeadKind::Flow).loss(raw, ens_mean, &zeros, obs, None)?.mean())
}

/// Converts the flow loss to a full negative log-density.
pub fn flow_loss_to_nll(loss: f64) -> f64 {
    loss + LN_SQRT_2PI
}
