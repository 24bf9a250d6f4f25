use crate::real::{sigmoid, softplus};
use crate::stats::{normal_cdf, normal_quantile, LN_SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalLead {
    pub mu: f64,
    pub sigma: f64,
}

impl NormalLead {
    pub fn cdf(&self, y: f64) -> f64 {
        normal_cdf((y - self.mu) / self.sigma)
    }

    pub fn quantile(&self, tau: f64) -> f64 {
        self.mu + self.sigma * normal_quantile(tau)
    }

    pub fn logpdf(&self, y: f64) -> f64 {
        let z = (y - self.mu) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI
    }
}

/// Per-lead normal parameters for a full forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalParams {
    pub leads: Vec<NormalLead>,
}

impl NormalParams {
    pub fn from_raw(raw: &[f64], ens_mean: &[f64], ens_std: &[f64]) -> Self {
        NormalParams {
            leads: raw
                .chunks_exact(2)
                .zip(ens_mean.iter().zip(ens_std))
                .map(|(r, (&m, &s))| normal_head(r, m, s))
                .collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.leads.len()
    }
}

/// `μ = ensemble mean + μ'`, `σ = ensemble spread + softplus(σ')`.
pub fn normal_head(raw: &[f64], ens_mean: f64, ens_std: f64) -> NormalLead {
    NormalLead {
        mu: ens_mean + raw[0],
        sigma: ens_std + softplus(raw[1]),
    }
}

/// Mean negative log-likelihood over the lead times with finite observations.
pub fn normal_nll(params: &NormalParams, obs: &[f64]) -> f64 {
    let (sum, n) = params
        .leads
        .iter()
        .zip(obs)
        .filter(|(_, y)| y.is_finite())
        .fold((0.0, 0usize), |(s, n), (p, &y)| (s - p.logpdf(y), n + 1));
    sum / n as f64
}

pub(super) fn lead_loss(raw: &[f64], ens_mean: f64, ens_std: f64, y: f64, grad: Option<&mut [f64]>) -> f64 {
    let p = normal_head(raw, ens_mean, ens_std);
    let r = y - p.mu;
    let s2 = p.sigma * p.sigma;
    if let Some(g) = grad {
        g[0] += -r / s2;
        g[1] += (1.0 / p.sigma - r * r / (s2 * p.sigma)) * sigmoid(raw[1]);
    }
    p.sigma.ln() + r * r / (2.0 * s2) + LN_SQRT_2PI
}
