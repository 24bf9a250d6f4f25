//! Observation-noise laws used by the synthetic generator.
//!
//! Given the noiseless truth at a triple, the observation follows one of
//! these laws. All of them have zero-mean noise, so the truth is also the
//! conditional mean of the observation.

use serde::{Deserialize, Serialize};

use crate::heads::NormalLead;
use crate::stats::{normal_cdf, normal_pdf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthMode {
    Gaussian,
    /// Two-piece normal with a wider right half.
    Skewed,
    /// Two equal-width normals; the weight of the upper one follows the season.
    Bimodal,
}

impl std::str::FromStr for TruthMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "gaussian" => Ok(TruthMode::Gaussian),
            "skewed" => Ok(TruthMode::Skewed),
            "bimodal" => Ok(TruthMode::Bimodal),
            other => Err(crate::Error::config(format!("unknown truth law '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthConfig {
    pub mode: TruthMode,
    /// Noise scale at lead 0, °C.
    pub noise_scale: f64,
    /// Relative scale increase from the first to the last lead time.
    pub lead_growth: f64,
    /// Right-to-left scale ratio of the skewed law.
    pub skew_ratio: f64,
    /// Distance of each bimodal component from the midpoint, in component scales.
    pub half_separation: f64,
    /// Seasonal swing of the upper component's weight around 0.5.
    pub weight_amplitude: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig {
            mode: TruthMode::Gaussian,
            noise_scale: 1.0,
            lead_growth: 0.5,
            skew_ratio: 2.5,
            half_separation: 2.5,
            weight_amplitude: 0.3,
        }
    }
}

impl TruthConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.noise_scale > 0.0
            && self.lead_growth >= 0.0
            && self.skew_ratio > 0.0
            && self.half_separation >= 0.0
            && (0.0..0.5).contains(&self.weight_amplitude);
        if ok {
            Ok(())
        } else {
            Err(crate::Error::config(format!("invalid truth law settings: {self:?}")))
        }
    }

    pub fn scale_at(&self, lead: usize, leads: usize) -> f64 {
        let frac = if leads > 1 {
            lead as f64 / (leads - 1) as f64
        } else {
            0.0
        };
        self.noise_scale * (1.0 + self.lead_growth * frac)
    }

    pub fn upper_weight(&self, seasonal: f64) -> f64 {
        0.5 + self.weight_amplitude * seasonal
    }

    /// Law of the observation at one triple.
    pub fn law(&self, center: f64, lead: usize, leads: usize, seasonal: f64) -> TruthLaw {
        let s = self.scale_at(lead, leads);
        match self.mode {
            TruthMode::Gaussian => TruthLaw::Normal { mu: center, sigma: s },
            TruthMode::Skewed => {
                let (left, right) = (s, s * self.skew_ratio);
                let mean_shift = (2.0 / std::f64::consts::PI).sqrt() * (right - left);
                TruthLaw::SplitNormal {
                    mode: center - mean_shift,
                    left,
                    right,
                }
            }
            TruthMode::Bimodal => {
                let w = self.upper_weight(seasonal);
                let gap = 2.0 * self.half_separation * s;
                TruthLaw::Mixture {
                    lower: center - gap * w,
                    upper: center + gap * (1.0 - w),
                    sd: s,
                    upper_weight: w,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum TruthLaw {
    Normal { mu: f64, sigma: f64 },
    SplitNormal { mode: f64, left: f64, right: f64 },
    Mixture { lower: f64, upper: f64, sd: f64, upper_weight: f64 },
}

impl TruthLaw {
    pub fn pdf(&self, y: f64) -> f64 {
        match *self {
            TruthLaw::Normal { mu, sigma } => normal_pdf((y - mu) / sigma) / sigma,
            TruthLaw::SplitNormal { mode, left, right } => {
                let s = if y < mode { left } else { right };
                2.0 / (left + right) * normal_pdf((y - mode) / s)
            }
            TruthLaw::Mixture {
                lower,
                upper,
                sd,
                upper_weight: w,
            } => (w * normal_pdf((y - upper) / sd) + (1.0 - w) * normal_pdf((y - lower) / sd)) / sd,
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match *self {
            TruthLaw::Normal { mu, sigma } => normal_cdf((y - mu) / sigma),
            TruthLaw::SplitNormal { mode, left, right } => {
                let total = left + right;
                if y < mode {
                    2.0 * left / total * normal_cdf((y - mode) / left)
                } else {
                    left / total + 2.0 * right / total * (normal_cdf((y - mode) / right) - 0.5)
                }
            }
            TruthLaw::Mixture {
                lower,
                upper,
                sd,
                upper_weight: w,
            } => w * normal_cdf((y - upper) / sd) + (1.0 - w) * normal_cdf((y - lower) / sd),
        }
    }

    pub fn quantile(&self, tau: f64) -> f64 {
        match *self {
            TruthLaw::Normal { mu, sigma } => mu + sigma * normal_quantile(tau),
            TruthLaw::SplitNormal { mode, left, right } => {
                let split = left / (left + right);
                if tau < split {
                    mode + left * normal_quantile(tau * (left + right) / (2.0 * left))
                } else {
                    mode + right * normal_quantile(0.5 + (tau - split) * (left + right) / (2.0 * right))
                }
            }
            TruthLaw::Mixture { lower, upper, sd, .. } => {
                let (mut lo, mut hi) = (lower + sd * normal_quantile(tau), upper + sd * normal_quantile(tau));
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < tau {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-13 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        match *self {
            TruthLaw::Normal { mu, sigma } => mu + sigma * z,
            TruthLaw::SplitNormal { mode, left, right } => {
                let u: f64 = rng.random();
                if u < left / (left + right) {
                    mode - left * z.abs()
                } else {
                    mode + right * z.abs()
                }
            }
            TruthLaw::Mixture {
                lower,
                upper,
                sd,
                upper_weight,
            } => {
                let u: f64 = rng.random();
                if u < upper_weight {
                    upper + sd * z
                } else {
                    lower + sd * z
                }
            }
        }
    }

    pub fn as_normal(&self) -> Option<NormalLead> {
        match *self {
            TruthLaw::Normal { mu, sigma } => Some(NormalLead { mu, sigma }),
            _ => None,
        }
    }
}
