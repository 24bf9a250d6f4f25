//! Standard-normal helpers and the chi-square uniformity test.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use libm::erfc;
use statrs::function::erf::erfc_inv;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`] on the open unit interval.
pub fn normal_quantile(p: f64) -> f64 {
    let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    // one Newton step against the libm CDF; erfc_inv alone is good to about 1e-11
    let pdf = normal_pdf(z);
    if pdf > 0.0 {
        z - (normal_cdf(z) - p) / pdf
    } else {
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of `counts` against equal expected frequencies.
pub fn chi_square_uniform(counts: &[u64]) -> ChiSquareTest {
    let total: u64 = counts.iter().sum();
    let k = counts.len();
    let expected = total as f64 / k as f64;
    let statistic = if expected > 0.0 {
        counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum()
    } else {
        0.0
    };
    let dof = k.saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN);
    ChiSquareTest {
        statistic,
        dof,
        p_value,
    }
}
