//! Forecast verification scores and reports.

mod importance;
mod report;
mod tables;

pub use importance::{permutation_importance, ImportanceMatrix, ImportanceOptions, IMPORTANCE_GROUPS};
pub use report::{
    altitude_band_report, evaluate, median_filter, per_station_ranking, score_predictions, AltitudeBand, BandQss,
    BandReport, Evaluation, ModelScores, ScoreConfig, StationRanking, StationScore, VerificationReport,
};
pub use tables::{write_evaluation, write_importance};

use crate::error::{Error, Result};
use crate::heads::{pinball_loss, Predictive, QuantileLevels};
use crate::stats::{normal_cdf, normal_pdf};

/// Closed-form CRPS of `N(μ, σ²)` at `y`.
pub fn crps_normal(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::contract(format!("CRPS needs sigma > 0, got {sigma}")));
    }
    let z = (y - mu) / sigma;
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    Ok(sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - inv_sqrt_pi))
}

/// CRPS from quantiles at `levels`: `2 Σ_i pinball(q_i, y, τ_i) / (n + 1)`.
///
/// With levels `i/(n+1)` this is the trapezoid rule for `2∫ pinball_τ dτ`.
pub fn crps_quantile_approx(quantiles: &[f64], y: f64, levels: &QuantileLevels) -> f64 {
    assert_eq!(quantiles.len(), levels.len(), "one quantile per level");
    let total: f64 = quantiles
        .iter()
        .zip(levels.as_slice())
        .map(|(&q, &t)| pinball_loss(q, y, t))
        .sum();
    2.0 * total / (levels.len() + 1) as f64
}

/// Mean pinball loss over the levels.
pub fn quantile_loss(quantiles: &[f64], y: f64, levels: &QuantileLevels) -> f64 {
    assert_eq!(quantiles.len(), levels.len(), "one quantile per level");
    quantiles
        .iter()
        .zip(levels.as_slice())
        .map(|(&q, &t)| pinball_loss(q, y, t))
        .sum::<f64>()
        / levels.len() as f64
}

/// Predictive median minus observation.
pub fn bias<P: Predictive + ?Sized>(predictive: &P, y: f64) -> f64 {
    predictive.median() - y
}

/// Quantile skill score `1 − QL / QL_ref`.
pub fn qss(ql_model: f64, ql_reference: f64) -> Result<f64> {
    if !(ql_reference > 0.0) {
        return Err(Error::contract(format!("QSS reference loss must be positive, got {ql_reference}")));
    }
    Ok(1.0 - ql_model / ql_reference)
}

/// Bin of a PIT value; `u = 1` lands in the last bin.
pub fn pit_bin(u: f64, bins: usize) -> usize {
    ((u.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

/// Histogram of PIT values `F(y)` over `bins` equal-width bins.
pub fn pit_histogram<I: IntoIterator<Item = f64>>(pit_values: I, bins: usize) -> Result<Vec<u64>> {
    if bins < 2 {
        return Err(Error::contract(format!("PIT histogram needs at least 2 bins, got {bins}")));
    }
    let mut counts = vec![0u64; bins];
    for u in pit_values {
        counts[pit_bin(u, bins)] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::NormalLead;

    #[test]
    fn crps_standard_normal_at_zero() {
        // (2φ(0) − 1/√π) = (√2 − 1)/√π
        let expected = (2f64.sqrt() - 1.0) / std::f64::consts::PI.sqrt();
        assert!((crps_normal(0.0, 1.0, 0.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.233_695).abs() < 1e-6);
    }

    #[test]
    fn crps_translation_and_degenerate_limit() {
        let a = crps_normal(0.3, 1.7, -0.4).unwrap();
        let b = crps_normal(10.3, 1.7, 9.6).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((crps_normal(1.0, 1e-9, 3.5).unwrap() - 2.5).abs() < 1e-8);
        assert!(matches!(crps_normal(0.0, 0.0, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn quantile_crps_edge_cases() {
        let levels = QuantileLevels::default();
        assert_eq!(crps_quantile_approx(&[2.0; 100], 2.0, &levels), 0.0);
        // far below: linear in −y with slope 2 Σ (1−τ) / 101 = 100/101
        let q: Vec<f64> = levels.as_slice().to_vec();
        let a = crps_quantile_approx(&q, -100.0, &levels);
        let b = crps_quantile_approx(&q, -101.0, &levels);
        assert!((b - a - 100.0 / 101.0).abs() < 1e-10);
    }

    #[test]
    fn bias_and_qss() {
        let n = NormalLead { mu: 1.5, sigma: 2.0 };
        assert_eq!(bias(&crate::heads::LeadDistribution::Normal(n), 1.0), 0.5);
        assert_eq!(qss(0.4, 0.4).unwrap(), 0.0);
        assert!((qss(0.36, 0.40).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(qss(0.0, 0.4).unwrap(), 1.0);
        assert!(matches!(qss(0.1, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn pit_binning() {
        assert_eq!(pit_bin(0.42, 10), 4);
        assert_eq!(pit_bin(1.0, 10), 9);
        assert_eq!(pit_bin(0.0, 10), 0);
        let h = pit_histogram([0.05, 0.95, 1.0, 0.5], 2).unwrap();
        assert_eq!(h, vec![1, 3]);
        assert!(pit_histogram([0.5], 1).is_err());
    }
}
