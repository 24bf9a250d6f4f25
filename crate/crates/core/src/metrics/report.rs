use rayon::prelude::*;

use super::{crps_normal, crps_quantile_approx, pit_bin, qss};
use crate::data::{ForecastDataset, StationMeta};
use crate::error::{Error, Result};
use crate::heads::{pinball_loss, LeadDistribution, NormalLead, Predictive, QuantileLevels};
use crate::predict::PredictionSet;
use crate::stats::{chi_square_uniform, ChiSquareTest};
use crate::LEAD_TIMES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreConfig {
    pub pit_bins: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { pit_bins: 20 }
    }
}

/// Score sums of one station. Sums (not means) so that stations merge by
/// addition.
#[derive(Debug, Clone, PartialEq)]
pub struct StationScore {
    pub crps_sum: [f64; LEAD_TIMES],
    pub bias_sum: [f64; LEAD_TIMES],
    pub count: [usize; LEAD_TIMES],
    /// Pinball loss summed per level over all scored triples.
    pub ql_sum: Vec<f64>,
    pub pit: Vec<u64>,
    pub crossings: usize,
    pub missing: usize,
}

impl StationScore {
    fn empty(levels: usize, bins: usize) -> Self {
        StationScore {
            crps_sum: [0.0; LEAD_TIMES],
            bias_sum: [0.0; LEAD_TIMES],
            count: [0; LEAD_TIMES],
            ql_sum: vec![0.0; levels],
            pit: vec![0; bins],
            crossings: 0,
            missing: 0,
        }
    }

    pub fn scored(&self) -> usize {
        self.count.iter().sum()
    }

    pub fn mean_crps(&self) -> f64 {
        self.crps_sum.iter().sum::<f64>() / self.scored() as f64
    }
}

/// All per-station scores of one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScores {
    pub name: String,
    pub levels: QuantileLevels,
    pub stations: Vec<StationScore>,
}

fn triple_crps(d: &LeadDistribution, q: &[f64], y: f64, levels: &QuantileLevels) -> f64 {
    let normal = match d {
        LeadDistribution::Normal(n) => Some(*n),
        LeadDistribution::Truth(t) => t.as_normal(),
        _ => None,
    };
    match normal {
        Some(NormalLead { mu, sigma }) => crps_normal(mu, sigma, y).unwrap_or(f64::NAN),
        None => crps_quantile_approx(q, y, levels),
    }
}

/// Scores `pred` against the observations of `ds`. Rows are grouped by
/// station; each station is scored independently.
pub fn score_predictions(
    name: &str,
    pred: &PredictionSet,
    ds: &ForecastDataset,
    cfg: ScoreConfig,
) -> Result<ModelScores> {
    if cfg.pit_bins < 2 {
        return Err(Error::contract(format!("PIT histogram needs at least 2 bins, got {}", cfg.pit_bins)));
    }
    let s = ds.num_stations();
    let mut rows_by_station: Vec<Vec<usize>> = vec![Vec::new(); s];
    for (row, k) in pred.keys.iter().enumerate() {
        if k.station >= s || k.issue >= ds.num_issue_times() {
            return Err(Error::contract(format!(
                "prediction for station {} issue {} is outside the dataset ({s} stations, {} issue times)",
                k.station,
                k.issue,
                ds.num_issue_times()
            )));
        }
        rows_by_station[k.station].push(row);
    }
    let levels = &pred.levels;
    let stations = rows_by_station
        .par_iter()
        .map(|rows| {
            let mut sc = StationScore::empty(levels.len(), cfg.pit_bins);
            for &row in rows {
                let k = pred.keys[row];
                let obs = ds.observations_at(k.station, k.issue);
                for (j, d) in pred.dists[row].iter().enumerate() {
                    let q = pred.quantiles_at(row, j);
                    sc.crossings += q.windows(2).filter(|w| w[0] > w[1]).count();
                    let y = obs[j] as f64;
                    if !y.is_finite() {
                        sc.missing += 1;
                        continue;
                    }
                    sc.crps_sum[j] += triple_crps(d, q, y, levels);
                    sc.bias_sum[j] += super::bias(d, y);
                    sc.count[j] += 1;
                    for ((acc, &qt), &t) in sc.ql_sum.iter_mut().zip(q).zip(levels.as_slice()) {
                        *acc += pinball_loss(qt, y, t);
                    }
                    sc.pit[pit_bin(d.cdf(y), cfg.pit_bins)] += 1;
                }
            }
            sc
        })
        .collect();
    Ok(ModelScores {
        name: name.to_string(),
        levels: levels.clone(),
        stations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AltitudeBand {
    /// (−5, 800] m
    Low,
    /// (800, 2000] m
    Mid,
    /// (2000, 3600) m
    High,
}

impl AltitudeBand {
    pub const ALL: [AltitudeBand; 3] = [AltitudeBand::Low, AltitudeBand::Mid, AltitudeBand::High];

    pub fn of(altitude: f64) -> Option<Self> {
        if altitude > -5.0 && altitude <= 800.0 {
            Some(AltitudeBand::Low)
        } else if altitude > 800.0 && altitude <= 2000.0 {
            Some(AltitudeBand::Mid)
        } else if altitude > 2000.0 && altitude < 3600.0 {
            Some(AltitudeBand::High)
        } else {
            None
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AltitudeBand::Low => "(-5,800]",
            AltitudeBand::Mid => "(800,2000]",
            AltitudeBand::High => "(2000,3600)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandQss {
    pub band: AltitudeBand,
    pub stations: usize,
    pub ql_model: Vec<f64>,
    pub ql_reference: Vec<f64>,
    pub qss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    pub bands: Vec<BandQss>,
    /// Bands without any scored station.
    pub omitted: Vec<AltitudeBand>,
}

/// Per-level QSS of `model` against `reference` within each altitude band.
pub fn altitude_band_report(model: &ModelScores, reference: &ModelScores, meta: &[StationMeta]) -> Result<BandReport> {
    if model.stations.len() != meta.len() || reference.stations.len() != meta.len() {
        return Err(Error::contract(format!(
            "band report over {} stations with scores for {} and {}",
            meta.len(),
            model.stations.len(),
            reference.stations.len()
        )));
    }
    if model.levels != reference.levels {
        return Err(Error::contract("model and reference use different quantile levels"));
    }
    let nl = model.levels.len();
    let mut bands = Vec::new();
    let mut omitted = Vec::new();
    for band in AltitudeBand::ALL {
        let members: Vec<usize> = (0..meta.len())
            .filter(|&s| AltitudeBand::of(meta[s].station_altitude) == Some(band) && model.stations[s].scored() > 0)
            .collect();
        if members.is_empty() {
            log::info!("altitude band {} has no scored stations; omitted", band.label());
            omitted.push(band);
            continue;
        }
        let mut ql_m = vec![0.0; nl];
        let mut ql_r = vec![0.0; nl];
        let (mut n_m, mut n_r) = (0usize, 0usize);
        for &s in &members {
            let (a, b) = (&model.stations[s], &reference.stations[s]);
            n_m += a.scored();
            n_r += b.scored();
            for i in 0..nl {
                ql_m[i] += a.ql_sum[i];
                ql_r[i] += b.ql_sum[i];
            }
        }
        ql_m.iter_mut().for_each(|v| *v /= n_m as f64);
        ql_r.iter_mut().for_each(|v| *v /= n_r as f64);
        let qss = ql_m.iter().zip(&ql_r).map(|(&m, &r)| qss(m, r)).collect::<Result<Vec<_>>>()?;
        bands.push(BandQss {
            band,
            stations: members.len(),
            ql_model: ql_m,
            ql_reference: ql_r,
            qss,
        });
    }
    Ok(BandReport { bands, omitted })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationRanking {
    pub models: Vec<String>,
    pub wins: Vec<usize>,
    /// Stations where more than one model attains the minimal mean CRPS.
    pub ties: usize,
    /// Winning model index per station; `None` for unscored stations.
    pub winner: Vec<Option<usize>>,
    /// Mean CRPS per station (rows) and model (columns).
    pub station_crps: Vec<Vec<f64>>,
}

/// Counts per-station wins by mean CRPS. Ties go to the model listed first.
pub fn per_station_ranking(models: &[&ModelScores]) -> Result<StationRanking> {
    let first = models.first().ok_or_else(|| Error::contract("ranking needs at least one model"))?;
    let s = first.stations.len();
    for m in models {
        let same = m.stations.len() == s
            && m.stations.iter().zip(&first.stations).all(|(a, b)| a.count == b.count);
        if !same {
            return Err(Error::contract(format!(
                "'{}' and '{}' do not cover the same stations and scored triples",
                m.name, first.name
            )));
        }
    }
    let mut wins = vec![0; models.len()];
    let mut ties = 0;
    let mut winner = Vec::with_capacity(s);
    let mut station_crps = Vec::with_capacity(s);
    for st in 0..s {
        let crps: Vec<f64> = models.iter().map(|m| m.stations[st].mean_crps()).collect();
        if first.stations[st].scored() == 0 {
            winner.push(None);
        } else {
            let best = crps.iter().copied().fold(f64::INFINITY, f64::min);
            let idx = crps.iter().position(|&c| c == best).unwrap_or(0);
            if crps.iter().filter(|&&c| c == best).count() > 1 {
                ties += 1;
            }
            wins[idx] += 1;
            winner.push(Some(idx));
        }
        station_crps.push(crps);
    }
    Ok(StationRanking {
        models: models.iter().map(|m| m.name.clone()).collect(),
        wins,
        ties,
        winner,
        station_crps,
    })
}

/// Running median with an odd `kernel`, truncated at the ends.
pub fn median_filter(values: &[f64], kernel: usize) -> Vec<f64> {
    let half = kernel / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            let mut w: Vec<f64> = values[lo..hi].iter().copied().filter(|v| !v.is_nan()).collect();
            if w.is_empty() {
                return f64::NAN;
            }
            w.sort_by(f64::total_cmp);
            let m = w.len();
            if m % 2 == 1 {
                w[m / 2]
            } else {
                0.5 * (w[m / 2 - 1] + w[m / 2])
            }
        })
        .collect()
}

/// Aggregated verification of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub model: String,
    pub reference: String,
    pub levels: Vec<f64>,
    pub crps_by_lead: Vec<f64>,
    pub bias_by_lead: Vec<f64>,
    pub ql_by_level: Vec<f64>,
    /// Mean of `crps_by_lead`.
    pub crps: f64,
    /// Mean of `bias_by_lead`.
    pub bias: f64,
    /// Mean of `ql_by_level`.
    pub ql: f64,
    pub qss_by_level: Vec<f64>,
    pub qss: f64,
    pub pit_counts: Vec<u64>,
    pub pit_test: ChiSquareTest,
    pub station_crps: Vec<f64>,
    pub missing_by_station: Vec<usize>,
    pub crossings: usize,
    pub scored: usize,
    pub bands: BandReport,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-level QL, merged over stations in index order.
fn ql_by_level(scores: &ModelScores) -> Vec<f64> {
    let n: usize = scores.stations.iter().map(StationScore::scored).sum();
    let mut ql = vec![0.0; scores.levels.len()];
    for st in &scores.stations {
        for (a, b) in ql.iter_mut().zip(&st.ql_sum) {
            *a += b;
        }
    }
    ql.iter().map(|v| v / n as f64).collect()
}

impl VerificationReport {
    pub fn assemble(scores: &ModelScores, reference: &ModelScores, meta: &[StationMeta]) -> Result<Self> {
        let mut crps = [0.0; LEAD_TIMES];
        let mut bias = [0.0; LEAD_TIMES];
        let mut count = [0usize; LEAD_TIMES];
        let bins = scores.stations.first().map_or(0, |s| s.pit.len());
        let mut pit = vec![0u64; bins];
        let mut crossings = 0;
        for st in &scores.stations {
            for j in 0..LEAD_TIMES {
                crps[j] += st.crps_sum[j];
                bias[j] += st.bias_sum[j];
                count[j] += st.count[j];
            }
            for (a, b) in pit.iter_mut().zip(&st.pit) {
                *a += b;
            }
            crossings += st.crossings;
        }
        let scored: usize = count.iter().sum();
        if scored == 0 {
            return Err(Error::contract(format!("'{}' has no scored triples", scores.name)));
        }
        let crps_by_lead: Vec<f64> = (0..LEAD_TIMES).map(|j| crps[j] / count[j] as f64).collect();
        let bias_by_lead: Vec<f64> = (0..LEAD_TIMES).map(|j| bias[j] / count[j] as f64).collect();
        let ql = ql_by_level(scores);
        let ql_ref = ql_by_level(reference);
        let qss_by_level = ql.iter().zip(&ql_ref).map(|(&m, &r)| qss(m, r)).collect::<Result<Vec<_>>>()?;
        let ql_mean = mean(&ql);
        Ok(VerificationReport {
            model: scores.name.clone(),
            reference: reference.name.clone(),
            levels: scores.levels.as_slice().to_vec(),
            crps: mean(&crps_by_lead),
            bias: mean(&bias_by_lead),
            ql: ql_mean,
            qss: qss(ql_mean, mean(&ql_ref))?,
            crps_by_lead,
            bias_by_lead,
            ql_by_level: ql,
            qss_by_level,
            pit_test: chi_square_uniform(&pit),
            pit_counts: pit,
            station_crps: scores.stations.iter().map(StationScore::mean_crps).collect(),
            missing_by_station: scores.stations.iter().map(|s| s.missing).collect(),
            crossings,
            scored,
            bands: altitude_band_report(scores, reference, meta)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub reports: Vec<VerificationReport>,
    pub ranking: StationRanking,
}

/// Scores every prediction set and compares them. QSS uses `reference` when
/// given, otherwise the first model.
pub fn evaluate(
    models: &[(&str, &PredictionSet)],
    reference: Option<(&str, &PredictionSet)>,
    ds: &ForecastDataset,
    cfg: ScoreConfig,
) -> Result<Evaluation> {
    if models.is_empty() {
        return Err(Error::contract("evaluation needs at least one prediction set"));
    }
    let first_keys = &models[0].1.keys;
    for (name, p) in models.iter().chain(reference.iter()) {
        if &p.keys != first_keys {
            return Err(Error::contract(format!(
                "prediction set '{name}' covers different (station, issue) samples than '{}'",
                models[0].0
            )));
        }
    }
    let scores = models
        .iter()
        .map(|(n, p)| score_predictions(n, p, ds, cfg))
        .collect::<Result<Vec<_>>>()?;
    let ref_scores = match reference {
        Some((n, p)) => score_predictions(n, p, ds, cfg)?,
        None => scores[0].clone(),
    };
    let reports = scores
        .iter()
        .map(|s| VerificationReport::assemble(s, &ref_scores, &ds.stations))
        .collect::<Result<Vec<_>>>()?;
    let ranking = per_station_ranking(&scores.iter().collect::<Vec<_>>())?;
    Ok(Evaluation { reports, ranking })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{all_samples, generate_synthetic, GeneratorConfig};

    fn fixture() -> (ForecastDataset, PredictionSet) {
        let cfg = GeneratorConfig {
            stations: 4,
            issue_times_per_year: 20,
            years: vec![2016],
            ..GeneratorConfig::default()
        };
        let ds = generate_synthetic(&cfg, 11).unwrap().test;
        let p = PredictionSet::truth(&ds, &all_samples(&ds)).unwrap();
        (ds, p)
    }

    #[test]
    fn band_edges() {
        assert_eq!(AltitudeBand::of(800.0), Some(AltitudeBand::Low));
        assert_eq!(AltitudeBand::of(800.1), Some(AltitudeBand::Mid));
        assert_eq!(AltitudeBand::of(2000.0), Some(AltitudeBand::Mid));
        assert_eq!(AltitudeBand::of(3600.0), None);
        assert_eq!(AltitudeBand::of(-5.0), None);
    }

    #[test]
    fn self_reference_and_aggregates() {
        let (ds, p) = fixture();
        let ev = evaluate(&[("truth", &p), ("again", &p)], None, &ds, ScoreConfig::default()).unwrap();
        let r = &ev.reports[0];
        assert!(r.qss_by_level.iter().all(|&q| q == 0.0));
        assert_eq!(r.qss, 0.0);
        assert_eq!(r.pit_counts.iter().sum::<u64>() as usize, r.scored);
        assert!((r.crps - r.crps_by_lead.iter().sum::<f64>() / 21.0).abs() < 1e-12);
        assert!((r.ql - r.ql_by_level.iter().sum::<f64>() / 100.0).abs() < 1e-12);
        assert_eq!(ev.ranking.wins, vec![4, 0]);
        assert_eq!(ev.ranking.ties, 4);
        for b in &r.bands.bands {
            assert!(b.qss.iter().all(|&q| q == 0.0));
        }
    }

    #[test]
    fn shifted_model_loses_every_station() {
        let (ds, p) = fixture();
        let mut shifted = p.clone();
        for row in shifted.dists.iter_mut() {
            for d in row.iter_mut() {
                if let LeadDistribution::Truth(t) = d {
                    let q = t.quantile(0.5);
                    *d = LeadDistribution::Normal(NormalLead { mu: q + 3.0, sigma: 1.0 });
                }
            }
        }
        let shifted = PredictionSet::from_distributions("shifted", shifted.keys, shifted.dists, p.levels.clone()).unwrap();
        let ev = evaluate(&[("truth", &p), ("shifted", &shifted)], None, &ds, ScoreConfig::default()).unwrap();
        assert_eq!(ev.ranking.wins, vec![4, 0]);
        assert_eq!(ev.ranking.ties, 0);
        assert!(ev.reports[1].qss < 0.0);
        assert!(ev.reports[1].bias > 2.0);
    }

    #[test]
    fn partitioned_scoring_is_identical() {
        let (ds, p) = fixture();
        let a = score_predictions("m", &p, &ds, ScoreConfig::default()).unwrap();
        let mut rev = p.clone();
        let order: Vec<usize> = (0..p.len()).rev().collect();
        rev.keys = order.iter().map(|&i| p.keys[i]).collect();
        rev.dists = order.iter().map(|&i| p.dists[i].clone()).collect();
        rev.quantiles = order
            .iter()
            .flat_map(|&i| (0..LEAD_TIMES).flat_map(|j| p.quantiles_at(i, j).to_vec()).collect::<Vec<_>>())
            .collect();
        let b = score_predictions("m", &rev, &ds, ScoreConfig::default()).unwrap();
        for (x, y) in a.stations.iter().zip(&b.stations) {
            assert_eq!(x.count, y.count);
            assert_eq!(x.pit, y.pit);
            for j in 0..LEAD_TIMES {
                assert!((x.crps_sum[j] - y.crps_sum[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn median_filter_smooths_spikes() {
        let v = [1.0, 1.0, 9.0, 1.0, 1.0];
        assert_eq!(median_filter(&v, 3), vec![1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(median_filter(&[2.0], 15), vec![2.0]);
    }
}
