//! Synthetic station forecasts with a known observation law.
//!
//! Truth per (station, issue time, lead): climatology (season, diurnal
//! cycle, lapse rate) plus a weather anomaly correlated across lead times.
//! Members scatter around the truth plus a systematic bias that depends on
//! the lead time and the station/model altitude gap. Observations add noise
//! drawn from the configured [`TruthConfig`] law around the truth.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{ForecastDataset, StationMeta, SyntheticTruth};
use super::features::seasonal_encoding;
use super::truth::TruthConfig;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::LEAD_TIMES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub stations: usize,
    pub issue_times_per_year: usize,
    /// Years of the training-like dataset.
    pub years: Vec<i32>,
    /// Years of the test-like dataset; defaults to `years`.
    pub test_years: Option<Vec<i32>>,
    pub train_members: usize,
    pub test_members: usize,
    pub truth: TruthConfig,
    /// Scale of the error shared by all members at lead 0, °C.
    pub ensemble_error: f64,
    /// Scale of member-to-member scatter at lead 0, °C.
    pub member_spread: f64,
    /// Scale of the weather anomaly around climatology, °C.
    pub anomaly_scale: f64,
    /// Lag-one correlation across lead times of anomalies and shared errors.
    pub lead_correlation: f64,
    pub missing_fraction: f64,
    pub land_usage_categories: u8,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            stations: 20,
            issue_times_per_year: 100,
            years: vec![2014, 2015, 2016, 2017],
            test_years: None,
            train_members: 11,
            test_members: 51,
            truth: TruthConfig::default(),
            ensemble_error: 0.3,
            member_spread: 0.6,
            anomaly_scale: 3.0,
            lead_correlation: 0.8,
            missing_fraction: 0.0,
            land_usage_categories: 5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.stations == 0 {
            problems.push("stations must be positive".to_string());
        }
        if self.issue_times_per_year == 0 || self.issue_times_per_year > 365 {
            problems.push(format!("issue_times_per_year {} outside 1..=365", self.issue_times_per_year));
        }
        if self.years.is_empty() || self.test_years.as_ref().is_some_and(Vec::is_empty) {
            problems.push("year lists must not be empty".to_string());
        }
        if self.train_members < 2 || self.test_members < 2 {
            problems.push("ensembles need at least 2 members".to_string());
        }
        if !(self.ensemble_error >= 0.0 && self.member_spread > 0.0 && self.anomaly_scale >= 0.0) {
            problems.push("error scales must be non-negative (member spread positive)".to_string());
        }
        if !(0.0..1.0).contains(&self.lead_correlation) {
            problems.push(format!("lead_correlation {} outside [0, 1)", self.lead_correlation));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            problems.push(format!("missing_fraction {} outside [0, 1)", self.missing_fraction));
        }
        if self.land_usage_categories == 0 {
            problems.push("land_usage_categories must be positive".to_string());
        }
        if let Err(e) = self.truth.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("invalid generator config: {}", problems.join("; "))))
        }
    }
}

/// A training-like and a test-like dataset over the same stations.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub train: ForecastDataset,
    pub test: ForecastDataset,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn make_stations<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Vec<StationMeta> {
    (0..cfg.stations)
        .map(|_| {
            // Roughly 60/30/10 % in the low/mid/high altitude bands.
            let u: f64 = rng.random();
            let station_altitude = if u < 0.6 {
                rng.random_range(0.0..800.0)
            } else if u < 0.9 {
                rng.random_range(800.0..2000.0)
            } else {
                rng.random_range(2000.0..3500.0)
            };
            // The model terrain is smoothed towards the regional mean.
            let model_altitude = 0.6 * station_altitude + 200.0 + 150.0 * normal(rng);
            StationMeta {
                station_altitude,
                model_altitude,
                longitude: rng.random_range(2.0..10.0),
                latitude: rng.random_range(45.0..52.0),
                land_usage: rng.random_range(0..cfg.land_usage_categories),
            }
        })
        .collect()
}

struct StationClimate {
    offset: f64,
    diurnal_amplitude: f64,
}

fn issue_calendar(cfg: &GeneratorConfig, years: &[i32]) -> (Vec<u16>, Vec<i32>) {
    let n = cfg.issue_times_per_year;
    let mut days = Vec::with_capacity(n * years.len());
    let mut yrs = Vec::with_capacity(n * years.len());
    for &y in years {
        for i in 0..n {
            days.push((1 + i * 365 / n) as u16);
            yrs.push(y);
        }
    }
    (days, yrs)
}

fn correlated_series<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> [f64; LEAD_TIMES] {
    let mut out = [0.0; LEAD_TIMES];
    let innovation = (1.0 - rho * rho).sqrt();
    out[0] = normal(rng);
    for j in 1..LEAD_TIMES {
        out[j] = rho * out[j - 1] + innovation * normal(rng);
    }
    out
}

fn simulate<R: Rng + ?Sized>(
    cfg: &GeneratorConfig,
    stations: &[StationMeta],
    climate: &[StationClimate],
    years: &[i32],
    members: usize,
    rng: &mut R,
) -> ForecastDataset {
    let (days, yrs) = issue_calendar(cfg, years);
    let n = days.len();
    let s = stations.len();
    let mut forecasts = Vec::with_capacity(s * n * members * LEAD_TIMES);
    let mut observations = Vec::with_capacity(s * n * LEAD_TIMES);
    let mut centers = Vec::with_capacity(s * n * LEAD_TIMES);
    let two_pi = 2.0 * std::f64::consts::PI;
    for (st, clim) in stations.iter().zip(climate) {
        for &doy in &days {
            let seasonal = seasonal_encoding(doy as u32);
            let anomaly = correlated_series(cfg.lead_correlation, rng);
            let shared = correlated_series(cfg.lead_correlation, rng);
            let mut truth = [0.0f64; LEAD_TIMES];
            let mut bias = [0.0f64; LEAD_TIMES];
            for j in 0..LEAD_TIMES {
                let hour = (6 * j) % 24;
                let valid_day = doy as f64 + 0.25 * j as f64;
                let season = 9.0 - 9.0 * (two_pi * (valid_day - 20.0) / 365.0).cos();
                let diurnal = -clim.diurnal_amplitude * (two_pi * (hour as f64 - 3.0) / 24.0).cos();
                let lapse = -0.0065 * st.station_altitude;
                let t = season + diurnal + lapse + clim.offset + cfg.anomaly_scale * anomaly[j];
                truth[j] = t as f32 as f64;
                // Forecasts sit at the model altitude and drift warm with lead time.
                bias[j] = 0.0065 * (st.station_altitude - st.model_altitude)
                    + 0.03 * j as f64
                    + 0.4 * (two_pi * hour as f64 / 24.0).cos();
            }
            let growth = |j: usize| 1.0 + j as f64 / (LEAD_TIMES - 1) as f64;
            for _ in 0..members {
                for j in 0..LEAD_TIMES {
                    let e = truth[j]
                        + bias[j]
                        + cfg.ensemble_error * growth(j) * shared[j]
                        + cfg.member_spread * growth(j) * normal(rng);
                    forecasts.push(e as f32);
                }
            }
            for j in 0..LEAD_TIMES {
                let law = cfg.truth.law(truth[j], j, LEAD_TIMES, seasonal);
                let y = law.sample(rng);
                let missing = cfg.missing_fraction > 0.0 && rng.random::<f64>() < cfg.missing_fraction;
                observations.push(if missing { f32::NAN } else { y as f32 });
                centers.push(truth[j] as f32);
            }
        }
    }
    ForecastDataset {
        stations: stations.to_vec(),
        land_usage_categories: (0..cfg.land_usage_categories).collect(),
        issue_day_of_year: days,
        issue_year: yrs,
        members,
        forecasts,
        observations,
        truth: Some(SyntheticTruth {
            law: cfg.truth.clone(),
            centers,
        }),
    }
}

pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<SyntheticPair> {
    cfg.validate()?;
    let mut station_rng = stream(seed, Stream::Stations);
    let stations = make_stations(cfg, &mut station_rng);
    let climate: Vec<StationClimate> = stations
        .iter()
        .map(|_| StationClimate {
            offset: normal(&mut station_rng),
            diurnal_amplitude: station_rng.random_range(2.0..5.0),
        })
        .collect();
    let test_years = cfg.test_years.clone().unwrap_or_else(|| cfg.years.clone());
    let train = simulate(
        cfg,
        &stations,
        &climate,
        &cfg.years,
        cfg.train_members,
        &mut stream(seed, Stream::TrainData),
    );
    let test = simulate(
        cfg,
        &stations,
        &climate,
        &test_years,
        cfg.test_members,
        &mut stream(seed, Stream::TestData),
    );
    Ok(SyntheticPair { train, test })
}
