//! Network inputs: ensemble statistics, station predictors, season.
//!
//! Column layout of the 48-wide feature vector:
//! `[mean_0..mean_20, std_0..std_20, station_alt, model_alt, lon, lat,
//! land_usage, cos(2πd/365)]`.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::ForecastDataset;
use crate::error::{Error, Result};
use crate::{INPUT_DIM, LEAD_TIMES};

pub const STATIC_FEATURES: usize = 6;

/// Columns belonging to input lead `lead` (its mean and its spread).
pub fn lead_columns(lead: usize) -> [usize; 2] {
    [lead, LEAD_TIMES + lead]
}

pub fn static_columns() -> std::ops::Range<usize> {
    2 * LEAD_TIMES..INPUT_DIM
}

/// Per-lead mean and population standard deviation of `members × leads`
/// forecasts (row-major, one row per member).
pub fn ensemble_stats(forecasts: &[f32], members: usize, leads: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if members < 2 {
        return Err(Error::contract(format!("ensemble statistics need at least 2 members, got {members}")));
    }
    if forecasts.len() != members * leads {
        return Err(Error::contract(format!(
            "{} forecasts for {members} members × {leads} leads",
            forecasts.len()
        )));
    }
    let mut mean = vec![0.0; leads];
    for row in forecasts.chunks_exact(leads) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= members as f64;
    }
    let mut var = vec![0.0; leads];
    for row in forecasts.chunks_exact(leads) {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v as f64 - m;
            *s += d * d;
        }
    }
    let std = var.into_iter().map(|s| (s / members as f64).sqrt()).collect();
    Ok((mean, std))
}

pub fn seasonal_encoding(day_of_year: u32) -> f64 {
    (2.0 * std::f64::consts::PI * day_of_year as f64 / 365.0).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub station: usize,
    pub issue: usize,
}

/// Every (station, issue time) pair, station-major.
pub fn all_samples(ds: &ForecastDataset) -> Vec<SampleKey> {
    (0..ds.num_stations())
        .flat_map(|station| (0..ds.num_issue_times()).map(move |issue| SampleKey { station, issue }))
        .collect()
}

/// Splits samples into (train, validation) by the year of their issue time.
pub fn split_by_year(ds: &ForecastDataset, validation_year: i32) -> Result<(Vec<SampleKey>, Vec<SampleKey>)> {
    let (val, train): (Vec<_>, Vec<_>) = all_samples(ds)
        .into_iter()
        .partition(|k| ds.issue_year[k.issue] == validation_year);
    if val.is_empty() {
        let mut years = ds.issue_year.clone();
        years.sort_unstable();
        years.dedup();
        return Err(Error::config(format!(
            "validation year {validation_year} has no samples (dataset years: {years:?})"
        )));
    }
    if train.is_empty() {
        return Err(Error::config(format!("no training samples outside validation year {validation_year}")));
    }
    Ok((train, val))
}

/// Shuffled index batches covering `0..n` once; the last batch may be short.
pub fn make_batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Unstandardized features and head anchors for a set of samples.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub keys: Vec<SampleKey>,
    pub features: Array2<f64>,
    pub ens_mean: Array2<f64>,
    pub ens_std: Array2<f64>,
    pub observations: Array2<f64>,
}

impl FeatureTable {
    pub fn build(ds: &ForecastDataset, keys: &[SampleKey]) -> Result<Self> {
        let n = keys.len();
        let mut features = Array2::zeros((n, INPUT_DIM));
        let mut ens_mean = Array2::zeros((n, LEAD_TIMES));
        let mut ens_std = Array2::zeros((n, LEAD_TIMES));
        let mut observations = Array2::zeros((n, LEAD_TIMES));
        for (row, k) in keys.iter().enumerate() {
            let (mean, std) = ensemble_stats(ds.member_forecasts(k.station, k.issue), ds.members, LEAD_TIMES)?;
            let meta = &ds.stations[k.station];
            let mut f = features.row_mut(row);
            for j in 0..LEAD_TIMES {
                f[j] = mean[j];
                f[LEAD_TIMES + j] = std[j];
                ens_mean[[row, j]] = mean[j];
                ens_std[[row, j]] = std[j];
            }
            let base = 2 * LEAD_TIMES;
            f[base] = meta.station_altitude;
            f[base + 1] = meta.model_altitude;
            f[base + 2] = meta.longitude;
            f[base + 3] = meta.latitude;
            f[base + 4] = meta.land_usage as f64;
            f[base + 5] = seasonal_encoding(ds.issue_day_of_year[k.issue] as u32);
            for (j, &o) in ds.observations_at(k.station, k.issue).iter().enumerate() {
                observations[[row, j]] = o as f64;
            }
        }
        Ok(FeatureTable {
            keys: keys.to_vec(),
            features,
            ens_mean,
            ens_std,
            observations,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            keys: rows.iter().map(|&r| self.keys[r]).collect(),
            features: self.features.select(Axis(0), rows),
            ens_mean: self.ens_mean.select(Axis(0), rows),
            ens_std: self.ens_std.select(Axis(0), rows),
            observations: self.observations.select(Axis(0), rows),
        }
    }
}

/// Per-feature standardization fitted on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Where the statistics were fitted, e.g. `train split (years [2014, 2015])`.
    pub provenance: String,
}

impl FeatureStats {
    /// Zero-variance features get unit scale.
    pub fn fit(features: ArrayView2<f64>, provenance: impl Into<String>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::contract("cannot fit feature statistics on an empty split"));
        }
        let n = features.nrows() as f64;
        let mean: Vec<f64> = features.mean_axis(Axis(0)).unwrap().to_vec();
        let scale = features
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 * (1.0 + m.abs()) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureStats {
            mean,
            scale,
            provenance: provenance.into(),
        })
    }

    pub fn standardize(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.mean.len() {
            return Err(Error::contract(format!(
                "{} features, statistics cover {}",
                features.ncols(),
                self.mean.len()
            )));
        }
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}
