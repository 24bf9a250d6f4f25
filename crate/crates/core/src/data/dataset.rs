//! In-memory dataset and its on-disk directory format.
//!
//! A dataset directory holds `manifest.json` plus little-endian `float32`
//! tensors in row-major order:
//!
//! | file               | shape                                    |
//! |--------------------|------------------------------------------|
//! | `forecasts.bin`    | stations × issue times × members × leads |
//! | `observations.bin` | stations × issue times × leads           |
//! | `truth.bin`        | stations × issue times × leads (synthetic only) |
//!
//! Missing observations are stored as NaN.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::truth::{TruthConfig, TruthLaw};
use super::features::seasonal_encoding;
use crate::error::{Error, Result};
use crate::LEAD_TIMES;

pub const FORMAT_NAME: &str = "flowcast-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_altitude: f64,
    pub model_altitude: f64,
    pub longitude: f64,
    pub latitude: f64,
    pub land_usage: u8,
}

/// Ground truth of a synthetic dataset: the noiseless signal per triple and
/// the law the observation noise was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub law: TruthConfig,
    pub centers: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDataset {
    pub stations: Vec<StationMeta>,
    pub land_usage_categories: Vec<u8>,
    pub issue_day_of_year: Vec<u16>,
    pub issue_year: Vec<i32>,
    pub members: usize,
    pub forecasts: Vec<f32>,
    pub observations: Vec<f32>,
    pub truth: Option<SyntheticTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub stations: usize,
    pub issue_times: usize,
    pub members: usize,
    pub lead_times: usize,
    pub tensor_encoding: String,
    pub issue_day_of_year: Vec<u16>,
    pub issue_year: Vec<i32>,
    pub land_usage_categories: Vec<u8>,
    pub station_meta: Vec<StationMeta>,
    #[serde(default)]
    pub truth_law: Option<TruthConfig>,
}

impl ForecastDataset {
    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn num_issue_times(&self) -> usize {
        self.issue_day_of_year.len()
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.num_stations(), self.num_issue_times(), self.members, LEAD_TIMES)
    }

    /// Member forecasts of one sample, `members × leads`.
    pub fn member_forecasts(&self, station: usize, issue: usize) -> &[f32] {
        let block = self.members * LEAD_TIMES;
        let start = (station * self.num_issue_times() + issue) * block;
        &self.forecasts[start..start + block]
    }

    pub fn observations_at(&self, station: usize, issue: usize) -> &[f32] {
        let start = (station * self.num_issue_times() + issue) * LEAD_TIMES;
        &self.observations[start..start + LEAD_TIMES]
    }

    /// Observation law at one triple, for synthetic data.
    pub fn truth_law(&self, station: usize, issue: usize, lead: usize) -> Option<TruthLaw> {
        let truth = self.truth.as_ref()?;
        let idx = (station * self.num_issue_times() + issue) * LEAD_TIMES + lead;
        let seasonal = seasonal_encoding(self.issue_day_of_year[issue] as u32);
        Some(truth.law.law(truth.centers[idx] as f64, lead, LEAD_TIMES, seasonal))
    }

    pub fn validate(&self) -> Result<()> {
        let (s, n, m, t) = self.dims();
        if self.issue_year.len() != n {
            return Err(Error::contract(format!(
                "issue_year has {} entries for {n} issue times",
                self.issue_year.len()
            )));
        }
        if self.forecasts.len() != s * n * m * t || self.observations.len() != s * n * t {
            return Err(Error::contract("tensor sizes do not match dataset dimensions"));
        }
        if let Some(truth) = &self.truth {
            if truth.centers.len() != s * n * t {
                return Err(Error::contract("truth tensor size does not match dataset dimensions"));
            }
        }
        if let Some(st) = self
            .stations
            .iter()
            .find(|st| !self.land_usage_categories.contains(&st.land_usage))
        {
            return Err(Error::contract(format!(
                "land usage {} not among declared categories {:?}",
                st.land_usage, self.land_usage_categories
            )));
        }
        Ok(())
    }

    /// Missing observations per station.
    pub fn missing_counts(&self) -> Vec<usize> {
        self.observations
            .chunks(self.num_issue_times() * LEAD_TIMES)
            .map(|c| c.iter().filter(|v| !v.is_finite()).count())
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            stations: self.num_stations(),
            issue_times: self.num_issue_times(),
            members: self.members,
            lead_times: LEAD_TIMES,
            tensor_encoding: "float32-le-row-major".to_string(),
            issue_day_of_year: self.issue_day_of_year.clone(),
            issue_year: self.issue_year.clone(),
            land_usage_categories: self.land_usage_categories.clone(),
            station_meta: self.stations.clone(),
            truth_law: self.truth.as_ref().map(|t| t.law.clone()),
        }
    }
}

fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, format!("{} bytes is not a whole number of float32 values", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Names the dimension(s) that would explain a tensor of `found` elements.
fn shape_mismatch(path: &Path, found: usize, dims: &[(&str, usize)]) -> Error {
    let expected: usize = dims.iter().map(|d| d.1).product();
    let mut suspects = Vec::new();
    for (i, (name, value)) in dims.iter().enumerate() {
        let others: usize = dims.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, d)| d.1).product();
        if others > 0 && found.is_multiple_of(others) && found / others != *value {
            suspects.push(format!("{name} = {} (manifest says {value})", found / others));
        }
    }
    let shape = dims.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(" × ");
    let hint = if suspects.is_empty() {
        String::new()
    } else {
        format!("; data is consistent with {}", suspects.join(" or "))
    };
    Error::format(path, format!("expected {shape} = {expected} values, found {found}{hint}"))
}

pub fn save_dataset(dir: impl AsRef<Path>, ds: &ForecastDataset) -> Result<()> {
    let dir = dir.as_ref();
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&ds.manifest()).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    write_f32(&dir.join("forecasts.bin"), &ds.forecasts)?;
    write_f32(&dir.join("observations.bin"), &ds.observations)?;
    if let Some(truth) = &ds.truth {
        write_f32(&dir.join("truth.bin"), &truth.centers)?;
    }
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<ForecastDataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if m.format != FORMAT_NAME || m.version != FORMAT_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported format {} v{}", m.format, m.version),
        ));
    }
    if m.lead_times != LEAD_TIMES {
        return Err(Error::format(
            &manifest_path,
            format!("lead_times = {}, only {LEAD_TIMES} is supported", m.lead_times),
        ));
    }
    if m.station_meta.len() != m.stations {
        return Err(Error::format(
            &manifest_path,
            format!("stations = {} but station_meta lists {}", m.stations, m.station_meta.len()),
        ));
    }
    if m.issue_day_of_year.len() != m.issue_times || m.issue_year.len() != m.issue_times {
        return Err(Error::format(
            &manifest_path,
            format!(
                "issue_times = {} but issue_day_of_year/issue_year list {}/{}",
                m.issue_times,
                m.issue_day_of_year.len(),
                m.issue_year.len()
            ),
        ));
    }
    if m.members < 2 {
        return Err(Error::format(&manifest_path, format!("members = {} (need at least 2)", m.members)));
    }
    let dims3 = [("stations", m.stations), ("issue_times", m.issue_times), ("lead_times", LEAD_TIMES)];
    let fpath = dir.join("forecasts.bin");
    let forecasts = read_f32(&fpath)?;
    let dims4 = [
        ("stations", m.stations),
        ("issue_times", m.issue_times),
        ("members", m.members),
        ("lead_times", LEAD_TIMES),
    ];
    if forecasts.len() != m.stations * m.issue_times * m.members * LEAD_TIMES {
        return Err(shape_mismatch(&fpath, forecasts.len(), &dims4));
    }
    let opath = dir.join("observations.bin");
    let observations = read_f32(&opath)?;
    if observations.len() != m.stations * m.issue_times * LEAD_TIMES {
        return Err(shape_mismatch(&opath, observations.len(), &dims3));
    }
    let truth = match &m.truth_law {
        Some(law) => {
            let tpath = dir.join("truth.bin");
            let centers = read_f32(&tpath)?;
            if centers.len() != observations.len() {
                return Err(shape_mismatch(&tpath, centers.len(), &dims3));
            }
            Some(SyntheticTruth {
                law: law.clone(),
                centers,
            })
        }
        None => None,
    };
    let ds = ForecastDataset {
        stations: m.station_meta,
        land_usage_categories: m.land_usage_categories,
        issue_day_of_year: m.issue_day_of_year,
        issue_year: m.issue_year,
        members: m.members,
        forecasts,
        observations,
        truth,
    };
    ds.validate().map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    Ok(ds)
}
