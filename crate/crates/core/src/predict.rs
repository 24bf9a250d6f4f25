//! Prediction sets: per-sample predictive laws plus their quantile grid,
//! and the CSV file format they are exchanged in.
//!
//! One row per (station, issue time, lead time):
//! `head,station,issue,lead,p01..pK,q001..q100`. The `p` columns hold the
//! distribution parameters (see [`lead_params`]), the `q` columns the
//! quantiles at levels `i/101`. Values are written in shortest round-trip
//! form, so reading a file back reproduces every value bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::data::{FeatureTable, ForecastDataset, SampleKey, TruthLaw};
use crate::error::{Error, Result};
use crate::flow::LeadFlow;
use crate::heads::{BernsteinLead, LeadDistribution, NormalLead, Predictive, QuantileLevels, BERNSTEIN_COEFFS};
use crate::model::Model;
use crate::LEAD_TIMES;

/// Head identifier of generator truth-law predictions.
pub const TRUTH_HEAD: &str = "truth";

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub head: String,
    pub keys: Vec<SampleKey>,
    /// `LEAD_TIMES` laws per key.
    pub dists: Vec<Vec<LeadDistribution>>,
    /// keys × leads × levels, row-major.
    pub quantiles: Vec<f64>,
    pub levels: QuantileLevels,
}

impl PredictionSet {
    pub fn from_distributions(
        head: impl Into<String>,
        keys: Vec<SampleKey>,
        dists: Vec<Vec<LeadDistribution>>,
        levels: QuantileLevels,
    ) -> Result<Self> {
        if keys.len() != dists.len() || dists.iter().any(|d| d.len() != LEAD_TIMES) {
            return Err(Error::contract(format!(
                "{} keys but {} distribution rows (each must hold {LEAD_TIMES} leads)",
                keys.len(),
                dists.len()
            )));
        }
        let quantiles: Vec<f64> = dists
            .par_iter()
            .flat_map_iter(|row| {
                row.iter()
                    .flat_map(|d| levels.as_slice().iter().map(move |&t| d.quantile(t)))
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(PredictionSet {
            head: head.into(),
            keys,
            dists,
            quantiles,
            levels,
        })
    }

    /// The generator's own observation law at every key.
    pub fn truth(ds: &ForecastDataset, keys: &[SampleKey]) -> Result<Self> {
        let dists = keys
            .iter()
            .map(|k| {
                (0..LEAD_TIMES)
                    .map(|j| {
                        ds.truth_law(k.station, k.issue, j)
                            .map(LeadDistribution::Truth)
                            .ok_or_else(|| Error::contract("dataset carries no synthetic truth law"))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_distributions(TRUTH_HEAD, keys.to_vec(), dists, QuantileLevels::default())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Quantiles of sample `row` at lead `lead`.
    pub fn quantiles_at(&self, row: usize, lead: usize) -> &[f64] {
        let n = self.levels.len();
        let o = (row * LEAD_TIMES + lead) * n;
        &self.quantiles[o..o + n]
    }
}

/// Runs `model` over every sample of `ds`.
pub fn predict(model: &Model, ds: &ForecastDataset) -> Result<PredictionSet> {
    let keys = crate::data::all_samples(ds);
    let table = FeatureTable::build(ds, &keys)?;
    let dists = model.distributions(&table)?;
    PredictionSet::from_distributions(model.kind().as_str(), keys, dists, model.head.levels().clone())
}

/// Distribution parameters as written to prediction files: normal `μ, σ`;
/// flow knots then values per spline (40, free-derivative flow adds the
/// derivatives: 60); Bernstein coefficients (13); truth law
/// `[family, a, b, c, d]` with family 0 = normal `(μ, σ)`, 1 = split normal
/// `(mode, left, right)`, 2 = mixture `(lower, upper, sd, upper_weight)`.
pub fn lead_params(head: &str, d: &LeadDistribution) -> Vec<f64> {
    match d {
        LeadDistribution::Normal(n) => vec![n.mu, n.sigma],
        LeadDistribution::Flow(f) if head == "free-derivative-flow" => f.to_knots_values_derivs(),
        LeadDistribution::Flow(f) => f.to_knots_values(),
        LeadDistribution::Bernstein(b) => b.coeffs.to_vec(),
        LeadDistribution::Truth(t) => match *t {
            TruthLaw::Normal { mu, sigma } => vec![0.0, mu, sigma, 0.0, 0.0],
            TruthLaw::SplitNormal { mode, left, right } => vec![1.0, mode, left, right, 0.0],
            TruthLaw::Mixture {
                lower,
                upper,
                sd,
                upper_weight,
            } => vec![2.0, lower, upper, sd, upper_weight],
        },
    }
}

pub fn params_per_lead(head: &str) -> Result<usize> {
    Ok(match head {
        "normal" => 2,
        "flow" => 40,
        "free-derivative-flow" => 60,
        "bernstein" => BERNSTEIN_COEFFS,
        TRUTH_HEAD => 5,
        other => return Err(Error::config(format!("unknown head identifier '{other}'"))),
    })
}

pub fn lead_from_params(head: &str, p: &[f64]) -> Result<LeadDistribution> {
    let expected = params_per_lead(head)?;
    if p.len() != expected {
        return Err(Error::contract(format!("{head} needs {expected} parameters, got {}", p.len())));
    }
    Ok(match head {
        "normal" => LeadDistribution::Normal(NormalLead { mu: p[0], sigma: p[1] }),
        "flow" => LeadDistribution::Flow(LeadFlow::from_knots_values(p)?),
        "free-derivative-flow" => LeadDistribution::Flow(LeadFlow::from_knots_values_derivs(p)?),
        "bernstein" => LeadDistribution::Bernstein(BernsteinLead {
            coeffs: p.try_into().unwrap(),
        }),
        _ => LeadDistribution::Truth(match p[0] as i64 {
            0 => TruthLaw::Normal { mu: p[1], sigma: p[2] },
            1 => TruthLaw::SplitNormal {
                mode: p[1],
                left: p[2],
                right: p[3],
            },
            2 => TruthLaw::Mixture {
                lower: p[1],
                upper: p[2],
                sd: p[3],
                upper_weight: p[4],
            },
            f => return Err(Error::contract(format!("unknown truth-law family {f}"))),
        }),
    })
}

pub fn write_predictions<W: Write>(w: W, set: &PredictionSet) -> Result<()> {
    let np = params_per_lead(&set.head)?;
    let nq = set.levels.len();
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["head".to_string(), "station".into(), "issue".into(), "lead".into()];
    header.extend((1..=np).map(|i| format!("p{i:02}")));
    header.extend((1..=nq).map(|i| format!("q{i:03}")));
    out.write_record(&header).map_err(csv_err)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for (row, (key, dists)) in set.keys.iter().zip(&set.dists).enumerate() {
        for (j, d) in dists.iter().enumerate() {
            record.clear();
            record.push(set.head.clone());
            record.push(key.station.to_string());
            record.push(key.issue.to_string());
            record.push(j.to_string());
            record.extend(lead_params(&set.head, d).iter().map(f64::to_string));
            record.extend(set.quantiles_at(row, j).iter().map(f64::to_string));
            out.write_record(&record).map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::Numeric(format!("flushing predictions: {e}")))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numeric(format!("writing prediction CSV: {e}"))
}

pub fn save_predictions(path: impl AsRef<Path>, set: &PredictionSet) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_predictions(std::io::BufWriter::new(file), set).map_err(|e| match e {
        Error::Numeric(m) => Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(m),
        },
        other => other,
    })
}

pub fn read_predictions<R: Read>(r: R, origin: &Path) -> Result<PredictionSet> {
    let bad = |msg: String| Error::format(origin, msg);
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let np = header.iter().filter(|h| h.starts_with('p')).count();
    let nq = header.iter().filter(|h| h.starts_with('q')).count();
    if header.len() != 4 + np + nq || header.get(0) != Some("head") || nq == 0 {
        return Err(bad(format!("unexpected header with {} columns", header.len())));
    }
    let levels = QuantileLevels::equidistant(nq);
    let mut head: Option<String> = None;
    let mut keys = Vec::new();
    let mut dists: Vec<Vec<LeadDistribution>> = Vec::new();
    let mut quantiles = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row_no = line + 2;
        let h = &rec[0];
        match &head {
            None => {
                if params_per_lead(h)? != np {
                    return Err(bad(format!("head '{h}' needs {} parameter columns, file has {np}", params_per_lead(h)?)));
                }
                head = Some(h.to_string());
            }
            Some(prev) if prev != h => return Err(bad(format!("row {row_no}: head '{h}' after '{prev}'"))),
            _ => {}
        }
        let int = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| bad(format!("row {row_no}: '{}' is not an index", &rec[i])))
        };
        let (station, issue, lead) = (int(1)?, int(2)?, int(3)?);
        let nums = (4..rec.len())
            .map(|i| rec[i].parse::<f64>().map_err(|_| bad(format!("row {row_no}: '{}' is not a number", &rec[i]))))
            .collect::<Result<Vec<f64>>>()?;
        if lead == 0 {
            keys.push(SampleKey { station, issue });
            dists.push(Vec::with_capacity(LEAD_TIMES));
        }
        let expected = dists.last().map_or(usize::MAX, Vec::len);
        if lead != expected || keys.last() != Some(&SampleKey { station, issue }) {
            return Err(bad(format!("row {row_no}: lead times of each sample must run 0..{LEAD_TIMES} in order")));
        }
        let d = lead_from_params(h, &nums[..np]).map_err(|e| bad(format!("row {row_no}: {e}")))?;
        dists.last_mut().unwrap().push(d);
        quantiles.extend_from_slice(&nums[np..]);
    }
    if dists.last().is_some_and(|d| d.len() != LEAD_TIMES) {
        return Err(bad("last sample is truncated".to_string()));
    }
    Ok(PredictionSet {
        head: head.ok_or_else(|| bad("no prediction rows".to_string()))?,
        keys,
        dists,
        quantiles,
        levels,
    })
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(std::io::BufReader::new(file), path)
}
