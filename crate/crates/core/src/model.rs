//! A trained post-processing model: network, head and feature scaling.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::data::{FeatureStats, FeatureTable};
use crate::error::{Error, Result};
use crate::heads::{Head, HeadKind, LeadDistribution};
use crate::net::{forward_eval, NetworkConfig, NetworkParams};
use crate::{INPUT_DIM, LEAD_TIMES};

/// Rows per forward pass during inference.
const INFERENCE_CHUNK: usize = 2048;

#[derive(Debug, Clone)]
pub struct Model {
    pub net: NetworkParams,
    pub head: Head,
    pub stats: FeatureStats,
}

impl Model {
    pub fn new(net: NetworkParams, kind: HeadKind, stats: FeatureStats) -> Result<Self> {
        let cfg = net.config();
        if cfg.input_dim != INPUT_DIM || cfg.output_dim != kind.param_count() {
            return Err(Error::contract(format!(
                "network {}→{} does not fit the {kind} head ({INPUT_DIM}→{})",
                cfg.input_dim,
                cfg.output_dim,
                kind.param_count()
            )));
        }
        if stats.mean.len() != INPUT_DIM || stats.scale.len() != INPUT_DIM {
            return Err(Error::contract(format!(
                "feature statistics cover {} features, expected {INPUT_DIM}",
                stats.mean.len()
            )));
        }
        Ok(Model {
            net,
            head: Head::new(kind),
            stats,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        self.net.config()
    }

    pub fn kind(&self) -> HeadKind {
        self.head.kind()
    }

    /// Raw head parameters for unstandardized features, one row per sample.
    pub fn raw_outputs(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        let x = self.stats.standardize(features)?;
        if x.nrows() <= INFERENCE_CHUNK {
            return forward_eval(&self.net, x.view());
        }
        let starts: Vec<usize> = (0..x.nrows()).step_by(INFERENCE_CHUNK).collect();
        let parts = starts
            .par_iter()
            .map(|&a| forward_eval(&self.net, x.slice(s![a..(a + INFERENCE_CHUNK).min(x.nrows()), ..])))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
        Ok(concatenate(Axis(0), &views).expect("chunks share the output width"))
    }

    pub fn distributions(&self, table: &FeatureTable) -> Result<Vec<Vec<LeadDistribution>>> {
        let raw = self.raw_outputs(table.features.view())?;
        (0..table.len())
            .into_par_iter()
            .map(|i| {
                self.head.distributions(
                    raw.row(i).as_slice().unwrap(),
                    table.ens_mean.row(i).as_slice().unwrap(),
                    table.ens_std.row(i).as_slice().unwrap(),
                )
            })
            .collect()
    }

    /// Head loss per output lead time, averaged over samples with an
    /// observation at that lead.
    pub fn lead_losses(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        let raw = self.raw_outputs(table.features.view())?;
        let rows = (0..table.len())
            .into_par_iter()
            .map(|i| {
                self.head.lead_losses(
                    raw.row(i).as_slice().unwrap(),
                    table.ens_mean.row(i).as_slice().unwrap(),
                    table.ens_std.row(i).as_slice().unwrap(),
                    table.observations.row(i).as_slice().unwrap(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sum = [0.0; LEAD_TIMES];
        let mut count = [0usize; LEAD_TIMES];
        for row in rows {
            for (j, v) in row.into_iter().enumerate() {
                if let Some(v) = v {
                    sum[j] += v;
                    count[j] += 1;
                }
            }
        }
        Ok((0..LEAD_TIMES)
            .map(|j| if count[j] == 0 { f64::NAN } else { sum[j] / count[j] as f64 })
            .collect())
    }

    /// Mean head loss over every scored (sample, lead time) pair.
    pub fn mean_loss(&self, table: &FeatureTable) -> Result<f64> {
        let raw = self.raw_outputs(table.features.view())?;
        let terms = (0..table.len())
            .into_par_iter()
            .map(|i| {
                self.head.loss(
                    raw.row(i).as_slice().unwrap(),
                    table.ens_mean.row(i).as_slice().unwrap(),
                    table.ens_std.row(i).as_slice().unwrap(),
                    table.observations.row(i).as_slice().unwrap(),
                    None,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = crate::heads::LossTerm::default();
        for t in terms {
            total += t;
        }
        Ok(total.mean())
    }
}
