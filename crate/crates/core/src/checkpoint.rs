//! Versioned checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "FLOWCKPT"
//! version  u32
//! hlen     u64      length of the JSON header
//! header   hlen bytes of UTF-8 JSON (CheckpointHeader)
//! count    u64      number of parameters
//! params   count × f64
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureStats, ForecastDataset};
use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::model::Model;
use crate::net::{NetworkConfig, NetworkParams};
use crate::train::{TrainConfig, TrainOutcome};
use crate::{INPUT_DIM, LEAD_TIMES};

pub const MAGIC: &[u8; 8] = b"FLOWCKPT";
pub const VERSION: u32 = 1;
/// Order in which a lead time's splines are applied.
pub const FLOW_COMPOSITION: &str = "data-side-first";

/// What the feature builder assumed about the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub input_dim: usize,
    pub lead_times: usize,
    pub land_usage_categories: Vec<u8>,
}

impl FeatureSchema {
    pub fn of(ds: &ForecastDataset) -> Self {
        FeatureSchema {
            input_dim: INPUT_DIM,
            lead_times: LEAD_TIMES,
            land_usage_categories: ds.land_usage_categories.clone(),
        }
    }

    /// Differences between this schema and the one `ds` would produce.
    pub fn mismatches(&self, ds: &ForecastDataset) -> Vec<String> {
        let other = FeatureSchema::of(ds);
        let mut out = Vec::new();
        if self.input_dim != other.input_dim {
            out.push(format!("input_dim {} vs {}", self.input_dim, other.input_dim));
        }
        if self.lead_times != other.lead_times {
            out.push(format!("lead_times {} vs {}", self.lead_times, other.lead_times));
        }
        if self.land_usage_categories != other.land_usage_categories {
            out.push(format!(
                "land_usage_categories {:?} vs {:?}",
                self.land_usage_categories, other.land_usage_categories
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Input file name → SHA-256 hex digest.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub network: NetworkConfig,
    pub head: HeadKind,
    pub feature_stats: FeatureStats,
    pub feature_schema: FeatureSchema,
    pub flow_composition: String,
    pub run: RunManifest,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_outcome(outcome: &TrainOutcome, cfg: &TrainConfig, schema: FeatureSchema) -> Self {
        let m = &outcome.model;
        Checkpoint {
            header: CheckpointHeader {
                network: m.config().clone(),
                head: m.kind(),
                feature_stats: m.stats.clone(),
                feature_schema: schema,
                flow_composition: FLOW_COMPOSITION.to_string(),
                run: RunManifest {
                    config: cfg.clone(),
                    seed: cfg.seed,
                    epochs: outcome.history.len(),
                    best_epoch: outcome.best_epoch,
                    best_val_loss: outcome.best_val_loss,
                    inputs: BTreeMap::new(),
                },
            },
            params: m.net.to_flat(),
        }
    }

    pub fn model(&self) -> Result<Model> {
        let h = &self.header;
        let net = NetworkParams::from_flat(h.network.clone(), self.params.clone())?;
        Model::new(net, h.head, h.feature_stats.clone())
    }

    /// Refuses datasets whose features would not line up with training.
    pub fn check_dataset(&self, ds: &ForecastDataset) -> Result<()> {
        let diffs = self.header.feature_schema.mismatches(ds);
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "dataset features do not match the checkpoint ({}); statistics were fitted on {}",
                diffs.join("; "),
                self.header.feature_stats.provenance
            )))
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::to_vec(&self.header).map_err(std::io::Error::other)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R, origin: &Path) -> Result<Self> {
        let bad = |m: String| Error::format(origin, m);
        let io = |e: std::io::Error| Error::format(origin, format!("truncated or unreadable: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)".into()));
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b).map_err(io)?;
        let version = u32::from_le_bytes(u32b);
        if version != VERSION {
            return Err(bad(format!("checkpoint version {version}, this build reads {VERSION}")));
        }
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b).map_err(io)?;
        let hlen = u64::from_le_bytes(u64b) as usize;
        if hlen > 1 << 30 {
            return Err(bad(format!("implausible header length {hlen}")));
        }
        let mut header = vec![0u8; hlen];
        r.read_exact(&mut header).map_err(io)?;
        let header: CheckpointHeader =
            serde_json::from_slice(&header).map_err(|e| bad(format!("header: {e}")))?;
        if header.flow_composition != FLOW_COMPOSITION {
            return Err(bad(format!("unsupported flow composition '{}'", header.flow_composition)));
        }
        r.read_exact(&mut u64b).map_err(io)?;
        let count = u64::from_le_bytes(u64b) as usize;
        if count != header.network.param_count() {
            return Err(bad(format!(
                "{count} parameters stored, network config needs {}",
                header.network.param_count()
            )));
        }
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes).map_err(io)?;
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(io)?;
        if !rest.is_empty() {
            return Err(bad(format!("{} trailing bytes", rest.len())));
        }
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f), path)
    }
}
