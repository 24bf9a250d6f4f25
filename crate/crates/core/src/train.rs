//! Mini-batch training with best-validation checkpoint selection.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_batches, split_by_year, FeatureStats, FeatureTable, ForecastDataset};
use crate::error::{Error, Result};
use crate::heads::{HeadKind, LossTerm};
use crate::model::Model;
use crate::net::{adam_step, backward, forward, Mode, NetworkConfig, NetworkParams, OptimizerState, PlateauScheduler};
use crate::rng::{stream, Stream};
use crate::INPUT_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub head: HeadKind,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub validation_year: i32,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout_prob: f64,
    pub patience: usize,
    pub lr_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            head: HeadKind::Flow,
            seed: 0,
            epochs: 100,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 1e-6,
            validation_year: 2016,
            hidden_dim: NetworkConfig::DEFAULT_HIDDEN,
            num_layers: NetworkConfig::DEFAULT_LAYERS,
            dropout_prob: NetworkConfig::DEFAULT_DROPOUT,
            patience: 10,
            lr_factor: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            num_layers: self.num_layers,
            dropout_prob: self.dropout_prob,
            ..NetworkConfig::new(INPUT_DIM, self.hidden_dim, self.head.param_count())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::config(format!(
                "learning rate {} must be positive and weight decay {} non-negative",
                self.lr, self.weight_decay
            )));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return Err(Error::config(format!("lr factor {} outside (0, 1]", self.lr_factor)));
        }
        self.network_config().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Splits `ds` by `cfg.validation_year`, fits feature statistics on the
/// training part and trains.
pub fn train(ds: &ForecastDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (train_keys, val_keys) = split_by_year(ds, cfg.validation_year)?;
    let train_table = FeatureTable::build(ds, &train_keys)?;
    let val_table = FeatureTable::build(ds, &val_keys)?;
    let mut years: Vec<i32> = train_keys.iter().map(|k| ds.issue_year[k.issue]).collect();
    years.sort_unstable();
    years.dedup();
    let stats = FeatureStats::fit(train_table.features.view(), format!("train split (years {years:?})"))?;
    train_tables(&train_table, &val_table, stats, cfg)
}

/// Head loss of a batch and its gradient with respect to the raw outputs,
/// already divided by the number of scored lead times.
fn batch_loss(model: &Model, raw: &Array2<f64>, table: &FeatureTable, rows: &[usize]) -> Result<(LossTerm, Array2<f64>)> {
    let p = raw.ncols();
    let per_row = rows
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut g = vec![0.0; p];
            let t = model.head.loss(
                raw.row(i).as_slice().unwrap(),
                table.ens_mean.row(r).as_slice().unwrap(),
                table.ens_std.row(r).as_slice().unwrap(),
                table.observations.row(r).as_slice().unwrap(),
                Some(&mut g),
            )?;
            Ok((t, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut term = LossTerm::default();
    let mut grad = Array2::zeros((rows.len(), p));
    for (i, (t, g)) in per_row.into_iter().enumerate() {
        term += t;
        grad.row_mut(i).assign(&ndarray::ArrayView1::from(&g));
    }
    if term.count > 0 {
        grad /= term.count as f64;
    }
    Ok((term, grad))
}

pub fn train_tables(
    train: &FeatureTable,
    val: &FeatureTable,
    stats: FeatureStats,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::config("training and validation sets must both be non-empty"));
    }
    let net = NetworkParams::init(cfg.network_config(), &mut stream(cfg.seed, Stream::Init))?;
    let mut model = Model::new(net, cfg.head, stats)?;
    let x = model.stats.standardize(train.features.view())?;
    let mut opt = OptimizerState::new(model.net.len(), cfg.lr, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.patience, cfg.lr_factor);
    let mut batch_rng = stream(cfg.seed, Stream::Batching);
    let mut dropout_rng = stream(cfg.seed, Stream::Dropout);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, NetworkParams)> = None;
    for epoch in 0..cfg.epochs {
        let lr = opt.lr;
        let mut epoch_term = LossTerm::default();
        for (b, rows) in make_batches(train.len(), cfg.batch_size, &mut batch_rng).iter().enumerate() {
            let xb = x.select(ndarray::Axis(0), rows);
            let (raw, tape) = forward(&model.net, xb.view(), Mode::Train, &mut dropout_rng)?;
            let (term, grad) = batch_loss(&model, &raw, train, rows)?;
            if term.count == 0 {
                continue;
            }
            if !term.sum.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss {} in epoch {epoch}, batch {b}",
                    term.mean()
                )));
            }
            epoch_term += term;
            let g = backward(&model.net, &tape, grad.view())?;
            adam_step(&mut opt, &mut model.net, &g)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {b}: {e}")))?;
        }
        let val_loss = model.mean_loss(val)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss after epoch {epoch}")));
        }
        let improved = best.as_ref().is_none_or(|(_, v, _)| val_loss < *v);
        if improved {
            best = Some((epoch, val_loss, model.net.clone()));
        }
        log::info!(
            "epoch {epoch}: train {:.5} val {val_loss:.5} lr {lr:.3e}{}",
            epoch_term.mean(),
            if improved { " *" } else { "" }
        );
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_term.mean(),
            val_loss,
            lr,
            best: false,
        });
        opt.lr = sched.step(val_loss, opt.lr);
    }
    let (best_epoch, best_val_loss, params) = best.expect("at least one epoch");
    history[best_epoch].best = true;
    model.net = params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_loss,
    })
}

/// `epoch,train_loss,val_loss,lr,best`, one row per epoch.
pub fn write_loss_curve(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for rec in history {
        w.serialize(rec).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
