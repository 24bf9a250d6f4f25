use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{lead_columns, static_columns, FeatureTable};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::LEAD_TIMES;

/// Input groups: one per input lead time plus the static predictors.
pub const IMPORTANCE_GROUPS: usize = LEAD_TIMES + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImportanceOptions {
    pub repetitions: usize,
    /// Use the identity permutation; the result must be exactly zero.
    pub identity: bool,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        ImportanceOptions {
            repetitions: 5,
            identity: false,
        }
    }
}

/// Loss increase per (output lead, input group). Column `g < 21` permutes
/// input lead `g`, column 21 the static predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMatrix {
    pub values: Array2<f64>,
    /// Unpermuted loss per output lead.
    pub baseline: Vec<f64>,
    pub repetitions: usize,
}

fn permute_group(table: &mut FeatureTable, group: usize, perm: &[usize]) {
    let src = table.clone();
    for (row, &from) in perm.iter().enumerate() {
        if group < LEAD_TIMES {
            // The forecast at this lead enters both the features and the
            // head anchors; both move together.
            for c in lead_columns(group) {
                table.features[[row, c]] = src.features[[from, c]];
            }
            table.ens_mean[[row, group]] = src.ens_mean[[from, group]];
            table.ens_std[[row, group]] = src.ens_std[[from, group]];
        } else {
            for c in static_columns() {
                table.features[[row, c]] = src.features[[from, c]];
            }
        }
    }
}

pub fn permutation_importance<R: Rng + ?Sized>(
    model: &Model,
    table: &FeatureTable,
    opts: ImportanceOptions,
    rng: &mut R,
) -> Result<ImportanceMatrix> {
    if opts.repetitions == 0 {
        return Err(Error::contract("importance needs at least one repetition"));
    }
    if table.is_empty() {
        return Err(Error::contract("importance needs a non-empty evaluation set"));
    }
    let baseline = model.lead_losses(table)?;
    let mut values = Array2::zeros((LEAD_TIMES, IMPORTANCE_GROUPS));
    for group in 0..IMPORTANCE_GROUPS {
        for _ in 0..opts.repetitions {
            let mut perm: Vec<usize> = (0..table.len()).collect();
            if !opts.identity {
                perm.shuffle(rng);
            }
            let mut permuted = table.clone();
            permute_group(&mut permuted, group, &perm);
            let losses = model.lead_losses(&permuted)?;
            for j in 0..LEAD_TIMES {
                values[[j, group]] += losses[j] - baseline[j];
            }
        }
    }
    values /= opts.repetitions as f64;
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "importance entry (lead {}, group {}) is not finite",
            bad / IMPORTANCE_GROUPS,
            bad % IMPORTANCE_GROUPS
        )));
    }
    Ok(ImportanceMatrix {
        values,
        baseline,
        repetitions: opts.repetitions,
    })
}
