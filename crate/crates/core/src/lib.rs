//! Post-processing of ensemble temperature forecasts with neural
//! distribution heads.
//!
//! A residual dense network maps per-station ensemble statistics and
//! station metadata to the parameters of a predictive law for each of 21
//! lead times. Three heads are provided: a rational-quadratic spline flow
//! ([`heads::HeadKind::Flow`]), a normal law and a Bernstein quantile
//! function. Training, prediction, verification metrics and permutation
//! importance sit on top.

// `!(a > b)` is used on purpose so NaN fails the check; index loops mirror
// the formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod flow;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod net;
pub mod predict;
pub mod real;
pub mod rng;
pub mod stats;
pub mod train;

pub use error::{Error, Result};

/// Lead times per forecast (six-hourly steps).
pub const LEAD_TIMES: usize = 21;
/// Network inputs: ensemble mean and spread per lead time plus six static
/// predictors.
pub const INPUT_DIM: usize = 2 * LEAD_TIMES + data::STATIC_FEATURES;
