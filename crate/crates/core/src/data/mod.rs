//! Datasets, features and the synthetic generator.

mod dataset;
mod features;
mod synthetic;
mod truth;

pub use dataset::{load_dataset, save_dataset, ForecastDataset, Manifest, StationMeta, SyntheticTruth};
pub use features::{
    all_samples, ensemble_stats, lead_columns, make_batches, seasonal_encoding, split_by_year, static_columns,
    FeatureStats, FeatureTable, SampleKey, STATIC_FEATURES,
};
pub use synthetic::{generate_synthetic, GeneratorConfig, SyntheticPair};
pub use truth::{TruthConfig, TruthLaw, TruthMode};
