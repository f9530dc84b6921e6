//! Battery-life prediction for beach water sensors and the signed, hash-chained
//! ledger that records the predictions.

pub mod baselines;
pub mod dataset;
pub mod experiment;
pub mod ledger;
pub mod metrics;
pub mod model_file;
pub mod nn;
pub mod peer;

pub use dataset::{FeatureMatrix, PrepareConfig, Preprocessor, ScalingParams, SensorRecord};
pub use experiment::{ExperimentConfig, MetricsFile};
pub use ledger::{AuthorityKeys, AuthoritySet, BlockContent, ChainState, LedgerError, PredictionBlock};
pub use metrics::{MetricsReport, ModelRow};
pub use model_file::{Regressor, SavedModel};
pub use nn::{ModelParameters, TrainConfig};
