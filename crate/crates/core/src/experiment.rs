//! End-to-end runs shared by the CLI and the service: read a CSV, prepare the
//! split, fit the network and both baselines, score them on the test rows.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{fit_gbt, fit_linear, BaselineError, GbtConfig, DEFAULT_RIDGE};
use crate::dataset::{parse_csv, prepare, ColumnMap, DatasetError, FeatureMatrix, PrepareConfig, PreparedData, SensorRecord};
use crate::metrics::{compare_models, evaluate, ComparisonTable, MetricsError, MetricsReport, ModelRow};
use crate::model_file::{ModelFileError, Regressor, SavedModel};
use crate::nn::{train, NnError, TrainConfig, DEFAULT_HIDDEN};

/// The sample dataset bundled with the crate.
pub const SAMPLE_CSV: &str = include_str!("../data/beach_sensors_sample.csv");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error("model was fitted with different preprocessing than this data and split produce")]
    PreprocessorMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub prepare: PrepareConfig,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub ridge: f64,
    pub gbt: GbtConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            prepare: PrepareConfig::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            train: TrainConfig::default(),
            ridge: DEFAULT_RIDGE,
            gbt: GbtConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Uses one seed for the split, network initialisation, shuffling and GBT.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.prepare.seed = seed;
        self.train.seed = seed;
        self.gbt.seed = seed;
        self
    }
}

/// The JSON document written by `evaluate` and served by `GET /api/metrics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub seed: u64,
    pub test_fraction: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Ranked by ascending RMSE.
    pub models: Vec<ModelRow>,
}

impl MetricsFile {
    pub fn get(&self, model: &str) -> Option<&ModelRow> {
        self.models.iter().find(|r| r.model == model)
    }

    pub fn table(&self) -> ComparisonTable {
        ComparisonTable {
            rows: self.models.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub data: PreparedData,
    pub dnn: SavedModel,
    pub linear: SavedModel,
    pub gbt: SavedModel,
    pub loss_history: Vec<f64>,
    pub metrics: MetricsFile,
}

pub fn read_records<R: Read>(source: R) -> Result<Vec<SensorRecord>, ExperimentError> {
    Ok(parse_csv(source, &ColumnMap::default())?)
}

pub fn sample_records() -> Vec<SensorRecord> {
    read_records(SAMPLE_CSV.as_bytes()).expect("bundled sample parses")
}

pub fn score(model: &Regressor, data: &FeatureMatrix) -> Result<MetricsReport, ExperimentError> {
    let pred: Vec<f64> = (0..data.rows()).map(|i| model.predict_row(data.row(i))).collect();
    Ok(evaluate(&data.y, &pred)?)
}

/// Prepares the data and fits the network only.
pub fn train_dnn(
    records: &[SensorRecord],
    cfg: &ExperimentConfig,
) -> Result<(PreparedData, SavedModel, Vec<f64>), ExperimentError> {
    let data = prepare(records, &cfg.prepare)?;
    let (params, history) = train(&data.train, &cfg.hidden, &cfg.train)?;
    let model = SavedModel::new(data.preprocessor.clone(), Regressor::Dnn(params))?;
    Ok((data, model, history))
}

/// Fits the network and both baselines on the same split and ranks them on the test rows.
/// With `pretrained`, that network is scored instead of training a new one; it must
/// have been fitted on the same data and split.
pub fn run_experiment(
    records: &[SensorRecord],
    cfg: &ExperimentConfig,
    pretrained: Option<SavedModel>,
) -> Result<Experiment, ExperimentError> {
    let (data, dnn, loss_history) = match pretrained {
        Some(model) => {
            let data = prepare(records, &cfg.prepare)?;
            if model.preprocessor != data.preprocessor {
                return Err(ExperimentError::PreprocessorMismatch);
            }
            (data, model, Vec::new())
        }
        None => train_dnn(records, cfg)?,
    };
    let linear = Regressor::Linear(fit_linear(&data.train, cfg.ridge)?);
    let gbt = Regressor::Gbt(fit_gbt(&data.train, &cfg.gbt)?);

    let mut reports = BTreeMap::new();
    reports.insert("dnn".to_string(), score(&dnn.model, &data.test)?);
    reports.insert("linear".to_string(), score(&linear, &data.test)?);
    reports.insert("gbt".to_string(), score(&gbt, &data.test)?);
    let metrics = MetricsFile {
        seed: cfg.prepare.seed,
        test_fraction: cfg.prepare.test_fraction,
        train_rows: data.train.rows(),
        test_rows: data.test.rows(),
        models: compare_models(&reports)?.rows,
    };
    let preprocessor = data.preprocessor.clone();
    Ok(Experiment {
        linear: SavedModel::new(preprocessor.clone(), linear)?,
        gbt: SavedModel::new(preprocessor, gbt)?,
        data,
        dnn,
        loss_history,
        metrics,
    })
}
