//! Comparison models: least-squares linear regression and gradient-boosted
//! regression trees.

mod gbt;
mod linear;

pub use gbt::{fit_gbt, GbtConfig, GbtModel, RegressionTree, TreeNode};
pub use linear::{fit_linear, LinearModel, DEFAULT_RIDGE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("normal equations are numerically singular (pivot {pivot:e} at column {column})")]
    SingularSystem { column: usize, pivot: f64 },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// Either baseline, for code that handles them uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineModel {
    Linear(LinearModel),
    Gbt(GbtModel),
}

impl BaselineModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        predict_baseline(self, features)
    }
}

pub fn predict_baseline(model: &BaselineModel, features: &[f64]) -> f64 {
    match model {
        BaselineModel::Linear(m) => m.predict(features),
        BaselineModel::Gbt(m) => m.predict(features),
    }
}
