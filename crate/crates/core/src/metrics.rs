//! Regression metrics and the model comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {truth} targets vs {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("no models to compare")]
    EmptyMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Explained variance score; higher is better, 1 is perfect.
    pub evs: f64,
    pub n: usize,
}

pub fn evaluate(y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(i) = y_true
        .iter()
        .zip(y_pred)
        .position(|(a, b)| !a.is_finite() || !b.is_finite())
    {
        return Err(MetricsError::NonFinite(i));
    }
    let n = y_true.len() as f64;
    let (mut abs_sum, mut sq_sum, mut res_sum, mut y_sum) = (0.0, 0.0, 0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = t - p;
        abs_sum += e.abs();
        sq_sum += e * e;
        res_sum += e;
        y_sum += t;
    }
    let (res_mean, y_mean) = (res_sum / n, y_sum / n);
    let (mut res_var, mut y_var) = (0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        res_var += (t - p - res_mean).powi(2);
        y_var += (t - y_mean).powi(2);
    }
    let (res_var, y_var) = (res_var / n, y_var / n);
    let evs = if y_var > 0.0 {
        1.0 - res_var / y_var
    } else if res_var == 0.0 {
        1.0
    } else {
        0.0
    };
    let mse = sq_sum / n;
    Ok(MetricsReport {
        mae: abs_sum / n,
        mse,
        rmse: mse.sqrt(),
        evs,
        n: y_true.len(),
    })
}

/// One row of the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub evs: f64,
    pub n: usize,
}

impl ModelRow {
    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            mae: self.mae,
            mse: self.mse,
            rmse: self.rmse,
            evs: self.evs,
            n: self.n,
        }
    }
}

/// Models ranked by ascending RMSE, then MAE, then name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ModelRow>,
}

impl ComparisonTable {
    pub fn get(&self, model: &str) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.rows).expect("rows serialize")
    }

    pub fn render_text(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<name_w$}  {:>12}  {:>14}  {:>12}  {:>10}  {:>6}",
            "model", "MAE", "MSE", "RMSE", "EVS", "n"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<name_w$}  {:>12.4}  {:>14.4}  {:>12.4}  {:>10.4}  {:>6}",
                r.model, r.mae, r.mse, r.rmse, r.evs, r.n
            );
        }
        s
    }
}

pub fn compare_models(
    reports: &BTreeMap<String, MetricsReport>,
) -> Result<ComparisonTable, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyMap);
    }
    let mut rows: Vec<ModelRow> = reports
        .iter()
        .map(|(name, r)| ModelRow {
            model: name.clone(),
            mae: r.mae,
            mse: r.mse,
            rmse: r.rmse,
            evs: r.evs,
            n: r.n,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.rmse
            .total_cmp(&b.rmse)
            .then(a.mae.total_cmp(&b.mae))
            .then_with(|| a.model.cmp(&b.model))
    });
    Ok(ComparisonTable { rows })
}
