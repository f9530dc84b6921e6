use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::dataset::FeatureMatrix;

/// Tikhonov term used unless the caller asks for the strict (ridge = 0) solve.
pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// Minimizes Σ(ŷ−y)² + ridge·‖w‖² through the normal equations. The bias is the
/// weight of an appended constant column and is not penalized.
pub fn fit_linear(train: &FeatureMatrix, ridge: f64) -> Result<LinearModel, BaselineError> {
    if train.rows() == 0 {
        return Err(BaselineError::EmptyTrainingSet);
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(BaselineError::BadParameter(format!("ridge = {ridge}")));
    }
    let p = train.cols + 1;
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    let mut z = vec![1.0; p];
    for i in 0..train.rows() {
        z[..train.cols].copy_from_slice(train.row(i));
        let y = train.y[i];
        for r in 0..p {
            b[r] += z[r] * y;
            for c in 0..=r {
                a[r * p + c] += z[r] * z[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            a[c * p + r] = a[r * p + c];
        }
    }
    for j in 0..train.cols {
        a[j * p + j] += ridge;
    }
    let sol = cholesky_solve(&mut a, &mut b, p)?;
    Ok(LinearModel {
        weights: sol[..train.cols].to_vec(),
        bias: sol[train.cols],
    })
}

/// In-place Cholesky factorization and solve of the SPD system `a·x = b`.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>, BaselineError> {
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let tol = max_diag * 64.0 * f64::EPSILON;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d.is_nan() || d <= tol {
            return Err(BaselineError::SingularSystem { column: j, pivot: d });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    // L·u = b, then Lᵀ·x = u
    for i in 0..n {
        let s: f64 = (0..i).map(|k| a[i * n + k] * b[k]).sum();
        b[i] = (b[i] - s) / a[i * n + i];
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[k * n + i] * b[k]).sum();
        b[i] = (b[i] - s) / a[i * n + i];
    }
    Ok(b.to_vec())
}
