use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::dataset::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    /// Fraction of rows each tree is fitted on. 1.0 disables sampling.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_trees: 100,
            max_depth: 3,
            shrinkage: 0.1,
            subsample: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned regression tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_prediction: f64,
    pub shrinkage: f64,
    pub trees: Vec<RegressionTree>,
}

impl GbtModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base_prediction + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Finds the split minimizing the summed squared error of both children.
/// Candidates are midpoints between consecutive distinct feature values.
fn best_split(data: &FeatureMatrix, residual: &[f64], rows: &[usize]) -> Option<BestSplit> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| residual[i]).sum();
    // SSE = Σr² − S_L²/n_L − S_R²/n_R, so maximize the last two terms
    let parent = total * total / n as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    let mut sorted = rows.to_vec();
    for f in 0..data.cols {
        let val = |i: usize| data.x[i * data.cols + f];
        sorted.sort_by(|&a, &b| val(a).total_cmp(&val(b)));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += residual[sorted[k]];
            let (v, next) = (val(sorted[k]), val(sorted[k + 1]));
            if v == next {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (n - k - 1) as f64;
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / nl + right_sum * right_sum / nr;
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((f, v + (next - v) / 2.0, score));
            }
        }
    }
    let (feature, threshold, score) = best?;
    if score - parent <= 1e-12 * parent.abs().max(1.0) {
        return None;
    }
    let (left, right) = rows
        .iter()
        .partition(|&&i| data.x[i * data.cols + feature] < threshold);
    Some(BestSplit {
        feature,
        threshold,
        score,
        left,
        right,
    })
}

fn build(
    data: &FeatureMatrix,
    residual: &[f64],
    rows: &[usize],
    depth_left: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let id = nodes.len();
    let mean = rows.iter().map(|&i| residual[i]).sum::<f64>() / rows.len().max(1) as f64;
    nodes.push(TreeNode::Leaf { value: mean });
    if depth_left == 0 {
        return id;
    }
    if let Some(split) = best_split(data, residual, rows) {
        debug_assert!(split.score.is_finite());
        let left = build(data, residual, &split.left, depth_left - 1, nodes);
        let right = build(data, residual, &split.right, depth_left - 1, nodes);
        nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
    }
    id
}

pub fn fit_tree(data: &FeatureMatrix, residual: &[f64], rows: &[usize], max_depth: usize) -> RegressionTree {
    let mut nodes = Vec::new();
    build(data, residual, rows, max_depth, &mut nodes);
    RegressionTree { nodes }
}

/// Stagewise least-squares boosting: each tree fits the current residuals.
pub fn fit_gbt(train: &FeatureMatrix, cfg: &GbtConfig) -> Result<GbtModel, BaselineError> {
    if train.rows() == 0 {
        return Err(BaselineError::EmptyTrainingSet);
    }
    if cfg.max_depth == 0 {
        return Err(BaselineError::BadParameter("max_depth must be >= 1".into()));
    }
    if !(cfg.shrinkage > 0.0 && cfg.shrinkage <= 1.0) {
        return Err(BaselineError::BadParameter("shrinkage must lie in (0, 1]".into()));
    }
    if !(cfg.subsample > 0.0 && cfg.subsample <= 1.0) {
        return Err(BaselineError::BadParameter("subsample must lie in (0, 1]".into()));
    }
    let n = train.rows();
    let base = train.y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let mut residual = vec![0.0; n];
    let all: Vec<usize> = (0..n).collect();
    let sample_size = ((n as f64 * cfg.subsample).round() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        for i in 0..n {
            residual[i] = train.y[i] - fitted[i];
        }
        let rows = if sample_size == n {
            all.clone()
        } else {
            let mut r = sample(&mut rng, n, sample_size).into_vec();
            r.sort_unstable();
            r
        };
        let tree = fit_tree(train, &residual, &rows, cfg.max_depth);
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += cfg.shrinkage * tree.predict(train.row(i));
        }
        trees.push(tree);
    }
    Ok(GbtModel {
        base_prediction: base,
        shrinkage: cfg.shrinkage,
        trees,
    })
}
