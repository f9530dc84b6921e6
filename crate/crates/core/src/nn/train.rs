use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{accumulate_example, adam_step, init_network, AdamState, ModelParameters, NnError, Scratch};
use crate::dataset::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 500,
            batch_size: 32,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::BadConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        Ok(())
    }
}

/// Mini-batch ADAM training on the MSE loss. Returns the fitted parameters and the
/// mean training loss of each epoch (measured on the forward passes of that epoch).
pub fn train(
    data: &FeatureMatrix,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(ModelParameters, Vec<f64>), NnError> {
    cfg.validate()?;
    if data.rows() < cfg.batch_size {
        return Err(NnError::BadConfig(format!(
            "batch_size {} exceeds row count {}",
            cfg.batch_size,
            data.rows()
        )));
    }
    let mut params = init_network(data.cols, hidden, cfg.seed)?;
    let mut state = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut scratch = Scratch::new(&params);
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sse = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.slices_mut().for_each(|s| s.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_sse += accumulate_example(
                    &params,
                    data.row(i),
                    data.y[i],
                    scale,
                    &mut grads,
                    &mut scratch,
                );
            }
            adam_step(&mut params, &grads, &mut state, cfg)?;
        }
        let loss = epoch_sse / data.rows() as f64;
        if !loss.is_finite() {
            return Err(NnError::NonFinite);
        }
        history.push(loss);
    }
    Ok((params, history))
}
