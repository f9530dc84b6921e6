use serde::{Deserialize, Serialize};

use super::{Gradients, ModelParameters, NnError, TrainConfig};

/// First and second moment estimates with the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ModelParameters,
    pub v: ModelParameters,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParameters) -> AdamState {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update, applied in place.
pub fn adam_step(
    params: &mut ModelParameters,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<(), NnError> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(NnError::ShapeMismatch);
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = cfg.learning_rate;
    let eps = cfg.epsilon;

    let slices = params
        .slices_mut()
        .zip(grads.slices())
        .zip(state.m.slices_mut().zip(state.v.slices_mut()));
    for ((theta, g), (m, v)) in slices {
        for i in 0..theta.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
