use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Bias-corrected Adam state over a list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Default hyperparameters: alpha 0.001, beta1 0.9, beta2 0.999,
    /// epsilon 1e-8.
    pub fn new(params: &[Tensor]) -> Self {
        Self::with_hyperparams(params, 0.001, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(params: &[Tensor], alpha: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            step_count: 0,
            first_moment: params.iter().map(Tensor::zeros_like).collect(),
            second_moment: params.iter().map(Tensor::zeros_like).collect(),
            alpha,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One Adam update. `params` and `grads` must match the shapes the state was
/// built with; a non-finite gradient aborts with a training-diverged error
/// before any parameter is touched.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::InvalidArgument(format!(
            "adam_step: {} params, {} grads, state built for {}",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (p, g) in params.iter().zip(grads.iter()) {
        if p.shape() != g.shape() {
            return Err(Error::InvalidArgument(format!(
                "adam_step: parameter shape {:?} does not match gradient shape {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::TrainingDiverged {
                step: (state.step_count + 1) as usize,
                detail: "non-finite gradient".into(),
            });
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        let p = params[i].data_mut();
        let g = grads[i].data();
        for j in 0..p.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= state.alpha * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
