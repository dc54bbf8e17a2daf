use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam moments for one parameter store.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl OptimState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = |p: &ParamStore| p.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            first: zeros(params),
            second: zeros(params),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of every parameter in `params`.
pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut OptimState) -> Result<()> {
    contract!(
        grads.len() == params.len() && state.first.len() == params.len(),
        "adam: {} params, {} grads, {} moment slots",
        params.len(),
        grads.len(),
        state.first.len()
    );
    for ((p, g), m) in params.tensors().iter().zip(grads).zip(&state.first) {
        contract!(
            p.shape() == g.shape() && p.shape() == m.shape(),
            "adam shape mismatch: param {:?}, grad {:?}, moment {:?}",
            p.shape(),
            g.shape(),
            m.shape()
        );
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let tensors = params.tensors_mut();
    for (i, g) in grads.iter().enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let p = tensors[i].data_mut();
        for (j, &gj) in g.data().iter().enumerate() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            p[j] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
