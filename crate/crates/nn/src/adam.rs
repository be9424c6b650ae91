//! Adam with bias-corrected moment estimates.

use crate::tensor::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update of a single parameter slice. `t` is the 1-based step.
pub fn adam_update(
    param: &mut [f32],
    grad: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    lr: f32,
    cfg: AdamConfig,
    t: u64,
) {
    let bc1 = 1.0 - (cfg.beta1 as f64).powi(t as i32);
    let bc2 = 1.0 - (cfg.beta2 as f64).powi(t as i32);
    let (bc1, bc2) = (bc1 as f32, bc2 as f32);
    for i in 0..param.len() {
        let gi = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Optimizer state for one [`ModelParams`] store.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: &ModelParams, cfg: AdamConfig) -> Self {
        let m: Vec<Vec<f32>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            cfg,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies accumulated gradients and clears them. Parameters without a
    /// gradient this step keep their value and moments.
    pub fn step(&mut self, params: &mut ModelParams, lr: f32) {
        self.t += 1;
        for id in 0..params.len() {
            let tensor = params.tensor_mut(id);
            let Some(grad) = tensor.grad.take() else {
                continue;
            };
            if !tensor.requires_grad {
                continue;
            }
            adam_update(
                tensor.data_mut(),
                &grad,
                &mut self.m[id],
                &mut self.v[id],
                lr,
                self.cfg,
                self.t,
            );
        }
    }
}
