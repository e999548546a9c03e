//! Adam optimizer exposing the applied step.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        AdamState { config, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    #[inline]
    fn moments(&self, i: usize, g: f32) -> (f32, f32) {
        let c = &self.config;
        (c.beta1 * self.m[i] + (1.0 - c.beta1) * g, c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g)
    }

    #[inline]
    fn step_for(&self, m: f32, v: f32, t: u64) -> f32 {
        let c = &self.config;
        let m_hat = m / (1.0 - c.beta1.powi(t as i32));
        let v_hat = v / (1.0 - c.beta2.powi(t as i32));
        -c.lr * m_hat / (v_hat.sqrt() + c.eps)
    }

    /// Applies one update and returns `new_params - old_params`.
    pub fn step(&mut self, params: &mut [f32], grad: &[f32]) -> Vec<f32> {
        assert_eq!(params.len(), self.m.len(), "parameter count");
        assert_eq!(grad.len(), self.m.len(), "gradient size");
        self.t += 1;
        let mut delta = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let (m, v) = self.moments(i, grad[i]);
            self.m[i] = m;
            self.v[i] = v;
            let old = params[i];
            params[i] = old + self.step_for(m, v, self.t);
            delta.push(params[i] - old);
        }
        delta
    }

    /// L2 norm of the step this gradient alone would produce from the
    /// current moments, which are left untouched.
    pub fn step_norm_for_patch(&self, grad: &[f32]) -> f64 {
        assert_eq!(grad.len(), self.m.len(), "gradient size");
        let t = self.t + 1;
        let mut sum = 0.0f64;
        for (i, &g) in grad.iter().enumerate() {
            let (m, v) = self.moments(i, g);
            let s = self.step_for(m, v, t) as f64;
            sum += s * s;
        }
        sum.sqrt()
    }
}

pub fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}
