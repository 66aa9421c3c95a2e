//! First-order optimizers and learning-rate schedules over flat buffers.

use serde::{Deserialize, Serialize};

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Cosine decay from the base rate to zero over all steps.
    Cosine,
    Flat,
    /// Linear warmup over the first 10 steps, then constant.
    WarmupThenFlat,
}

pub const WARMUP_STEPS: usize = 10;

impl Schedule {
    pub fn factor(self, step: usize, total_steps: usize) -> f64 {
        match self {
            Schedule::Flat => 1.0,
            Schedule::Cosine => {
                let t = step as f64 / total_steps.max(1) as f64;
                0.5 * (1.0 + (std::f64::consts::PI * t.min(1.0)).cos())
            }
            Schedule::WarmupThenFlat => ((step + 1) as f64 / WARMUP_STEPS as f64).min(1.0),
        }
    }
}

/// AdamW with decoupled weight decay: `w ← w(1 − lr·wd)` before the Adam step.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(len: usize, beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        Self { beta1, beta2, weight_decay, eps: ADAM_EPS, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let decay = 1.0 - lr * self.weight_decay;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] = params[i] * decay - lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Plain SGD with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub weight_decay: f64,
}

impl Sgd {
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        for (p, g) in params.iter_mut().zip(grad) {
            *p -= lr * (g + self.weight_decay * *p);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    AdamW(AdamW),
    Sgd(Sgd),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            Optimizer::AdamW(o) => o.step(params, grad, lr),
            Optimizer::Sgd(o) => o.step(params, grad, lr),
        }
    }
}
