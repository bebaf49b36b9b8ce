use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Advances the moments with `grad` and writes the bias-corrected update
    /// `lr * m_hat / (sqrt(v_hat) + eps)` into `out`. The caller subtracts it.
    pub fn direction_into(&mut self, grad: &[f64], out: &mut [f64]) {
        assert_eq!(grad.len(), self.m.len(), "gradient length");
        assert_eq!(out.len(), self.m.len(), "output length");
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..grad.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            out[i] = lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    pub fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; grad.len()];
        self.direction_into(grad, &mut out);
        out
    }

    /// One full Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let delta = self.direction(grad);
        for (p, d) in params.iter_mut().zip(&delta) {
            *p -= d;
        }
    }
}
