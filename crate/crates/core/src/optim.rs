//! Adaptive-moment (Adam) first-order optimizer.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::float::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One update of `x` along `-grad` with step size `lr`.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64], lr: f64) {
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            x[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_has_size_lr() {
        let mut adam = Adam::new(2, AdamConfig::default());
        let mut x = [1.0, -2.0];
        adam.step(&mut x, &[3.0, -0.5], 0.01);
        assert!((x[0] - 0.99).abs() < 1e-9);
        assert!((x[1] + 1.99).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut adam = Adam::new(3, AdamConfig::default());
        let target = [0.3, -1.2, 2.0];
        let mut x = [0.0; 3];
        for i in 0..3000 {
            let g: Vec<f64> = x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            let lr = 0.05 * 0.999f64.powi(i);
            adam.step(&mut x, &g, lr);
        }
        for (a, b) in x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
