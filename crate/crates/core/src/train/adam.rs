//! Adam with bias correction and decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Network;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: applied directly to the weights, scaled by the
    /// current learning rate, and skipped for biases and BN affine params.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0015,
        }
    }
}

pub struct Adam<F> {
    pub cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    /// Apply one update from the gradients currently stored in the network's
    /// parameters.
    pub fn step(&mut self, net: &mut Network<F>) -> Result<()> {
        self.t += 1;
        let t = self.t as i32;
        let lr = F::from_f64_c(self.cfg.lr);
        let b1 = F::from_f64_c(self.cfg.beta1);
        let b2 = F::from_f64_c(self.cfg.beta2);
        let eps = F::from_f64_c(self.cfg.eps);
        let wd = F::from_f64_c(self.cfg.weight_decay);
        let corr1 = F::from_f64_c(1.0 - self.cfg.beta1.powi(t));
        let corr2 = F::from_f64_c(1.0 - self.cfg.beta2.powi(t));

        let m_store = &mut self.m;
        let v_store = &mut self.v;
        let mut ordinal = 0;
        net.visit_params(&mut |p| {
            if m_store.len() <= ordinal {
                m_store.push(vec![F::zero(); p.value.len()]);
                v_store.push(vec![F::zero(); p.value.len()]);
            }
            let m = &mut m_store[ordinal];
            let v = &mut v_store[ordinal];
            for i in 0..p.value.len() {
                let g = p.grad.data[i];
                m[i] = b1 * m[i] + (F::one() - b1) * g;
                v[i] = b2 * v[i] + (F::one() - b2) * g * g;
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                let mut update = lr * m_hat / (v_hat.sqrt() + eps);
                if p.decay {
                    update += lr * wd * p.value.data[i];
                }
                p.value.data[i] -= update;
            }
            ordinal += 1;
        });
        Ok(())
    }
}
