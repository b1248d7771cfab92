use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam moments over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self::with_hyper(num_params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(num_params: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected update over consecutive parameter blocks. The
    /// blocks must cover exactly the parameter count of this state.
    pub fn step_blocks(&mut self, blocks: &mut [(&mut [f64], &[f64])], lr: f64) -> Result<()> {
        let total: usize = blocks.iter().map(|(p, _)| p.len()).sum();
        if total != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: total,
            });
        }
        for (p, g) in blocks.iter() {
            if p.len() != g.len() {
                return Err(Error::Dimension {
                    expected: p.len(),
                    got: g.len(),
                });
            }
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite gradient {bad}")));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        let mut k = 0;
        for (p, g) in blocks.iter_mut() {
            for (pi, gi) in p.iter_mut().zip(g.iter()) {
                let m = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                let v = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                self.m[k] = m;
                self.v[k] = v;
                let m_hat = m / c1;
                let v_hat = v / c2;
                *pi -= lr * m_hat / (libm::sqrt(v_hat) + self.eps);
                k += 1;
            }
        }
        Ok(())
    }
}

/// Adam update of a single parameter vector.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    state.step_blocks(&mut [(params, grads)], lr)
}
