use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layers::ParamRef;
use crate::error::{check_dim, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
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

/// One bias-corrected Adam update of `param` at step `t` (1-based).
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    check_dim("adam grad", param.len(), grad.len())?;
    check_dim("adam first moment", param.len(), m.len())?;
    check_dim("adam second moment", param.len(), v.len())?;
    if t == 0 {
        return Err(invalid("adam step counter starts at 1"));
    }
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
    Ok(())
}

/// Adam state for an ordered list of parameter arrays.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<ParamRef<'_>>, lr: f64) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.value.len()], vec![0.0; p.value.len()]))
                .collect();
        }
        check_dim("adam parameter count", self.moments.len(), params.len())?;
        self.step += 1;
        for (p, (m, v)) in params.into_iter().zip(self.moments.iter_mut()) {
            adam_update(p.value, p.grad, m, v, self.step, lr, &self.config)?;
        }
        Ok(())
    }
}

/// Step schedule: `base` for the first half of the epochs, `base/10` until
/// the last tenth, then `base/100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(base_lr: f64, total_epochs: usize) -> Result<Self> {
        if !(base_lr > 0.0) || !base_lr.is_finite() {
            return Err(invalid("base learning rate must be positive"));
        }
        Ok(Self {
            base_lr,
            total_epochs,
        })
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let e = self.total_epochs;
        // epoch >= ⌈9E/10⌉  <=>  10·epoch >= 9E
        if 10 * epoch >= 9 * e {
            self.base_lr / 100.0
        } else if 2 * epoch >= e {
            self.base_lr / 10.0
        } else {
            self.base_lr
        }
    }
}
