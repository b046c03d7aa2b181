use serde::{Deserialize, Serialize};

use super::NetParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay applied to weight matrices only.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1.0,
        }
    }
}

/// Adaptive-moment optimizer state shaped like the parameters it updates.
pub struct Adam {
    cfg: AdamConfig,
    m: NetParams,
    v: NetParams,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, like: &NetParams) -> Self {
        Adam {
            cfg,
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut NetParams, grad: &NetParams) {
        self.t += 1;
        let AdamConfig {
            step_size,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let mask = params.decay_mask();
        for ((((p, g), m), v), decays) in params
            .slices_mut()
            .into_iter()
            .zip(grad.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
            .zip(mask)
        {
            let shrink = if decays {
                1.0 - step_size * weight_decay
            } else {
                1.0
            };
            for i in 0..p.len() {
                p[i] *= shrink;
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= step_size * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
