//! SGD with Nesterov momentum and decoupled-from-nothing L2 weight decay,
//! matching the usual `torch.optim.SGD(nesterov=True)` update.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Linear learning-rate warmup length in optimizer steps.
    pub warmup_steps: usize,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.937,
            weight_decay: 0.0005,
            epochs: 20,
            batch_size: 8,
            warmup_steps: 0,
            clip_norm: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: SgdConfig,
    velocity: Vec<f64>,
    step: usize,
}

impl Sgd {
    pub fn new(cfg: SgdConfig, n_params: usize) -> Self {
        Self {
            cfg,
            velocity: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        if self.cfg.warmup_steps > 0 && self.step < self.cfg.warmup_steps {
            self.cfg.lr * (self.step + 1) as f64 / self.cfg.warmup_steps as f64
        } else {
            self.cfg.lr
        }
    }

    /// Applies one update. `decay_mask[k]` selects which parameters receive
    /// weight decay (biases usually do not).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], decay_mask: &[bool]) {
        debug_assert_eq!(params.len(), self.velocity.len());
        debug_assert_eq!(grads.len(), params.len());
        let lr = self.current_lr();
        let mu = self.cfg.momentum;
        let scale = if self.cfg.clip_norm > 0.0 {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > self.cfg.clip_norm {
                self.cfg.clip_norm / norm
            } else {
                1.0
            }
        } else {
            1.0
        };
        for k in 0..params.len() {
            let mut g = grads[k] * scale;
            if decay_mask.get(k).copied().unwrap_or(true) {
                g += self.cfg.weight_decay * params[k];
            }
            let v = mu * self.velocity[k] + g;
            self.velocity[k] = v;
            params[k] -= lr * (g + mu * v);
        }
        self.step += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lr_leaves_params() {
        let mut opt = Sgd::new(
            SgdConfig {
                lr: 0.0,
                ..SgdConfig::default()
            },
            2,
        );
        let mut p = vec![1.0, -2.0];
        opt.step(&mut p, &[3.0, 4.0], &[true, true]);
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn nesterov_update_by_hand() {
        let cfg = SgdConfig {
            lr: 0.1,
            momentum: 0.5,
            weight_decay: 0.0,
            ..SgdConfig::default()
        };
        let mut opt = Sgd::new(cfg, 1);
        let mut p = vec![1.0];
        opt.step(&mut p, &[2.0], &[true]);
        // v = 2, p = 1 - 0.1 * (2 + 0.5 * 2)
        assert!((p[0] - 0.7).abs() < 1e-12);
        opt.step(&mut p, &[2.0], &[true]);
        // v = 0.5 * 2 + 2 = 3, p = 0.7 - 0.1 * (2 + 1.5)
        assert!((p[0] - 0.35).abs() < 1e-12);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Sgd::new(SgdConfig::default(), 1);
        let mut p = vec![5.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.5)];
            opt.step(&mut p, &g, &[false]);
        }
        assert!((p[0] - 1.5).abs() < 1e-6);
    }
}
