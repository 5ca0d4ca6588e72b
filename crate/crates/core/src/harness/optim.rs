use crate::model::ModelParams;

use super::config::OptimizerConfig;

/// Plain SGD or Adam over flattened parameters.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update in place.
    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let g = grads.flatten();
        let mut theta = params.flatten();
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for (t, g) in theta.iter_mut().zip(&g) {
                    *t -= lr * g;
                }
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
            } => {
                if self.m.is_empty() {
                    self.m = vec![0.0; g.len()];
                    self.v = vec![0.0; g.len()];
                }
                let c1 = 1.0 - beta1.powf(self.step as f64);
                let c2 = 1.0 - beta2.powf(self.step as f64);
                for i in 0..g.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
                    theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + epsilon);
                }
            }
        }
        params.set_flat(&theta).expect("gradient layout matches parameters");
    }
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.sum_squares().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
