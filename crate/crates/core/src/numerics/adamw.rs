//! AdamW with decoupled weight decay.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamWConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        }
    }
}

/// Optimizer state: one (m, v) moment pair per parameter tensor, a shared
/// step counter, and the hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, shapes: &[Vec<usize>]) -> Self {
        let moments = shapes
            .iter()
            .map(|s| (Tensor::zeros(s.clone()), Tensor::zeros(s.clone())))
            .collect();
        AdamWState {
            config,
            step: 0,
            moments,
        }
    }

    /// One update over all parameter tensors. `grads[i]` is the gradient for
    /// `params[i]`; `None` means zero gradient (the parameter still decays).
    /// A non-finite gradient aborts the whole step, naming the parameter.
    pub fn step(
        &mut self,
        params: &mut [(&str, &mut Tensor)],
        grads: &[Option<Tensor>],
    ) -> Result<()> {
        if params.len() != self.moments.len() || grads.len() != params.len() {
            return Err(Error::Dimension {
                op: "adamw_step",
                detail: format!(
                    "{} params, {} moment pairs, {} grads",
                    params.len(),
                    self.moments.len(),
                    grads.len()
                ),
            });
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(Error::Dimension {
                        op: "adamw_step",
                        detail: format!(
                            "gradient shape {:?} vs parameter {name} shape {:?}",
                            g.shape(),
                            p.shape()
                        ),
                    });
                }
                if !g.all_finite() {
                    return Err(Error::NonFinite {
                        op: "adamw_step",
                        context: Some(format!("gradient of parameter {name}")),
                    });
                }
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);

        for (((_, p), g), (m, v)) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                // decoupled decay before the Adam update
                pd[i] -= c.lr * c.weight_decay * pd[i];
                let gi = g.as_ref().map_or(0.0, |g| g.data()[i]);
                md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gi;
                vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gi * gi;
                let m_hat = md[i] / bias1;
                let v_hat = vd[i] / bias2;
                pd[i] -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
