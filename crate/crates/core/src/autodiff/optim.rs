use super::params::ParameterStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new(1e-3)
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Bias-corrected adaptive-moment update of every parameter holding a
    /// gradient. Gradients are consumed. Parameters without a gradient keep
    /// their value and moments.
    pub fn step(&self, store: &mut ParameterStore) -> Result<()> {
        if store.iter().all(|p| p.grad.is_none()) {
            return Err(Error::State(
                "optimizer step without gradients; run backward first".into(),
            ));
        }
        store.step += 1;
        let t = store.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for p in store.params_mut() {
            let Some(g) = p.grad.take() else {
                continue;
            };
            let x = p.value.data_mut();
            for i in 0..g.len() {
                p.m[i] = self.beta1 * p.m[i] + (1.0 - self.beta1) * g[i];
                p.v[i] = self.beta2 * p.v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = p.m[i] / c1;
                let v_hat = p.v[i] / c2;
                x[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
