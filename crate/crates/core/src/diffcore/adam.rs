use ndarray::{Array2, Zip};

use super::{DiffError, Tensor};

/// Adam hyper-parameters. Defaults: β₁ = 0.9, β₂ = 0.95, ε = 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
    step: u64,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new<'a, I>(params: I, config: AdamConfig) -> Self
    where
        I: IntoIterator<Item = &'a Tensor>,
    {
        let first: Vec<_> = params.into_iter().map(|p| Array2::zeros(p.shape())).collect();
        let second = first.clone();
        Self {
            config,
            first,
            second,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Bias-corrected Adam update with learning rate `lr`.
    ///
    /// A parameter whose gradient is identically zero is left untouched
    /// (its moments still decay). Non-finite gradients are rejected before
    /// anything is modified.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<(), DiffError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(DiffError::StateMismatch(format!(
                "{} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].dim() {
                return Err(DiffError::StateMismatch(format!(
                    "parameter {i}: param {:?}, grad {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    self.first[i].dim()
                )));
            }
            if g.values().iter().any(|v| !v.is_finite()) {
                return Err(DiffError::NonFinite { op: "adam gradient" });
            }
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as f64;
        let correct1 = 1.0 - beta1.powf(t);
        let correct2 = 1.0 - beta2.powf(t);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let skip = g.is_all_zero();
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            Zip::from(&mut *m).and(&mut *v).and(g.values()).for_each(|m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
            });
            if skip {
                continue;
            }
            Zip::from(p.values_mut()).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let m_hat = m / correct1;
                let v_hat = v / correct2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
