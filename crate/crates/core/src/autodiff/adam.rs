//! Adam optimizer with bias correction.

use super::matrix::Matrix;
use super::params::ParamStore;
use super::TensorError;

/// Per-parameter first/second moment buffers plus step bookkeeping.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        Self::with_betas(store, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(store: &ParamStore, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let first = store
            .ids()
            .map(|id| {
                let (r, c) = store.value(id).shape();
                Matrix::zeros(r, c)
            })
            .collect::<Vec<_>>();
        let second = first.clone();
        Self {
            first,
            second,
            step: 0,
            lr,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Requires every parameter to carry a
    /// gradient; gradients are cleared afterwards.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), TensorError> {
        if !store.grads_populated() {
            return Err(TensorError::MissingGradients);
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, id) in store.ids().enumerate().collect::<Vec<_>>() {
            let grad = store.grad(id).expect("checked above").clone();
            let m = &mut self.first[idx];
            let v = &mut self.second[idx];
            for ((m_i, v_i), &g_i) in m
                .as_mut_slice()
                .iter_mut()
                .zip(v.as_mut_slice().iter_mut())
                .zip(grad.as_slice().iter())
            {
                *m_i = self.beta1 * *m_i + (1.0 - self.beta1) * g_i;
                *v_i = self.beta2 * *v_i + (1.0 - self.beta2) * g_i * g_i;
            }
            let value = store.value_mut(id);
            for ((w, &m_i), &v_i) in value
                .as_mut_slice()
                .iter_mut()
                .zip(m.as_slice().iter())
                .zip(v.as_slice().iter())
            {
                let m_hat = m_i / bc1;
                let v_hat = v_i / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        store.clear_grads();
        Ok(())
    }
}
