use super::{GcnModel, Gradients};
use crate::error::{Error, Result};
use crate::linalg::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient before the moment update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// Bias-corrected Adam over a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            t: 0,
            first: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn for_model(config: AdamConfig, model: &GcnModel<T>) -> Self {
        Self::new(
            config,
            &[model.w0.as_slice().len(), model.w1.as_slice().len()],
        )
    }

    /// One update of every tensor; `t` is incremented first.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Internal("adam tensor count mismatch".into()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Internal("adam tensor shape mismatch".into()));
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps, wd) = (T::of(c.lr), T::of(c.eps), T::of(c.weight_decay));
        let one = T::one();
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for idx in 0..p.len() {
                let grad = g[idx] + wd * p[idx];
                m[idx] = b1 * m[idx] + (one - b1) * grad;
                v[idx] = b2 * v[idx] + (one - b2) * grad * grad;
                let m_hat = m[idx] / bc1;
                let v_hat = v[idx] / bc2;
                p[idx] = p[idx] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_model(&mut self, model: &mut GcnModel<T>, grads: &Gradients<T>) -> Result<()> {
        if model.w0.shape() != grads.w0.shape() || model.w1.shape() != grads.w1.shape() {
            return Err(Error::Internal("gradient shapes do not match model".into()));
        }
        let GcnModel { w0, w1, .. } = model;
        self.step(
            &mut [w0.as_mut_slice(), w1.as_mut_slice()],
            &[grads.w0.as_slice(), grads.w1.as_slice()],
        )
    }
}
