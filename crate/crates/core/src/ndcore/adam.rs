use alloc::string::ToString;
use alloc::vec::Vec;
use num_traits::Float;

use super::{ParamStore, Real, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros: Vec<_> = store
            .tensors()
            .iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.v
    }

    /// One bias-corrected Adam update. Nothing is modified when any gradient
    /// is non-finite or mis-shaped.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: alloc::vec![store.len()],
                right: alloc::vec![grads.len()],
            });
        }
        for (i, g) in grads.iter().enumerate() {
            let p = store.get(i);
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(store.name(i).to_string()));
            }
        }

        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let bc1 = 1.0 - Float::powi(c.beta1, t);
        let bc2 = 1.0 - Float::powi(c.beta2, t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        let inv_bc1 = T::lit(1.0 / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);

        for (i, g) in grads.iter().enumerate() {
            let p = store.get_mut(i).data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((pj, mj), vj), &gj) in p.iter_mut().zip(m).zip(v).zip(g.data()) {
                *mj = b1 * *mj + one_b1 * gj;
                *vj = b2 * *vj + one_b2 * gj * gj;
                let m_hat = *mj * inv_bc1;
                let v_hat = *vj * inv_bc2;
                *pj = *pj - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
