use std::collections::BTreeMap;

use crate::model::{Gradients, Matrix, ParamId, ParamStore};

/// Adam with bias correction; only parameters present in the gradient set move.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: BTreeMap<ParamId, (Matrix, Matrix)>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, moments: BTreeMap::new() }
    }
}

impl Adam {
    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (id, g) in grads.iter() {
            if !store.is_trainable(id) {
                continue;
            }
            let (m, v) = self
                .moments
                .entry(id)
                .or_insert_with(|| (Matrix::zeros(g.rows(), g.cols()), Matrix::zeros(g.rows(), g.cols())));
            let w = store.value_mut(id).data_mut();
            for (k, &gk) in g.data().iter().enumerate() {
                let mk = &mut m.data_mut()[k];
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * gk;
                let vk = &mut v.data_mut()[k];
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * gk * gk;
                let m_hat = m.data()[k] / c1;
                let v_hat = v.data()[k] / c2;
                w[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
