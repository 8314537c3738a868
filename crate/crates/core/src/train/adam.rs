//! The ADAM optimizer with optional global-norm gradient clipping.

use crate::autodiff::{Params, Tensor};

pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Apply one update from the accumulated gradients, then zero them.
    /// Frozen parameters are untouched. Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut Params, clip_norm: Option<f64>) -> f64 {
        if self.m.is_empty() {
            for (_, entry) in params.iter() {
                self.m.push(Tensor::zeros(entry.value.shape()));
                self.v.push(Tensor::zeros(entry.value.shape()));
            }
        }
        let norm = params.grad_norm();
        let clip_scale = match clip_norm {
            Some(c) if norm > c && norm > 0.0 => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            if !params.entry(id).trainable {
                params.grad_mut(id).data_mut().iter_mut().for_each(|g| *g = 0.0);
                continue;
            }
            let idx = id.index();
            for k in 0..params.value(id).len() {
                let g = params.grad(id).data()[k] * clip_scale;
                let m = &mut self.m[idx].data_mut()[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                let v = &mut self.v[idx].data_mut()[k];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                params.value_mut(id).data_mut()[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            params.grad_mut(id).data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut params = Params::new();
        let w = params.add("w", Tensor::from_vec(&[2], vec![1.0, -1.0]));
        params.grad_mut(w).data_mut().copy_from_slice(&[0.5, 0.25]);
        let before = params.value(w).clone();
        Adam::new(0.0).step(&mut params, None);
        assert_eq!(params.value(w), &before);
        assert_eq!(params.grad(w).data(), &[0.0, 0.0], "gradients reset after the step");
    }

    #[test]
    fn steps_descend_a_quadratic() {
        let mut params = Params::new();
        let w = params.add("w", Tensor::from_vec(&[1], vec![3.0]));
        let mut adam = Adam::new(0.1);
        for _ in 0..200 {
            let x = params.value(w).data()[0];
            params.grad_mut(w).data_mut()[0] = 2.0 * x;
            adam.step(&mut params, None);
        }
        assert!(params.value(w).data()[0].abs() < 0.05);
    }

    #[test]
    fn clipping_caps_the_applied_gradient() {
        let mut params = Params::new();
        let w = params.add("w", Tensor::from_vec(&[1], vec![0.0]));
        params.grad_mut(w).data_mut()[0] = 1000.0;
        let mut adam = Adam::new(0.1);
        let norm = adam.step(&mut params, Some(5.0));
        assert_eq!(norm, 1000.0, "reported norm is pre-clip");
        // first adam step moves by about lr regardless, so check via m state:
        // a second zero-grad step keeps moving from momentum, bounded
        let after = params.value(w).data()[0];
        assert!(after.abs() <= 0.2, "step magnitude bounded, got {}", after);
    }

    #[test]
    fn frozen_parameters_never_move() {
        let mut params = Params::new();
        let w = params.add_frozen("emb", Tensor::from_vec(&[1], vec![2.0]));
        params.grad_mut(w).data_mut()[0] = 10.0;
        Adam::new(0.5).step(&mut params, None);
        assert_eq!(params.value(w).data(), &[2.0]);
    }
}
