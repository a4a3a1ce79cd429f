use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::param::Parameter;

/// Adam hyperparameters; weight decay is decoupled from the adaptive step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Element> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Parameter<T>]) -> Self {
        Self {
            config,
            m: params.iter().map(|p| vec![T::zero(); p.value.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.value.len()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update from the gradients stored in `params`, which are zeroed afterwards.
    pub fn step(&mut self, params: &mut [Parameter<T>]) {
        assert_eq!(params.len(), self.m.len(), "parameter list changed under the optimizer");
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.t as i32));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let decay = T::one() - T::lit(c.lr * c.weight_decay);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Parameter { value, grad, .. } = p;
            for (((w, &g), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + one_b1 * g;
                *vi = b2 * *vi + one_b2 * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
                *w *= decay;
            }
            p.zero_grad();
        }
    }
}
