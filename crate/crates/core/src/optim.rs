//! Adam / AdamW parameter updates shared by model training and logit search.

use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay (AdamW); 0 gives plain Adam.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment state for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Tensor,
    v: Tensor,
    step: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> AdamState {
        AdamState {
            m: Tensor::zeros(rows, cols),
            v: Tensor::zeros(rows, cols),
            step: 0,
        }
    }

    pub fn for_param(param: &Tensor) -> AdamState {
        AdamState::new(param.rows(), param.cols())
    }

    pub fn step(&mut self, param: &mut Tensor, grad: &Tensor, cfg: &AdamConfig) {
        debug_assert_eq!(param.shape(), grad.shape());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for idx in 0..param.data().len() {
            let g = grad.data()[idx];
            let m = cfg.beta1 * self.m.data()[idx] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * self.v.data()[idx] + (1.0 - cfg.beta2) * g * g;
            self.m.data_mut()[idx] = m;
            self.v.data_mut()[idx] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let p = &mut param.data_mut()[idx];
            *p -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_descends_a_quadratic() {
        // minimize (x - 3)^2 from x = 0
        let mut param = Tensor::scalar(0.0);
        let mut state = AdamState::for_param(&param);
        let cfg = AdamConfig::with_lr(0.1);
        for _ in 0..500 {
            let grad = Tensor::scalar(2.0 * (param.scalar_value() - 3.0));
            state.step(&mut param, &grad, &cfg);
        }
        assert!((param.scalar_value() - 3.0).abs() < 1e-3);
    }

    #[test]
    fn zero_gradient_leaves_param_unchanged() {
        let mut param = Tensor::scalar(1.25);
        let mut state = AdamState::for_param(&param);
        let cfg = AdamConfig::with_lr(1.5);
        for _ in 0..10 {
            state.step(&mut param, &Tensor::scalar(0.0), &cfg);
        }
        assert_eq!(param.scalar_value(), 1.25);
    }
}
