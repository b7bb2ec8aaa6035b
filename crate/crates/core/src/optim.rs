//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NetworkParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: NetworkParams,
    pub second_moment: NetworkParams,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(net: &NetworkParams, learning_rate: f64) -> Self {
        Self {
            first_moment: net.zeros_like(),
            second_moment: net.zeros_like(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Apply one update to `net` in place.
    pub fn step(&mut self, net: &mut NetworkParams, grads: &NetworkParams) -> Result<()> {
        if !net.same_shape(grads) || !net.same_shape(&self.first_moment) {
            return Err(Error::Shape("optimizer, gradient and parameter shapes differ".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);

        let params = net.tensors_mut();
        let ms = self.first_moment.tensors_mut();
        let vs = self.second_moment.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameters and optimizer state.
pub fn optimizer_step(
    net: &NetworkParams,
    grads: &NetworkParams,
    state: &OptimizerState,
) -> Result<(NetworkParams, OptimizerState)> {
    let mut net = net.clone();
    let mut state = state.clone();
    state.step(&mut net, grads)?;
    Ok((net, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let net = init_params(1, 3, 4, 3).unwrap();
        let state = OptimizerState::new(&net, 1e-3);
        let (next, st) = optimizer_step(&net, &net.zeros_like(), &state).unwrap();
        assert_eq!(next, net);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let net = init_params(1, 3, 4, 3).unwrap();
        let state = OptimizerState::new(&net, 1e-3);
        for g in [0.5, -2.0] {
            let mut grads = net.zeros_like();
            for t in grads.tensors_mut() {
                t.fill(g);
            }
            let (next, _) = optimizer_step(&net, &grads, &state).unwrap();
            // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
            let expected = 1e-3 * g.abs() / (g.abs() + 1e-8);
            for (a, b) in next.tensors().iter().zip(net.tensors()) {
                for (x, y) in a.iter().zip(b) {
                    assert!(((y - x) - expected * g.signum()).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let net = init_params(2, 3, 4, 3).unwrap();
        let mut grads = net.zeros_like();
        grads.head.bias[1] = 0.3;
        let state = OptimizerState::new(&net, 1e-2);
        let a = optimizer_step(&net, &grads, &state).unwrap();
        let b = optimizer_step(&net, &grads, &state).unwrap();
        assert_eq!(a, b);

        let other = init_params(2, 3, 5, 3).unwrap();
        assert!(matches!(
            optimizer_step(&net, &other, &state),
            Err(Error::Shape(_))
        ));
    }
}
