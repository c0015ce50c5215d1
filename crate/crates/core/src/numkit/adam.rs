use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a fixed list of parameter blocks. Shapes are bound
/// on the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    fn bind(&mut self, blocks: &[&mut [f64]]) {
        self.first_moment = blocks.iter().map(|b| vec![0.0; b.len()]).collect();
        self.second_moment = self.first_moment.clone();
    }

    fn congruent(&self, blocks: &[&mut [f64]]) -> bool {
        self.first_moment.len() == blocks.len()
            && self.first_moment.iter().zip(blocks).all(|(m, b)| m.len() == b.len())
    }
}

/// One bias-corrected Adam update over parallel lists of parameter and
/// gradient blocks.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: grads.len(),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(Error::LengthMismatch {
                left: p.len(),
                right: g.len(),
            });
        }
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument("Adam learning rate must be positive".into()));
    }
    if state.step_count == 0 && state.first_moment.is_empty() {
        state.bind(params);
    } else if !state.congruent(params) {
        return Err(Error::InvalidArgument(
            "optimizer state is not congruent with the parameter blocks".into(),
        ));
    }
    state.step_count += 1;
    let t = state.step_count as f64;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t);
    for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[b];
        let v = &mut state.second_moment[b];
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(p: &mut Vec<f64>, g: &[f64], st: &mut OptimizerState, cfg: &AdamConfig) {
        let mut blocks = [p.as_mut_slice()];
        adam_step(&mut blocks, &[g], st, cfg).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = AdamConfig::default();
        let mut st = OptimizerState::new();
        let mut p = vec![1.0, -2.0];
        step(&mut p, &[0.0, 0.0], &mut st, &cfg);
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig::default();
        for g in [3.7, -0.02, 1e4] {
            let mut st = OptimizerState::new();
            let mut p = vec![0.5];
            step(&mut p, &[g], &mut st, &cfg);
            // m_hat = g, v_hat = g^2, so the move is lr * |g| / (|g| + eps)
            let expected = 0.5 - cfg.lr * g / (g.abs() + cfg.eps);
            assert!((p[0] - expected).abs() < 1e-15);
            assert!((p[0] - (0.5 - cfg.lr * g.signum())).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let cfg = AdamConfig::default();
        let mut st = OptimizerState::new();
        let mut p = vec![0.0];
        let mut prev = p[0];
        for _ in 0..2 {
            step(&mut p, &[-2.0], &mut st, &cfg);
            assert!(p[0] > prev);
            prev = p[0];
        }
        // constant gradient keeps m_hat/sqrt(v_hat) = sign(g) at every step
        assert!((p[0] - 2.0 * cfg.lr).abs() < 1e-9);
    }

    #[test]
    fn rejects_shape_changes() {
        let cfg = AdamConfig::default();
        let mut st = OptimizerState::new();
        let mut p = vec![0.0, 1.0];
        step(&mut p, &[1.0, 1.0], &mut st, &cfg);
        let mut q = vec![0.0];
        let mut blocks = [q.as_mut_slice()];
        assert!(adam_step(&mut blocks, &[&[1.0]], &mut st, &cfg).is_err());
        let mut blocks = [p.as_mut_slice()];
        assert!(adam_step(&mut blocks, &[&[1.0]], &mut st, &cfg).is_err());
    }
}
