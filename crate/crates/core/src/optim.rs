//! Adam optimizer and gradient clipping.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("parameter group {index}: moment shape {moment} does not match parameter length {param}")]
    ShapeMismatch {
        index: usize,
        moment: usize,
        param: usize,
    },
    #[error("optimizer has {state} parameter groups, step called with {given}")]
    GroupCountMismatch { state: usize, given: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a list of parameter buffers. Moment buffers are
/// allocated to match the parameter shapes up front; the step counter
/// increases by exactly one per [`Adam::step`].
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, param_sizes: &[usize]) -> Self {
        Adam {
            config,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: param_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    /// Rebuild from previously saved state (checkpoint resume).
    pub fn from_state(config: AdamConfig, step: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>) -> Self {
        Adam { config, step, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// One in-place update. `params[i]` and `grads[i]` must match the sizes
    /// given at construction.
    pub fn step(&mut self, params: &mut [Vec<T>], grads: &[Vec<T>]) -> Result<(), OptimError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OptimError::GroupCountMismatch {
                state: self.m.len(),
                given: params.len().min(grads.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let lr = T::from_f64(self.config.lr);
        let eps = T::from_f64(self.config.eps);
        let one = T::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        for (idx, ((p, g), (m, v))) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .enumerate()
        {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(OptimError::ShapeMismatch {
                    index: idx,
                    moment: m.len(),
                    param: p.len(),
                });
            }
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for g in grads.iter() {
        for &v in g {
            let v = v.as_f64();
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::from_f64(max_norm / norm);
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam: Adam<f64> = Adam::new(AdamConfig::default(), &[3]);
        let mut params = vec![vec![1.0, -2.0, 0.5]];
        let grads = vec![vec![0.0; 3]];
        adam.step(&mut params, &grads).unwrap();
        assert_eq!(params[0], vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut adam: Adam<f64> = Adam::new(cfg, &[2]);
        let mut params = vec![vec![0.0, 0.0]];
        let grads = vec![vec![3.7, -0.002]];
        adam.step(&mut params, &grads).unwrap();
        for (&p, &g) in params[0].iter().zip(&grads[0]) {
            assert!(p.abs() <= 0.01 * (1.0 + 1e-6), "step too large: {p}");
            assert!(p.signum() == -g.signum());
            assert!(p.abs() > 0.0099, "bias correction should make |step| ~ lr");
        }
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        // f(w) = (w - 3)^2 from w = 0 with lr 0.1: |w - 3| < 0.1 after 100 steps
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut adam: Adam<f64> = Adam::new(cfg, &[1]);
        let mut params = vec![vec![0.0]];
        for _ in 0..100 {
            let w = params[0][0];
            let grads = vec![vec![2.0 * (w - 3.0)]];
            adam.step(&mut params, &grads).unwrap();
        }
        assert!(
            (params[0][0] - 3.0).abs() < 0.1,
            "w = {} after 100 steps",
            params[0][0]
        );
    }

    #[test]
    fn step_counter_strictly_increments() {
        let mut adam: Adam<f64> = Adam::new(AdamConfig::default(), &[1]);
        let mut params = vec![vec![0.0]];
        let grads = vec![vec![1.0]];
        for expect in 1..=5 {
            adam.step(&mut params, &grads).unwrap();
            assert_eq!(adam.step_count(), expect);
        }
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut grads = vec![vec![3.0f64, 0.0], vec![4.0]];
        let pre = clip_global_norm(&mut grads, 1.0);
        assert!((pre - 5.0).abs() < 1e-12);
        let post: f64 = grads.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!((post - 1.0).abs() < 1e-12);
        // under the cap: untouched
        let mut small = vec![vec![0.1f64]];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0][0], 0.1);
    }
}
