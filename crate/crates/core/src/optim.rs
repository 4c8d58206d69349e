//! First-order optimizers that consume an already aggregated direction.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
        }
    }

    /// Adam with `β₁ = 0.9`, `β₂ = 0.999`, `ε = 1e-8`.
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, dim: usize) -> Self {
        let moments = if config.kind == OptimizerKind::Adam { dim } else { 0 };
        Self {
            config,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Moves `params` against `direction`.
    pub fn step(&mut self, params: &mut [f64], direction: &[f64]) -> Result<()> {
        if params.len() != direction.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                found: direction.len(),
            });
        }
        match self.config.kind {
            OptimizerKind::Sgd => {
                self.step += 1;
                let lr = self.config.lr;
                for (p, d) in params.iter_mut().zip(direction) {
                    *p -= lr * d;
                }
                Ok(())
            }
            OptimizerKind::Adam => adam_step(self, params, direction),
        }
    }
}

/// One Adam update treating `direction` as the gradient.
pub fn adam_step(state: &mut OptimizerState, params: &mut [f64], direction: &[f64]) -> Result<()> {
    if state.m.len() != params.len() || direction.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            found: direction.len(),
        });
    }
    let OptimizerConfig {
        lr, beta1, beta2, eps, ..
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let d = direction[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * d;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * d * d;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut st = OptimizerState::new(OptimizerConfig::adam(0.01), 3);
        let mut p = vec![1.0, 1.0, 1.0];
        st.step(&mut p, &[5.0, -0.2, 1e-3]).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] - 1.01).abs() < 1e-9);
        // ε matters once |d| is no longer large next to it
        assert!((p[2] - 0.99).abs() < 1e-7);
    }

    #[test]
    fn adam_zero_direction_decays_moments() {
        let mut st = OptimizerState::new(OptimizerConfig::adam(0.1), 1);
        let mut p = vec![0.0];
        st.step(&mut p, &[1.0]).unwrap();
        let (m, v) = (st.first_moment()[0], st.second_moment()[0]);
        let before = p[0];
        let mut q = vec![2.0];
        let mut fresh = OptimizerState::new(OptimizerConfig::adam(0.1), 1);
        fresh.step(&mut q, &[0.0]).unwrap();
        assert_eq!(q[0], 2.0);
        st.step(&mut p, &[0.0]).unwrap();
        assert_eq!(st.first_moment()[0], 0.9 * m);
        assert_eq!(st.second_moment()[0], 0.999 * v);
        assert!(p[0] < before, "momentum keeps moving");
    }

    #[test]
    fn adam_minimises_quadratic() {
        // f(x) = (x - 3)², minimiser 3
        let mut st = OptimizerState::new(OptimizerConfig::adam(0.1), 1);
        let mut x = vec![0.0];
        for _ in 0..100 {
            let d = 2.0 * (x[0] - 3.0);
            st.step(&mut x, &[d]).unwrap();
        }
        // Adam oscillates around the minimiser with shrinking amplitude
        for _ in 0..400 {
            let d = 2.0 * (x[0] - 3.0);
            st.step(&mut x, &[d]).unwrap();
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "{}", x[0]);
    }

    #[test]
    fn sgd_step_and_validation() {
        let mut st = OptimizerState::new(OptimizerConfig::sgd(0.5), 2);
        let mut p = vec![1.0, 2.0];
        st.step(&mut p, &[2.0, -2.0]).unwrap();
        assert_eq!(p, vec![0.0, 3.0]);
        assert!(st.step(&mut p, &[1.0]).is_err());
        assert!(OptimizerConfig::sgd(0.0).validate().is_err());
    }
}
