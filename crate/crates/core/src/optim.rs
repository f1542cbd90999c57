//! First-order optimizers: Adam and Nadam (Adam with Nesterov momentum).

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    #[default]
    Nadam,
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl MomentState {
    pub fn new(n: usize) -> Self {
        Self {
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
        }
    }
}

fn check(params: &[f64], grads: &[f64], state: &MomentState) -> Result<()> {
    check_dim(params.len(), grads.len())?;
    check_dim(params.len(), state.m.len())?;
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("non-finite gradient at index {i}")));
    }
    Ok(())
}

fn powi(b: f64, t: u64) -> f64 {
    libm::pow(b, t as f64)
}

/// One Adam step on `params` minimizing the objective with gradient `grads`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut MomentState, lr: f64) -> Result<()> {
    check(params, grads, state)?;
    state.t += 1;
    let (c1, c2) = (1.0 - powi(BETA1, state.t), 1.0 - powi(BETA2, state.t));
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + EPSILON);
    }
    Ok(())
}

/// One Nadam step (Dozat's simplified form with a constant momentum
/// coefficient).
pub fn nadam_step(params: &mut [f64], grads: &[f64], state: &mut MomentState, lr: f64) -> Result<()> {
    check(params, grads, state)?;
    state.t += 1;
    let c1 = 1.0 - powi(BETA1, state.t);
    let c1_next = 1.0 - powi(BETA1, state.t + 1);
    let c2 = 1.0 - powi(BETA2, state.t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = BETA1 * state.m[i] / c1_next + (1.0 - BETA1) * g / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + EPSILON);
    }
    Ok(())
}

/// Optimizer over a subset of a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    state: MomentState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        Self {
            kind,
            lr,
            state: MomentState::new(n),
        }
    }

    pub fn steps(&self) -> u64 {
        self.state.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        match self.kind {
            OptimizerKind::Adam => adam_step(params, grads, &mut self.state, self.lr),
            OptimizerKind::Nadam => nadam_step(params, grads, &mut self.state, self.lr),
        }
    }
}
