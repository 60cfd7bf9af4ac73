//! Adam with decoupled weight decay (AdamW).
//!
//! ```text
//! t ← t + 1
//! m ← β₁·m + (1 − β₁)·g
//! v ← β₂·v + (1 − β₂)·g²
//! m̂ = m / (1 − β₁ᵗ),  v̂ = v / (1 − β₂ᵗ)
//! θ ← θ − lr·(m̂ / (√v̂ + ε) + λ·θ)
//! ```
//!
//! The decay term only applies to parameter groups flagged for it (weight
//! matrices); biases are exempt. The update is evaluated as
//! `θ·(1 − lr·λ) − lr·m̂/(√v̂ + ε)`, which is the same expression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl OptimizerConfig {
    /// Default betas and weight decay 0.01 around the given rate and epsilon.
    pub fn adamw(lr: f64, epsilon: f64) -> Self {
        OptimizerConfig {
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon,
            weight_decay: DEFAULT_WEIGHT_DECAY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                return bad(format!("{name} {beta} outside (0, 1)"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        Ok(())
    }
}

/// One tensor's values, its gradient, and whether weight decay applies.
pub struct ParamGroup<'a> {
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// Zeroed moments for tensors of the given lengths.
    pub fn new(shapes: &[usize]) -> Self {
        OptimizerState {
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// Applies one AdamW update to every group. Nothing is modified on error.
pub fn step(groups: &mut [ParamGroup<'_>], state: &mut OptimizerState, config: &OptimizerConfig) -> Result<()> {
    if groups.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            found: groups.len(),
        });
    }
    for (group, m) in groups.iter().zip(&state.m) {
        if group.values.len() != m.len() || group.grads.len() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                found: if group.values.len() != m.len() {
                    group.values.len()
                } else {
                    group.grads.len()
                },
            });
        }
        if group.grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteValue {
                what: "gradient".into(),
            });
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let OptimizerConfig {
        lr,
        beta1,
        beta2,
        epsilon,
        weight_decay,
    } = *config;
    let bias1 = 1.0 - beta1.powf(t);
    let bias2 = 1.0 - beta2.powf(t);

    for ((group, m), v) in groups.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let shrink = if group.decay { 1.0 - lr * weight_decay } else { 1.0 };
        for (((theta, &g), m), v) in group.values.iter_mut().zip(group.grads).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *theta = *theta * shrink - lr * (m_hat / (v_hat.sqrt() + epsilon));
        }
    }
    Ok(())
}

/// An optimizer instance owning its configuration and state.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: OptimizerConfig,
    pub state: OptimizerState,
}

impl AdamW {
    pub fn new(config: OptimizerConfig, shapes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(AdamW {
            config,
            state: OptimizerState::new(shapes),
        })
    }

    pub fn step(&mut self, groups: &mut [ParamGroup<'_>]) -> Result<()> {
        step(groups, &mut self.state, &self.config)
    }
}
