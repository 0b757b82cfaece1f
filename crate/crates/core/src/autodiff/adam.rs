//! Adam optimizer over a named parameter set.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

use super::network::ParameterSet;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First/second-moment estimates, one pair of buffers per parameter, plus
/// the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    learning_rate: F,
    beta1: F,
    beta2: F,
    epsilon: F,
    step_count: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> AdamState<F> {
    /// Fresh optimizer state shaped after `params`, with the canonical
    /// hyperparameter defaults.
    pub fn new(learning_rate: f64, params: &ParameterSet<F>) -> Self {
        Self::with_hyperparameters(learning_rate, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, params)
    }

    pub fn with_hyperparameters(
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        params: &ParameterSet<F>,
    ) -> Self {
        let m = params.iter().map(|p| vec![F::zero(); p.len()]).collect();
        let v = params.iter().map(|p| vec![F::zero(); p.len()]).collect();
        Self {
            learning_rate: c(learning_rate),
            beta1: c(beta1),
            beta2: c(beta2),
            epsilon: c(epsilon),
            step_count: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn learning_rate(&self) -> F {
        self.learning_rate
    }

    /// One bias-corrected Adam update from the gradients accumulated in
    /// `params`. Frozen parameters are left bit-for-bit untouched; a frozen
    /// parameter carrying a nonzero gradient is a caller bug and is
    /// rejected.
    pub fn step(&mut self, params: &mut ParameterSet<F>) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::shape(
                "adam_update",
                format!(
                    "state tracks {} parameters, set has {}",
                    self.m.len(),
                    params.len()
                ),
            ));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = F::one() - self.beta1.powi(t);
        let bc2 = F::one() - self.beta2.powi(t);
        let one = F::one();

        for (idx, p) in params.iter_mut().enumerate() {
            if self.m[idx].len() != p.len() {
                return Err(Error::shape(
                    "adam_update",
                    format!(
                        "parameter '{}' has {} elements, state has {}",
                        p.name,
                        p.len(),
                        self.m[idx].len()
                    ),
                ));
            }
            if p.frozen {
                if p.grad.iter().any(|g| !g.is_zero()) {
                    return Err(Error::FrozenParameterGradient {
                        name: p.name.clone(),
                    });
                }
                continue;
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..p.data.len() {
                let g = p.grad.get(i).copied().unwrap_or_else(F::zero);
                m[i] = self.beta1 * m[i] + (one - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (one - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
