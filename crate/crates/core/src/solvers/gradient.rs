//! Gradient-only update rules: steepest descent with Wolfe steps, Nesterov
//! accelerated gradient, Adam, and the SAGA-style averaged update.

use crate::derivatives::{fd_gradient, wolfe_line_search, Objective};
use crate::error::Result;
use crate::solvers::{SchemeStep, SolverConfig};
use crate::tensor::RealVector;

/// Nesterov momentum and step size; the reference values are fixed.
#[derive(Debug, Clone, Copy)]
pub struct NagParams {
    pub gamma: f64,
    pub eta: f64,
}

impl Default for NagParams {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            eta: 0.001,
        }
    }
}

/// Adam moment decays, stabilizer, and step size.
///
/// `standard_bias_correction` switches the bias divisors from the constant
/// (1 - beta) form used here by default to the usual (1 - beta^n) powers.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub standard_bias_correction: bool,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eta: 0.001,
            standard_bias_correction: false,
        }
    }
}

fn negated(v: &RealVector) -> RealVector {
    let mut out = v.clone();
    out.scale(-1.0);
    out
}

/// Steepest descent: x_{n+1} = x_n - gamma_n * grad, gamma_n from Wolfe.
pub(super) struct GdState;

impl GdState {
    pub(super) fn new() -> Self {
        GdState
    }
}

impl SchemeStep for GdState {
    fn step(
        &mut self,
        obj: &Objective,
        x: &RealVector,
        cfg: &SolverConfig,
        grad_floor: f64,
    ) -> Result<RealVector> {
        let grad = fd_gradient(obj, x, &cfg.fd)?;
        if grad.norm() <= grad_floor {
            return Ok(x.clone());
        }
        let direction = negated(&grad);
        let step = wolfe_line_search(obj, x, &direction, &grad, &cfg.fd)?;
        let mut next = x.clone();
        next.axpy(step.alpha, &direction);
        Ok(next)
    }

    fn monotone(&self) -> bool {
        true
    }
}

/// Nesterov accelerated gradient with velocity state:
/// v_n = gamma v_{n-1} + eta grad(x_n - gamma v_{n-1}); x_{n+1} = x_n - v_n.
pub(super) struct NagState {
    velocity: RealVector,
}

impl NagState {
    pub(super) fn new(dim: usize) -> Self {
        Self {
            velocity: RealVector::zeros(dim),
        }
    }
}

impl SchemeStep for NagState {
    fn step(
        &mut self,
        obj: &Objective,
        x: &RealVector,
        cfg: &SolverConfig,
        grad_floor: f64,
    ) -> Result<RealVector> {
        let NagParams { gamma, eta } = cfg.nag;
        let mut lookahead = x.clone();
        lookahead.axpy(-gamma, &self.velocity);
        let grad = fd_gradient(obj, &lookahead, &cfg.fd)?;
        if grad.norm() <= grad_floor && self.velocity.norm() <= grad_floor {
            return Ok(x.clone());
        }
        self.velocity.scale(gamma);
        self.velocity.axpy(eta, &grad);
        let mut next = x.clone();
        next.axpy(-1.0, &self.velocity);
        Ok(next)
    }
}

/// Adam with elementwise moment estimates.
pub(super) struct AdamState {
    m: RealVector,
    v: RealVector,
    iteration: u32,
}

impl AdamState {
    pub(super) fn new(dim: usize) -> Self {
        Self {
            m: RealVector::zeros(dim),
            v: RealVector::zeros(dim),
            iteration: 0,
        }
    }
}

impl SchemeStep for AdamState {
    fn step(
        &mut self,
        obj: &Objective,
        x: &RealVector,
        cfg: &SolverConfig,
        grad_floor: f64,
    ) -> Result<RealVector> {
        let AdamParams {
            beta1,
            beta2,
            epsilon,
            eta,
            standard_bias_correction,
        } = cfg.adam;
        let grad = fd_gradient(obj, x, &cfg.fd)?;
        if grad.norm() <= grad_floor && self.m.norm() <= grad_floor {
            return Ok(x.clone());
        }
        self.iteration += 1;
        let (m_div, v_div) = if standard_bias_correction {
            (
                1.0 - beta1.powi(self.iteration as i32),
                1.0 - beta2.powi(self.iteration as i32),
            )
        } else {
            (1.0 - beta1, 1.0 - beta2)
        };
        let mut next = x.clone();
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / m_div;
            let v_hat = self.v[i] / v_div;
            next[i] -= eta * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(next)
    }
}

/// SAGA-style update direction: grad(x_n) - grad(x_{n-1}) plus the running
/// mean of all past gradients; the step comes from Wolfe line search along
/// the negated direction. The first iteration has no history and reduces to
/// a plain gradient step. The averaged direction carries no descent
/// guarantee; when it stops being one, no step is taken and the stall ends
/// the run through the relative-change rule.
pub(super) struct SagaState {
    prev_grad: Option<RealVector>,
    grad_sum: RealVector,
    history: usize,
}

impl SagaState {
    pub(super) fn new(dim: usize) -> Self {
        Self {
            prev_grad: None,
            grad_sum: RealVector::zeros(dim),
            history: 0,
        }
    }
}

impl SchemeStep for SagaState {
    fn step(
        &mut self,
        obj: &Objective,
        x: &RealVector,
        cfg: &SolverConfig,
        grad_floor: f64,
    ) -> Result<RealVector> {
        let grad = fd_gradient(obj, x, &cfg.fd)?;
        let next = if grad.norm() <= grad_floor {
            x.clone()
        } else {
            let update = match &self.prev_grad {
                None => grad.clone(),
                Some(prev) => {
                    let mut u = grad.clone();
                    u.axpy(-1.0, prev);
                    u.axpy(1.0 / self.history as f64, &self.grad_sum);
                    u
                }
            };
            let direction = negated(&update);
            if grad.dot(&direction) < 0.0 {
                let step = wolfe_line_search(obj, x, &direction, &grad, &cfg.fd)?;
                let mut n = x.clone();
                n.axpy(step.alpha, &direction);
                n
            } else {
                x.clone()
            }
        };
        self.grad_sum.axpy(1.0, &grad);
        self.history += 1;
        self.prev_grad = Some(grad);
        Ok(next)
    }
}
