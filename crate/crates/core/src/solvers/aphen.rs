//! Approximate-Hessian Newton conjugate gradient.
//!
//! Each outer iteration computes the finite-difference gradient, solves the
//! Newton system H p = -g approximately by conjugate gradient using only
//! Hessian-vector products, and moves by a Wolfe step along p. The CG loop
//! truncates at an inexact-Newton forcing tolerance so early iterations stay
//! cheap while late iterations tighten enough for superlinear convergence.

use crate::derivatives::{fd_gradient, wolfe_line_search, Objective};
use crate::error::Result;
use crate::solvers::{SchemeStep, SolverConfig};
use crate::tensor::RealVector;

/// APHEN-specific knobs. `None` selects the defaults: the problem dimension
/// for the CG iteration cap and the forcing term
/// 0.5 * min(1, sqrt(|g|)) * |g| for the CG residual tolerance.
#[derive(Debug, Clone, Copy, Default)]
pub struct AphenParams {
    pub cg_max_iters: Option<usize>,
    pub cg_tol: Option<f64>,
}

pub(super) struct AphenState {
    dim: usize,
}

impl AphenState {
    pub(super) fn new(layout: crate::decomp::ParamLayout) -> Self {
        Self { dim: layout.len() }
    }
}

impl SchemeStep for AphenState {
    fn step(
        &mut self,
        obj: &Objective,
        x: &RealVector,
        cfg: &SolverConfig,
        grad_floor: f64,
    ) -> Result<RealVector> {
        let grad = fd_gradient(obj, x, &cfg.fd)?;
        let grad_norm = grad.norm();
        if grad_norm <= grad_floor {
            return Ok(x.clone());
        }

        let mut direction = newton_cg_direction(obj, x, &grad, grad_norm, self.dim, cfg)?;
        if !(grad.dot(&direction) < 0.0) {
            direction = negated(&grad);
        }
        let step = wolfe_line_search(obj, x, &direction, &grad, &cfg.fd)?;
        let mut next = x.clone();
        next.axpy(step.alpha, &direction);
        Ok(next)
    }

    fn monotone(&self) -> bool {
        true
    }
}

fn negated(v: &RealVector) -> RealVector {
    let mut out = v.clone();
    out.scale(-1.0);
    out
}

/// Conjugate gradient on H p = -g where H d comes from gradient differencing.
/// Falls back to steepest descent when the very first curvature is negative.
///
/// The base gradient is computed once per outer iteration and reused for
/// every product, so each CG iteration costs one gradient at the shifted
/// point: H d = (grad(x + eta d) - grad(x)) / eta.
fn newton_cg_direction(
    obj: &Objective,
    x: &RealVector,
    grad: &RealVector,
    grad_norm: f64,
    dim: usize,
    cfg: &SolverConfig,
) -> Result<RealVector> {
    let max_iters = cfg.aphen.cg_max_iters.unwrap_or(dim);
    let tol = cfg
        .aphen
        .cg_tol
        .unwrap_or_else(|| 0.5 * grad_norm.sqrt().min(1.0) * grad_norm);
    let eta = cfg.fd.eta;

    let hvp = |d: &RealVector| -> Result<RealVector> {
        let mut shifted = x.clone();
        shifted.axpy(eta, d);
        let mut out = fd_gradient(obj, &shifted, &cfg.fd)?;
        out.axpy(-1.0, grad);
        out.scale(1.0 / eta);
        Ok(out)
    };

    let mut p = RealVector::zeros(x.len());
    let mut residual = negated(grad);
    let mut d = residual.clone();
    let mut rs = residual.dot(&residual);

    for m in 0..max_iters {
        if rs.sqrt() <= tol {
            break;
        }
        let hd = hvp(&d)?;
        let curvature = d.dot(&hd);
        if curvature <= 0.0 {
            if m == 0 {
                return Ok(negated(grad));
            }
            break;
        }
        let alpha = rs / curvature;
        p.axpy(alpha, &d);
        residual.axpy(-alpha, &hd);
        let rs_new = residual.dot(&residual);
        let beta = rs_new / rs;
        d.scale(beta);
        d.axpy(1.0, &residual);
        rs = rs_new;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivatives::FdConfig;

    #[test]
    fn cg_solves_diagonal_newton_system() {
        // f = x1^2 + 2 x2^2: Hessian diag(2, 4). Newton direction from any x
        // is exactly -x; with a tight CG tolerance the solve is essentially
        // exact after two CG iterations.
        let f = Objective::new(|x: &[f64]| x[0] * x[0] + 2.0 * x[1] * x[1]);
        let x = RealVector::new(vec![3.0, -1.5]);
        let mut cfg = SolverConfig::new();
        cfg.aphen.cg_tol = Some(1e-10);
        let grad = fd_gradient(&f, &x, &FdConfig::default()).unwrap();
        let p = newton_cg_direction(&f, &x, &grad, grad.norm(), 2, &cfg).unwrap();
        assert!(grad.dot(&p) < 0.0);
        let newton = RealVector::new(vec![-3.0, 1.5]);
        let cos = p.dot(&newton) / (p.norm() * newton.norm());
        assert!(cos > 0.999, "cosine to Newton step was {cos}");
    }

    #[test]
    fn negative_curvature_falls_back_to_steepest_descent() {
        // Concave quadratic: curvature is negative everywhere.
        let f = Objective::new(|x: &[f64]| -(x[0] * x[0]) - x[1] * x[1]);
        let x = RealVector::new(vec![1.0, 1.0]);
        let cfg = SolverConfig::new();
        let grad = fd_gradient(&f, &x, &FdConfig::default()).unwrap();
        let p = newton_cg_direction(&f, &x, &grad, grad.norm(), 2, &cfg).unwrap();
        for i in 0..2 {
            assert!((p[i] + grad[i]).abs() < 1e-12);
        }
    }
}
