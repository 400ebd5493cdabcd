//! BFGS with an explicit Hessian approximation.
//!
//! B starts at the identity; each iteration solves B p = -g for the search
//! direction, takes a Wolfe step, and applies the rank-two update
//! B += y y' / (y's) - (B s)(B s)' / (s'B s). The update is skipped when the
//! curvature y's is too small relative to |y||s|, which keeps B symmetric
//! positive definite.

use crate::derivatives::{fd_gradient, wolfe_line_search, Objective};
use crate::error::Result;
use crate::linalg::solve_spd;
use crate::solvers::{SchemeStep, SolverConfig};
use crate::tensor::{DenseMatrix, RealVector};

const CURVATURE_GUARD: f64 = 1e-10;

pub(super) struct BfgsState {
    approx_hessian: DenseMatrix,
    /// Gradient at the iterate the driver now holds, computed while forming
    /// y on the previous step; reused to save 4n evaluations.
    pending_grad: Option<RealVector>,
}

impl BfgsState {
    pub(super) fn new(dim: usize) -> Self {
        Self {
            approx_hessian: DenseMatrix::identity(dim),
            pending_grad: None,
        }
    }
}

impl SchemeStep for BfgsState {
    fn step(
        &mut self,
        obj: &Objective,
        x: &RealVector,
        cfg: &SolverConfig,
        grad_floor: f64,
    ) -> Result<RealVector> {
        let grad = match self.pending_grad.take() {
            Some(g) => g,
            None => fd_gradient(obj, x, &cfg.fd)?,
        };
        if grad.norm() <= grad_floor {
            return Ok(x.clone());
        }

        let neg_grad: Vec<f64> = grad.as_slice().iter().map(|v| -v).collect();
        let mut direction = match solve_spd(&self.approx_hessian, &neg_grad) {
            Some(p) => RealVector::new(p),
            None => RealVector::new(neg_grad.clone()),
        };
        if !(grad.dot(&direction) < 0.0) {
            direction = RealVector::new(neg_grad);
        }

        let step = wolfe_line_search(obj, x, &direction, &grad, &cfg.fd)?;
        let mut s = direction;
        s.scale(step.alpha);
        let mut next = x.clone();
        next.axpy(1.0, &s);

        let grad_next = fd_gradient(obj, &next, &cfg.fd)?;
        let mut y = grad_next.clone();
        y.axpy(-1.0, &grad);

        let ys = y.dot(&s);
        if ys > CURVATURE_GUARD * y.norm() * s.norm() {
            self.apply_update(&s, &y, ys);
        }
        self.pending_grad = Some(grad_next);
        Ok(next)
    }

    fn monotone(&self) -> bool {
        true
    }
}

impl BfgsState {
    fn apply_update(&mut self, s: &RealVector, y: &RealVector, ys: f64) {
        let n = s.len();
        let bs = self
            .approx_hessian
            .matvec(s.as_slice())
            .expect("B and s share the problem dimension");
        let sbs: f64 = s.as_slice().iter().zip(&bs).map(|(a, b)| a * b).sum();
        if !(sbs > 0.0) {
            return;
        }
        for r in 0..n {
            for c in 0..n {
                let v = self.approx_hessian.get(r, c) + y[r] * y[c] / ys - bs[r] * bs[c] / sbs;
                self.approx_hessian.set(r, c, v);
            }
        }
    }
}
