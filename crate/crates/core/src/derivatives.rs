//! Derivative-free building blocks shared by the gradient-using solvers:
//! a fourth-order finite-difference gradient, Hessian-vector products by
//! gradient differencing, and a weak-Wolfe line search.
//!
//! No analytic gradient exists anywhere in this crate; everything gradient
//! shaped is built from objective evaluations, so the same solvers work for
//! any decomposition that can state its residual norm.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::tensor::RealVector;

type ObjectiveFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

/// Evaluatable objective with a cumulative evaluation counter.
///
/// The counter makes solver cost comparisons implementation-independent:
/// every call to [`Objective::value`] increments it, including the stencil
/// evaluations issued by [`fd_gradient`] and the line search.
pub struct Objective<'a> {
    f: ObjectiveFn<'a>,
    evals: Cell<u64>,
}

impl<'a> Objective<'a> {
    pub fn new(f: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        Self {
            f: Box::new(f),
            evals: Cell::new(0),
        }
    }

    /// Evaluate f(x), counting the call.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.evals.set(self.evals.get() + 1);
        (self.f)(x)
    }

    /// Cumulative number of evaluations so far.
    pub fn evals(&self) -> u64 {
        self.evals.get()
    }
}

/// Finite-difference configuration: the perturbation applied per coordinate.
#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    pub eta: f64,
}

impl FdConfig {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "perturbation eta must be positive and finite, got {eta}"
            )));
        }
        Ok(Self { eta })
    }
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { eta: 1e-4 }
    }
}

/// Fourth-order central-difference gradient.
///
/// Component i is (2f(x-2ne_i) - 16f(x-ne_i) + 16f(x+ne_i) - 2f(x+2ne_i))
/// / (4! n) with n the perturbation, which reduces to the classical
/// (1, -8, 8, -1)/(12n) stencil. Costs 4 * len evaluations.
pub fn fd_gradient(f: &Objective, x: &RealVector, cfg: &FdConfig) -> Result<RealVector> {
    let eta = cfg.eta;
    let mut point = x.as_slice().to_vec();
    let mut grad = RealVector::zeros(x.len());
    for i in 0..x.len() {
        let xi = point[i];
        point[i] = xi - 2.0 * eta;
        let fm2 = f.value(&point);
        point[i] = xi - eta;
        let fm1 = f.value(&point);
        point[i] = xi + eta;
        let fp1 = f.value(&point);
        point[i] = xi + 2.0 * eta;
        let fp2 = f.value(&point);
        point[i] = xi;
        let g = (2.0 * fm2 - 16.0 * fm1 + 16.0 * fp1 - 2.0 * fp2) / (24.0 * eta);
        if !g.is_finite() {
            return Err(Error::NonFinite { index: i, value: g });
        }
        grad[i] = g;
    }
    Ok(grad)
}

/// Hessian-vector product by forward-differencing the gradient:
/// H p = (grad(x + n p) - grad(x)) / n. Costs 8 * len evaluations.
pub fn hessian_vec_product(
    f: &Objective,
    x: &RealVector,
    p: &RealVector,
    cfg: &FdConfig,
) -> Result<RealVector> {
    let eta = cfg.eta;
    let mut shifted = x.clone();
    shifted.axpy(eta, p);
    let g_shifted = fd_gradient(f, &shifted, cfg)?;
    let g_base = fd_gradient(f, x, cfg)?;
    let mut out = g_shifted;
    out.axpy(-1.0, &g_base);
    out.scale(1.0 / eta);
    Ok(out)
}

/// Step size found by the line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchStep {
    pub alpha: f64,
    /// Set when the trial budget ran out before both Wolfe conditions held;
    /// the returned alpha is then the smallest trial step.
    pub degraded: bool,
}

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_TRIALS: usize = 25;

/// Weak-Wolfe line search (sufficient decrease with c1 = 1e-4, curvature
/// with c2 = 0.9) by bracketing and zoom with quadratic interpolation.
///
/// `grad` is the gradient at `x`; the directional derivative at trial points
/// is approximated with the same fourth-order stencil applied along `p`, so
/// each trial costs one value evaluation plus four for the slope.
pub fn wolfe_line_search(
    f: &Objective,
    x: &RealVector,
    p: &RealVector,
    grad: &RealVector,
    cfg: &FdConfig,
) -> Result<LineSearchStep> {
    let d0 = grad.dot(p);
    if !(d0 < 0.0) {
        return Err(Error::NonDescent { dir_deriv: d0 });
    }
    let phi0 = f.value(x.as_slice());
    // Step for the 1-D slope stencil, scaled so the x-space perturbation
    // stays near cfg.eta regardless of |p|.
    let h = cfg.eta / (1.0 + p.norm());

    let mut search = Search {
        f,
        x,
        p,
        phi0,
        d0,
        h,
        trials: 0,
        smallest_trial: f64::INFINITY,
        scratch: x.as_slice().to_vec(),
    };

    let mut alpha_prev = 0.0;
    let mut phi_prev = phi0;
    let mut dphi_prev = d0;
    let mut alpha = 1.0;
    loop {
        let phi_a = search.phi(alpha);
        if search.violates_decrease(alpha, phi_a) || (search.trials > 1 && phi_a >= phi_prev) {
            return search.zoom(alpha_prev, phi_prev, dphi_prev, alpha, phi_a);
        }
        let dphi_a = search.dphi(alpha);
        if dphi_a >= WOLFE_C2 * d0 {
            return Ok(LineSearchStep {
                alpha,
                degraded: false,
            });
        }
        if search.trials >= MAX_TRIALS {
            return Ok(search.degraded());
        }
        alpha_prev = alpha;
        phi_prev = phi_a;
        dphi_prev = dphi_a;
        alpha *= 2.0;
    }
}

struct Search<'a, 'b> {
    f: &'a Objective<'b>,
    x: &'a RealVector,
    p: &'a RealVector,
    phi0: f64,
    d0: f64,
    h: f64,
    trials: usize,
    smallest_trial: f64,
    scratch: Vec<f64>,
}

impl Search<'_, '_> {
    /// phi(alpha) = f(x + alpha p), counted as one trial.
    fn phi(&mut self, alpha: f64) -> f64 {
        self.trials += 1;
        if alpha < self.smallest_trial {
            self.smallest_trial = alpha;
        }
        self.eval_at(alpha)
    }

    fn eval_at(&mut self, alpha: f64) -> f64 {
        for (s, (xv, pv)) in self
            .scratch
            .iter_mut()
            .zip(self.x.as_slice().iter().zip(self.p.as_slice()))
        {
            *s = xv + alpha * pv;
        }
        self.f.value(&self.scratch)
    }

    /// Directional derivative of phi at alpha via the fourth-order stencil.
    fn dphi(&mut self, alpha: f64) -> f64 {
        let h = self.h;
        let fm2 = self.eval_at(alpha - 2.0 * h);
        let fm1 = self.eval_at(alpha - h);
        let fp1 = self.eval_at(alpha + h);
        let fp2 = self.eval_at(alpha + 2.0 * h);
        (2.0 * fm2 - 16.0 * fm1 + 16.0 * fp1 - 2.0 * fp2) / (24.0 * h)
    }

    fn violates_decrease(&self, alpha: f64, phi_a: f64) -> bool {
        !phi_a.is_finite() || phi_a > self.phi0 + WOLFE_C1 * alpha * self.d0
    }

    fn degraded(&self) -> LineSearchStep {
        LineSearchStep {
            alpha: self.smallest_trial,
            degraded: true,
        }
    }

    /// Narrow [lo, hi] until both Wolfe conditions hold at an interior point.
    fn zoom(
        &mut self,
        mut lo: f64,
        mut phi_lo: f64,
        mut dphi_lo: f64,
        mut hi: f64,
        mut phi_hi: f64,
    ) -> Result<LineSearchStep> {
        while self.trials < MAX_TRIALS {
            let delta = hi - lo;
            // Minimizer of the quadratic through (lo, phi_lo) with slope
            // dphi_lo and (hi, phi_hi); exact on quadratic objectives.
            let mut t = if phi_hi.is_finite() {
                let curv = (phi_hi - phi_lo - dphi_lo * delta) / (delta * delta);
                if curv > 0.0 {
                    lo - dphi_lo / (2.0 * curv)
                } else {
                    lo + 0.5 * delta
                }
            } else {
                lo + 0.5 * delta
            };
            let (lo_end, hi_end) = (lo + 0.05 * delta, hi - 0.05 * delta);
            if !t.is_finite() || (t - lo_end) * (t - hi_end) > 0.0 {
                t = lo + 0.5 * delta;
            }
            let phi_t = self.phi(t);
            if self.violates_decrease(t, phi_t) || phi_t >= phi_lo {
                hi = t;
                phi_hi = phi_t;
            } else {
                let dphi_t = self.dphi(t);
                if dphi_t >= WOLFE_C2 * self.d0 {
                    return Ok(LineSearchStep {
                        alpha: t,
                        degraded: false,
                    });
                }
                if dphi_t * (hi - lo) >= 0.0 {
                    hi = lo;
                    phi_hi = phi_lo;
                }
                lo = t;
                phi_lo = phi_t;
                dphi_lo = dphi_t;
            }
        }
        Ok(self.degraded())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn constant_function_has_zero_gradient() {
        let f = Objective::new(|_| 3.25);
        let g = fd_gradient(&f, &RealVector::new(vec![1.0, -2.0, 0.5]), &FdConfig::default())
            .unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(f.evals(), 12);
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        let f = Objective::new(|x: &[f64]| x.iter().map(|v| v * v).sum());
        let g = fd_gradient(&f, &RealVector::new(vec![1.0, 2.0]), &FdConfig::default()).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-10);
        assert!((g[1] - 4.0).abs() < 1e-10);
    }

    #[test]
    fn bilinear_gradient() {
        let f = Objective::new(|x: &[f64]| x[0] * x[1]);
        let g = fd_gradient(&f, &RealVector::new(vec![3.0, 5.0]), &FdConfig::default()).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-10);
        assert!((g[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn non_finite_evaluation_reports_index() {
        let f = Objective::new(|x: &[f64]| if x[1] > 1.05 { f64::NAN } else { x[1] });
        let err = fd_gradient(&f, &RealVector::new(vec![0.0, 1.0]), &FdConfig { eta: 0.1 })
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
    }

    #[test]
    fn hvp_zero_direction_is_zero() {
        let f = Objective::new(|x: &[f64]| x.iter().map(|v| v * v).sum());
        let x = RealVector::new(vec![0.7, -0.3]);
        let hp = hessian_vec_product(&f, &x, &RealVector::zeros(2), &FdConfig::default()).unwrap();
        assert_eq!(hp.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn hvp_diagonal_quadratic() {
        // f = x' Q x with Q = diag(2, 4): Hessian is 2Q, so H (1, 0) = (4, 0).
        let f = Objective::new(|x: &[f64]| 2.0 * x[0] * x[0] + 4.0 * x[1] * x[1]);
        let x = RealVector::new(vec![0.3, -0.8]);
        let p = RealVector::new(vec![1.0, 0.0]);
        let hp = hessian_vec_product(&f, &x, &p, &FdConfig::default()).unwrap();
        assert!((hp[0] - 4.0).abs() / 4.0 < 1e-2);
        assert!(hp[1].abs() < 1e-2);
    }

    #[test]
    fn hvp_linear_function_is_zero() {
        // Dyadic perturbation keeps the linear evaluations exact, so the
        // doubly differenced rounding noise stays far below the bound.
        let f = Objective::new(|x: &[f64]| 3.0 * x[0] - 2.0 * x[1]);
        let x = RealVector::new(vec![1.0, 1.0]);
        let p = RealVector::new(vec![0.5, -0.25]);
        let cfg = FdConfig { eta: 0.0009765625 };
        let hp = hessian_vec_product(&f, &x, &p, &cfg).unwrap();
        assert!(hp[0].abs() < 1e-8 && hp[1].abs() < 1e-8);
    }

    #[test]
    fn hvp_error_shrinks_with_eta() {
        // Quadratic plus a cubic so the forward difference has a genuine
        // O(eta) truncation term; compare against the analytic Hessian.
        let q = [1.5, 2.0, 1.0];
        let c = 0.3;
        let f = Objective::new(move |x: &[f64]| {
            x.iter()
                .zip(&q)
                .map(|(v, qi)| qi * v * v + c * v * v * v)
                .sum()
        });
        let x = RealVector::new(vec![0.2, -0.5, 0.9]);
        let p = RealVector::new(vec![1.0, 2.0, -1.0]);
        let exact: Vec<f64> = (0..3).map(|i| (2.0 * q[i] + 6.0 * c * x[i]) * p[i]).collect();
        let err_at = |eta: f64| {
            let hp = hessian_vec_product(&f, &x, &p, &FdConfig { eta }).unwrap();
            (0..3)
                .map(|i| (hp[i] - exact[i]).abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = err_at(1e-4);
        let fine = err_at(1e-5);
        let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(coarse / scale < 1e-2, "coarse {coarse}");
        assert!(fine < coarse, "no improvement: {fine} vs {coarse}");
    }

    #[test]
    fn wolfe_decreases_convex_parabola() {
        let f = Objective::new(|x: &[f64]| x[0] * x[0]);
        let x = RealVector::new(vec![1.0]);
        let p = RealVector::new(vec![-2.0]);
        let grad = RealVector::new(vec![2.0]);
        let step = wolfe_line_search(&f, &x, &p, &grad, &FdConfig::default()).unwrap();
        assert!(!step.degraded);
        let fx = 1.0;
        let fnew = (1.0 + step.alpha * -2.0f64).powi(2);
        assert!(fnew < fx);
        // Sufficient decrease holds at the accepted step.
        assert!(fnew <= fx + 1e-4 * step.alpha * grad.dot(&p));
    }

    #[test]
    fn wolfe_finds_exact_minimizer_of_quadratic() {
        let f = Objective::new(|x: &[f64]| x[0] * x[0]);
        let x = RealVector::new(vec![1.0]);
        let p = RealVector::new(vec![-2.0]);
        let grad = RealVector::new(vec![2.0]);
        let step = wolfe_line_search(&f, &x, &p, &grad, &FdConfig::default()).unwrap();
        // Quadratic interpolation lands on the 1-D minimizer alpha = 0.5,
        // where both Wolfe inequalities hold.
        assert!((step.alpha - 0.5).abs() < 1e-12);
        let phi = |a: f64| (1.0 - 2.0 * a) * (1.0 - 2.0 * a);
        let d0 = grad.dot(&p);
        assert!(phi(step.alpha) <= phi(0.0) + 1e-4 * step.alpha * d0);
        let slope = (phi(step.alpha + 1e-6) - phi(step.alpha - 1e-6)) / 2e-6;
        assert!(slope >= 0.9 * d0);
    }

    #[test]
    fn wolfe_rejects_non_descent() {
        let f = Objective::new(|x: &[f64]| x[0] * x[0]);
        let x = RealVector::new(vec![1.0]);
        let p = RealVector::new(vec![2.0]);
        let grad = RealVector::new(vec![2.0]);
        let err = wolfe_line_search(&f, &x, &p, &grad, &FdConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonDescent { .. }));
    }

    #[test]
    fn wolfe_sufficient_decrease_on_random_quadratics() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..20 {
            let n = 4;
            let diag: Vec<f64> = (0..n).map(|_| rng.next_range(0.5, 3.0)).collect();
            let x = RealVector::new((0..n).map(|_| rng.next_range(-2.0, 2.0)).collect());
            let d = diag.clone();
            let f = Objective::new(move |v: &[f64]| {
                v.iter().zip(&d).map(|(vi, di)| di * vi * vi).sum()
            });
            let grad = fd_gradient(&f, &x, &FdConfig::default()).unwrap();
            if grad.norm() < 1e-10 {
                continue;
            }
            let mut p = grad.clone();
            p.scale(-1.0);
            let f0 = f.value(x.as_slice());
            let step = wolfe_line_search(&f, &x, &p, &grad, &FdConfig::default()).unwrap();
            let mut xt = x.clone();
            xt.axpy(step.alpha, &p);
            let f1 = f.value(xt.as_slice());
            assert!(f1 <= f0 + WOLFE_C1 * step.alpha * grad.dot(&p) + 1e-12);
        }
    }

    #[test]
    fn near_fit_gradient_vanishes_for_paratuck2_objective() {
        // At a stationary near-fit point the norm objective is smooth and
        // its gradient is zero: take an exact fit, then perturb the target
        // by a residual orthogonal to the reconstruction's tangent space
        // (residual norm 1e-3). The non-squared objective would be
        // non-smooth at an exact fit, which is why the residual is nonzero.
        use crate::decomp::{flatten, init_factors, paratuck2_reconstruct, unflatten_slice};
        use crate::tensor::DenseTensor3;

        let factors = init_factors((4, 4, 3), (2, 2), 42).unwrap();
        let layout = factors.layout();
        let x = flatten(&factors);
        let base = paratuck2_reconstruct(&factors);

        // Tangent vectors: the reconstruction is affine per coordinate, so
        // T_i = reconstruct(x + e_i) - reconstruct(x) exactly.
        let n = layout.len();
        let mut tangents: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut xs = x.as_slice().to_vec();
            xs[i] += 1.0;
            let shifted = paratuck2_reconstruct(&unflatten_slice(layout, &xs).unwrap());
            tangents.push(
                shifted
                    .data()
                    .iter()
                    .zip(base.data())
                    .map(|(s, b)| s - b)
                    .collect(),
            );
        }

        // Residual: random direction with all tangent components removed
        // (modified Gram-Schmidt), scaled to norm 1e-3.
        let mut rng = SplitMix64::new(7);
        let m = base.len();
        let mut residual: Vec<f64> = (0..m).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for t in &tangents {
            let mut v = t.clone();
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-10 {
                for vi in &mut v {
                    *vi /= norm;
                }
                basis.push(v);
            }
        }
        for b in &basis {
            let proj: f64 = residual.iter().zip(b).map(|(a, c)| a * c).sum();
            for (ri, bi) in residual.iter_mut().zip(b) {
                *ri -= proj * bi;
            }
        }
        let rnorm = residual.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(rnorm > 1e-6, "tangent space filled the whole tensor space");
        let scale = 1e-3 / rnorm;
        let target_data: Vec<f64> = base
            .data()
            .iter()
            .zip(&residual)
            .map(|(b, r)| b + scale * r)
            .collect();
        let target = DenseTensor3::new(base.dims(), target_data).unwrap();

        let obj = Objective::new(move |v: &[f64]| {
            crate::decomp::objective_value(&target, layout, v).unwrap()
        });
        let f_at_x = obj.value(x.as_slice());
        assert!((f_at_x - 1e-3).abs() < 1e-6, "residual norm is {f_at_x}");
        let grad = fd_gradient(&obj, &RealVector::new(x.as_slice().to_vec()), &FdConfig::default())
            .unwrap();
        let problem_scale = 1.0 + obj.value(x.as_slice());
        assert!(
            grad.norm() <= 1e-6 * problem_scale,
            "gradient norm {} at a stationary near-fit",
            grad.norm()
        );
    }

    #[test]
    fn fd_gradient_matches_analytic_on_random_quadratics() {
        // f(x) = x' Q x + b' x with symmetric Q: gradient is 2 Q x + b.
        let mut rng = SplitMix64::new(123);
        for trial in 0..50 {
            let n = 2 + (trial % 19);
            let mut q = vec![vec![0.0; n]; n];
            for r in 0..n {
                for c in 0..=r {
                    let v = rng.next_range(-1.0, 1.0);
                    q[r][c] = v;
                    q[c][r] = v;
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let x = RealVector::new((0..n).map(|_| rng.next_range(-1.0, 1.0)).collect());
            let (qc, bc) = (q.clone(), b.clone());
            let f = Objective::new(move |v: &[f64]| {
                let mut acc = 0.0;
                for r in 0..v.len() {
                    for c in 0..v.len() {
                        acc += v[r] * qc[r][c] * v[c];
                    }
                    acc += bc[r] * v[r];
                }
                acc
            });
            let g = fd_gradient(&f, &x, &FdConfig::default()).unwrap();
            let mut max_rel = 0.0f64;
            for r in 0..n {
                let exact: f64 =
                    2.0 * (0..n).map(|c| q[r][c] * x[c]).sum::<f64>() + b[r];
                let rel = (g[r] - exact).abs() / exact.abs().max(1.0);
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel <= 1e-8, "relative error {max_rel} on trial {trial}");
        }
    }
}
