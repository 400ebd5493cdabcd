//! Seven resolution schemes behind one interface.
//!
//! Every solver consumes a target tensor, latent factors (P, Q) and a
//! [`SolverConfig`], starts from [`init_factors`] (identical starting point
//! for identical seed), and emits the final factors plus a full convergence
//! trace. The shared stopping rule is the relative objective change
//! |f_n - f_{n-1}| / |f_n| < rel_tol.

mod als;
mod aphen;
mod bfgs;
mod gradient;

use std::time::Instant;

use crate::decomp::{
    flatten, init_factors, objective_value, unflatten_slice, ParamLayout, Paratuck2Factors,
};
use crate::derivatives::{FdConfig, Objective};
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor3, RealVector};

pub use als::AlsParams;
pub use aphen::AphenParams;
pub use gradient::{AdamParams, NagParams};

/// The seven resolution schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Aphen,
    Als,
    Gd,
    Nag,
    Adam,
    Saga,
    Bfgs,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Aphen,
        Scheme::Als,
        Scheme::Gd,
        Scheme::Nag,
        Scheme::Adam,
        Scheme::Saga,
        Scheme::Bfgs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Aphen => "aphen",
            Scheme::Als => "als",
            Scheme::Gd => "gd",
            Scheme::Nag => "nag",
            Scheme::Adam => "adam",
            Scheme::Saga => "saga",
            Scheme::Bfgs => "bfgs",
        }
    }

    pub fn parse(name: &str) -> Result<Scheme> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                let valid: Vec<&str> = Scheme::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidArgument(format!(
                    "unknown solver '{name}'; valid solvers: {}",
                    valid.join(", ")
                ))
            })
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shared and per-scheme solver configuration.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub fd: FdConfig,
    pub seed: u64,
    /// Start from these factors instead of the seeded random initialization.
    pub initial_factors: Option<Paratuck2Factors>,
    pub aphen: AphenParams,
    pub als: AlsParams,
    pub nag: NagParams,
    pub adam: AdamParams,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new()
    }
}

impl SolverConfig {
    pub fn new() -> Self {
        Self {
            max_iters: 1000,
            rel_tol: 1e-6,
            fd: FdConfig::default(),
            seed: 0,
            initial_factors: None,
            aphen: AphenParams::default(),
            als: AlsParams::default(),
            nag: NagParams::default(),
            adam: AdamParams::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        FdConfig::new(self.fd.eta).map(|_| ())
    }
}

/// Why a solve terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Relative objective change fell below rel_tol.
    Tolerance,
    /// Iteration budget exhausted.
    MaxIters,
    /// A non-finite objective or gradient appeared; the trace is partial.
    Numeric,
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIters => "max_iters",
            StopReason::Numeric => "numeric",
        }
    }
}

/// One per-iteration trace entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub elapsed_s: f64,
    pub error: f64,
}

/// Per-iteration (index, wall-time, error) records plus run accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub objective_evals: u64,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl ConvergenceTrace {
    pub fn final_error(&self) -> f64 {
        self.records.last().map(|r| r.error).expect("trace has record 0")
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map(|r| r.iter).unwrap_or(0)
    }

    pub fn elapsed_s(&self) -> f64 {
        self.records.last().map(|r| r.elapsed_s).unwrap_or(0.0)
    }

    /// Error column in iteration order.
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error).collect()
    }
}

/// Final factors plus the convergence trace that produced them.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub factors: Paratuck2Factors,
    pub trace: ConvergenceTrace,
}

/// Relative change |f_new - f_prev| / |f_new|, with equal values mapping to
/// zero so an exact fit (f = 0) still converges.
fn rel_change(f_prev: f64, f_new: f64) -> f64 {
    if f_new == f_prev {
        0.0
    } else {
        (f_new - f_prev).abs() / f_new.abs()
    }
}

/// Residuals below this multiple of the target norm sit inside the
/// objective evaluation's own rounding noise, where the relative-change rule
/// is meaningless; the run counts as converged there.
const OBJECTIVE_NOISE_REL: f64 = 1e-13;

pub(crate) fn objective_noise_floor(target_norm: f64) -> f64 {
    OBJECTIVE_NOISE_REL * target_norm.max(1.0)
}

/// The finite-difference stencil cannot resolve gradients below the rounding
/// noise of the objective itself (about eps * |target| / eta per component).
/// Gradient norms under this scale-aware floor are treated as a stationary
/// point: the iterate is left unchanged so the tolerance rule fires.
const GRAD_NOISE_REL: f64 = 1e-10;

fn gradient_noise_floor(target_norm: f64) -> f64 {
    GRAD_NOISE_REL * (1.0 + target_norm)
}

/// One outer iteration of a vector-space scheme: next iterate from the
/// current one. Implementations own their per-scheme state. `grad_floor` is
/// the scale-aware noise floor below which gradients read as zero.
trait SchemeStep {
    fn step(
        &mut self,
        obj: &Objective,
        x: &RealVector,
        cfg: &SolverConfig,
        grad_floor: f64,
    ) -> Result<RealVector>;

    /// Wolfe-stepped schemes guarantee a non-increasing error trace; the
    /// driver enforces it by refusing uphill moves.
    fn monotone(&self) -> bool {
        false
    }
}

fn starting_factors(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<Paratuck2Factors> {
    let dims = target.dims();
    match &cfg.initial_factors {
        Some(f) => {
            if f.dims() != dims || f.latent() != latent {
                return Err(Error::Dimension(format!(
                    "initial factors for dims {:?} latent {:?} do not match problem dims {:?} latent {:?}",
                    f.dims(),
                    f.latent(),
                    dims,
                    latent
                )));
            }
            Ok(f.clone())
        }
        None => init_factors(dims, latent, cfg.seed),
    }
}

/// Shared driver: evaluates the objective at each iterate, records the
/// trace, applies the stopping rule, and handles numeric failures with a
/// partial trace.
fn run_vector_scheme<S: SchemeStep>(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
    make_state: impl FnOnce(ParamLayout) -> S,
) -> Result<SolveResult> {
    cfg.validate()?;
    let factors0 = starting_factors(target, latent, cfg)?;
    let layout = factors0.layout();
    let mut state = make_state(layout);
    let obj = Objective::new(move |x: &[f64]| {
        objective_value(target, layout, x).unwrap_or(f64::NAN)
    });

    let noise_floor = objective_noise_floor(target.norm());
    let grad_floor = gradient_noise_floor(target.norm());
    let start = Instant::now();
    let mut x = flatten(&factors0).data().clone();
    let f0 = obj.value(x.as_slice());
    let mut records = vec![TraceRecord {
        iter: 0,
        elapsed_s: start.elapsed().as_secs_f64(),
        error: f0,
    }];
    let mut f_prev = f0;
    let mut stop = StopReason::MaxIters;
    let mut converged = false;

    for iter in 1..=cfg.max_iters {
        match state.step(&obj, &x, cfg, grad_floor) {
            Ok(x_new) => {
                let mut f_new = obj.value(x_new.as_slice());
                if !f_new.is_finite() {
                    stop = StopReason::Numeric;
                    break;
                }
                if state.monotone() && f_new > f_prev {
                    f_new = f_prev;
                } else {
                    x = x_new;
                }
                records.push(TraceRecord {
                    iter,
                    elapsed_s: start.elapsed().as_secs_f64(),
                    error: f_new,
                });
                let rel = rel_change(f_prev, f_new);
                f_prev = f_new;
                if rel < cfg.rel_tol || f_new <= noise_floor {
                    converged = true;
                    stop = StopReason::Tolerance;
                    break;
                }
            }
            Err(Error::NonFinite { .. }) => {
                stop = StopReason::Numeric;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let factors = unflatten_slice(layout, x.as_slice())?;
    Ok(SolveResult {
        factors,
        trace: ConvergenceTrace {
            records,
            objective_evals: obj.evals(),
            converged,
            stop_reason: stop,
        },
    })
}

/// Approximate-Hessian Newton-CG: per iteration, the Newton system is solved
/// by conjugate gradient using only Hessian-vector products, then a Wolfe
/// step is taken along the resulting direction.
pub fn solve_aphen(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_vector_scheme(target, latent, cfg, aphen::AphenState::new)
}

/// Non-negative alternating least squares with multiplicative ratio updates.
pub fn solve_als(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    als::solve(target, latent, cfg)
}

/// Steepest descent with Wolfe-chosen step sizes.
pub fn solve_gd(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_vector_scheme(target, latent, cfg, |_| gradient::GdState::new())
}

/// Nesterov accelerated gradient with fixed momentum and step size.
pub fn solve_nag(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_vector_scheme(target, latent, cfg, |layout| {
        gradient::NagState::new(layout.len())
    })
}

/// Adam with the bias correction written as constant (1 - beta) divisors.
pub fn solve_adam(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_vector_scheme(target, latent, cfg, |layout| {
        gradient::AdamState::new(layout.len())
    })
}

/// SAGA-style update: current gradient minus previous gradient plus the
/// running mean of all past gradients, stepped by Wolfe line search.
pub fn solve_saga(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_vector_scheme(target, latent, cfg, |layout| {
        gradient::SagaState::new(layout.len())
    })
}

/// BFGS with the Hessian approximation kept explicitly and directions from
/// a symmetric positive definite solve.
pub fn solve_bfgs(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_vector_scheme(target, latent, cfg, |layout| {
        bfgs::BfgsState::new(layout.len())
    })
}

/// Dispatch by scheme name.
pub fn solve(
    scheme: Scheme,
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    match scheme {
        Scheme::Aphen => solve_aphen(target, latent, cfg),
        Scheme::Als => solve_als(target, latent, cfg),
        Scheme::Gd => solve_gd(target, latent, cfg),
        Scheme::Nag => solve_nag(target, latent, cfg),
        Scheme::Adam => solve_adam(target, latent, cfg),
        Scheme::Saga => solve_saga(target, latent, cfg),
        Scheme::Bfgs => solve_bfgs(target, latent, cfg),
    }
}
