//! CP-ALS baseline: fit a rank-R CP decomposition by alternating exact
//! least-squares factor updates. Used to demonstrate how the CP model under-
//! and overfits imbalanced tensors where Paratuck2 does not.

use std::time::Instant;

use crate::decomp::CpFactors;
use crate::error::{Error, Result};
use crate::linalg::solve_spd_ridged;
use crate::rng::SplitMix64;
use crate::solvers::{ConvergenceTrace, StopReason, TraceRecord};
use crate::tensor::{DenseMatrix, DenseTensor3};

/// Configuration for the CP-ALS fit.
#[derive(Debug, Clone, Copy)]
pub struct CpAlsConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for CpAlsConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            rel_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Fitted factors plus the convergence trace of the fit.
#[derive(Debug, Clone)]
pub struct CpFitResult {
    pub factors: CpFactors,
    pub trace: ConvergenceTrace,
}

/// Alternating least squares for the rank-R CP model of a 3-way tensor.
///
/// Each mode update solves the normal equations M = X_(n) (KR product) and
/// factor = M V^-1 with V the Hadamard product of the other factors' Gram
/// matrices; a tiny ridge covers rank-deficient V.
pub fn cp_als(target: &DenseTensor3, rank: usize, cfg: &CpAlsConfig) -> Result<CpFitResult> {
    if rank == 0 {
        return Err(Error::InvalidArgument("CP rank must be positive".into()));
    }
    if cfg.max_iters == 0 || !(cfg.rel_tol > 0.0) {
        return Err(Error::InvalidArgument(
            "cp_als needs max_iters >= 1 and rel_tol > 0".into(),
        ));
    }
    let (ni, nj, nk) = target.dims();
    let mut rng = SplitMix64::new(cfg.seed);
    let mut draw = |rows: usize| {
        DenseMatrix::new(rows, rank, (0..rows * rank).map(|_| rng.next_f64()).collect())
            .expect("drawn matrix matches shape")
    };
    let mut a = draw(ni);
    let mut b = draw(nj);
    let mut c = draw(nk);

    let slices: Vec<DenseMatrix> = (0..nk)
        .map(|k| target.frontal_slice(k).expect("k within range"))
        .collect();

    // Residual norm straight from the factors; avoids building the model
    // tensor every iteration.
    let error_of = |a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix| -> f64 {
        let mut sum_sq = 0.0;
        for (k, x_k) in slices.iter().enumerate() {
            for jj in 0..nj {
                for ii in 0..ni {
                    let mut model = 0.0;
                    for r in 0..rank {
                        model += a.get(ii, r) * b.get(jj, r) * c.get(k, r);
                    }
                    let d = x_k.get(ii, jj) - model;
                    sum_sq += d * d;
                }
            }
        }
        sum_sq.sqrt()
    };

    let start = Instant::now();
    let f0 = error_of(&a, &b, &c);
    let mut records = vec![TraceRecord {
        iter: 0,
        elapsed_s: start.elapsed().as_secs_f64(),
        error: f0,
    }];
    let mut f_prev = f0;
    let mut stop = StopReason::MaxIters;
    let mut converged = false;
    let mut evals: u64 = 1;

    for iter in 1..=cfg.max_iters {
        update_mode_a(&mut a, &b, &c, &slices)?;
        update_mode_b(&a, &mut b, &c, &slices)?;
        update_mode_c(&a, &b, &mut c, &slices)?;
        rebalance(&mut a, &mut b, &mut c);
        let f_new = error_of(&a, &b, &c);
        evals += 1;

        if !f_new.is_finite() {
            stop = StopReason::Numeric;
            break;
        }
        records.push(TraceRecord {
            iter,
            elapsed_s: start.elapsed().as_secs_f64(),
            error: f_new,
        });
        let rel = if f_new == f_prev {
            0.0
        } else {
            (f_new - f_prev).abs() / f_new.abs()
        };
        f_prev = f_new;
        if rel < cfg.rel_tol {
            converged = true;
            stop = StopReason::Tolerance;
            break;
        }
    }

    Ok(CpFitResult {
        factors: CpFactors::new(vec![a, b, c])?,
        trace: ConvergenceTrace {
            records,
            objective_evals: evals,
            converged,
            stop_reason: stop,
        },
    })
}

/// Even out column norms across the three factors without changing the
/// model; keeps the per-mode Gram matrices away from wild scale imbalance.
fn rebalance(a: &mut DenseMatrix, b: &mut DenseMatrix, c: &mut DenseMatrix) {
    let col_norm = |m: &DenseMatrix, r: usize| -> f64 {
        (0..m.rows()).map(|i| m.get(i, r) * m.get(i, r)).sum::<f64>().sqrt()
    };
    let rescale = |m: &mut DenseMatrix, r: usize, factor: f64| {
        for i in 0..m.rows() {
            let v = m.get(i, r) * factor;
            m.set(i, r, v);
        }
    };
    for r in 0..a.cols() {
        let (sa, sb, sc) = (col_norm(a, r), col_norm(b, r), col_norm(c, r));
        if sa == 0.0 || sb == 0.0 || sc == 0.0 {
            continue;
        }
        let target = (sa * sb * sc).cbrt();
        rescale(a, r, target / sa);
        rescale(b, r, target / sb);
        rescale(c, r, target / sc);
    }
}

fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = a.clone();
    for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
        *x *= y;
    }
    out
}

/// Solve factor * V = M row by row for a symmetric V.
fn solve_rows(m: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let rhs: Vec<f64> = (0..m.cols()).map(|c| m.get(r, c)).collect();
        let row = solve_spd_ridged(v, &rhs).ok_or_else(|| {
            Error::InvalidArgument("CP normal equations are numerically singular".into())
        })?;
        for (cc, value) in row.iter().enumerate() {
            out.set(r, cc, *value);
        }
    }
    Ok(out)
}

/// M1[i][r] = sum_{j,k} X[i,j,k] B[j,r] C[k,r]; A = M1 (C'C .* B'B)^-1.
fn update_mode_a(
    a: &mut DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
    slices: &[DenseMatrix],
) -> Result<()> {
    let mut m = DenseMatrix::zeros(a.rows(), a.cols());
    for (k, x_k) in slices.iter().enumerate() {
        let xb = x_k.matmul(b)?;
        for i in 0..m.rows() {
            for r in 0..m.cols() {
                let v = m.get(i, r) + xb.get(i, r) * c.get(k, r);
                m.set(i, r, v);
            }
        }
    }
    let v = hadamard(&c.matmul_transpose_a(c)?, &b.matmul_transpose_a(b)?);
    *a = solve_rows(&m, &v)?;
    Ok(())
}

/// M2[j][r] = sum_{i,k} X[i,j,k] A[i,r] C[k,r]; B = M2 (C'C .* A'A)^-1.
fn update_mode_b(
    a: &DenseMatrix,
    b: &mut DenseMatrix,
    c: &DenseMatrix,
    slices: &[DenseMatrix],
) -> Result<()> {
    let mut m = DenseMatrix::zeros(b.rows(), b.cols());
    for (k, x_k) in slices.iter().enumerate() {
        let xa = x_k.matmul_transpose_a(a)?;
        for j in 0..m.rows() {
            for r in 0..m.cols() {
                let v = m.get(j, r) + xa.get(j, r) * c.get(k, r);
                m.set(j, r, v);
            }
        }
    }
    let v = hadamard(&c.matmul_transpose_a(c)?, &a.matmul_transpose_a(a)?);
    *b = solve_rows(&m, &v)?;
    Ok(())
}

/// M3[k][r] = sum_{i,j} X[i,j,k] A[i,r] B[j,r]; C = M3 (B'B .* A'A)^-1.
fn update_mode_c(
    a: &DenseMatrix,
    b: &DenseMatrix,
    c: &mut DenseMatrix,
    slices: &[DenseMatrix],
) -> Result<()> {
    let mut m = DenseMatrix::zeros(c.rows(), c.cols());
    for (k, x_k) in slices.iter().enumerate() {
        let ax = a.matmul_transpose_a(x_k)?; // R x J
        for r in 0..m.cols() {
            let mut acc = 0.0;
            for j in 0..b.rows() {
                acc += ax.get(r, j) * b.get(j, r);
            }
            m.set(k, r, acc);
        }
    }
    let v = hadamard(&b.matmul_transpose_a(b)?, &a.matmul_transpose_a(a)?);
    *c = solve_rows(&m, &v)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::cp_reconstruct;

    #[test]
    fn fits_rank_one_ones_tensor() {
        let t = DenseTensor3::new((3, 4, 2), vec![1.0; 24]).unwrap();
        let fit = cp_als(&t, 1, &CpAlsConfig::default()).unwrap();
        assert!(fit.trace.final_error() < 1e-8 * t.norm());
    }

    #[test]
    fn recovers_exact_low_rank_tensor() {
        let mut rng = SplitMix64::new(5);
        let mut draw = |rows: usize| {
            DenseMatrix::new(rows, 2, (0..rows * 2).map(|_| rng.next_range(0.5, 1.5)).collect())
                .unwrap()
        };
        let truth = CpFactors::new(vec![draw(3), draw(4), draw(5)]).unwrap();
        let t = cp_reconstruct(&truth).unwrap();
        let cfg = CpAlsConfig {
            max_iters: 20_000,
            rel_tol: 1e-12,
            seed: 0,
        };
        let fit = cp_als(&t, 2, &cfg).unwrap();
        assert!(
            fit.trace.final_error() < 1e-6 * t.norm(),
            "residual {} on norm {}",
            fit.trace.final_error(),
            t.norm()
        );
    }

    #[test]
    fn error_is_non_increasing() {
        let t = crate::bench::synth_tensor((4, 4, 4)).unwrap();
        let fit = cp_als(&t, 2, &CpAlsConfig { max_iters: 50, ..Default::default() }).unwrap();
        for w in fit.trace.records.windows(2) {
            assert!(w[1].error <= w[0].error + 1e-9 * w[0].error.max(1.0));
        }
    }

    #[test]
    fn rejects_zero_rank() {
        let t = DenseTensor3::new((2, 2, 2), vec![1.0; 8]).unwrap();
        assert!(cp_als(&t, 0, &CpAlsConfig::default()).is_err());
    }
}
