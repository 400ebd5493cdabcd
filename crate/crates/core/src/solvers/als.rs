//! Non-negative alternating least squares for Paratuck2.
//!
//! One iteration updates A, then the D^A diagonals, then H, then the D^B
//! diagonals, then B, in that order, each through its multiplicative ratio
//! rule and each using the freshest values of the other blocks. The diagonal
//! updates are applied slice-wise: slice k has its own K-indexed linear
//! model vec(X_k) = Z_k d_k, while A, H and B accumulate numerator and
//! denominator over all slices.
//!
//! Ratio denominators are floored at a small positive value before
//! division, which preserves the exact-fit fixed point to machine precision
//! while keeping zero denominators from producing NaN.

use std::time::Instant;

use crate::decomp::{flatten, objective_value, Paratuck2Factors};
use crate::derivatives::Objective;
use crate::error::{Error, Result};
use crate::solvers::{
    objective_noise_floor, rel_change, starting_factors, ConvergenceTrace, SolveResult,
    SolverConfig, StopReason, TraceRecord,
};
use crate::tensor::{DenseMatrix, DenseTensor3};

/// Floor applied to every ratio denominator before division.
#[derive(Debug, Clone, Copy)]
pub struct AlsParams {
    pub denom_floor: f64,
}

impl Default for AlsParams {
    fn default() -> Self {
        Self { denom_floor: 1e-12 }
    }
}

pub(super) fn solve(
    target: &DenseTensor3,
    latent: (usize, usize),
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if let Some(&bad) = target.data().iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "multiplicative updates require a non-negative target, found {bad}"
        )));
    }
    let mut factors = starting_factors(target, latent, cfg)?;
    let layout = factors.layout();
    let obj = Objective::new(move |x: &[f64]| {
        objective_value(target, layout, x).unwrap_or(f64::NAN)
    });
    let error_of = |f: &Paratuck2Factors| obj.value(flatten(f).as_slice());

    let (_, _, k) = target.dims();
    let slices: Vec<DenseMatrix> = (0..k)
        .map(|kk| target.frontal_slice(kk).expect("k within range"))
        .collect();

    let noise_floor = objective_noise_floor(target.norm());
    let start = Instant::now();
    let f0 = error_of(&factors);
    let mut records = vec![TraceRecord {
        iter: 0,
        elapsed_s: start.elapsed().as_secs_f64(),
        error: f0,
    }];
    let mut f_prev = f0;
    let mut stop = StopReason::MaxIters;
    let mut converged = false;
    let mut backup = factors.clone();

    for iter in 1..=cfg.max_iters {
        sweep(&mut factors, &slices, cfg.als.denom_floor)?;
        let f_new = error_of(&factors);
        if !f_new.is_finite() {
            factors = backup;
            stop = StopReason::Numeric;
            break;
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
        backup = factors.clone();
    }

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

/// One full A -> D^A -> H -> D^B -> B sweep.
fn sweep(factors: &mut Paratuck2Factors, slices: &[DenseMatrix], floor: f64) -> Result<()> {
    update_a(factors, slices, floor)?;
    update_da(factors, slices, floor)?;
    update_h(factors, slices, floor)?;
    update_db(factors, slices, floor)?;
    update_b(factors, slices, floor)?;
    Ok(())
}

fn add_into(acc: &mut DenseMatrix, m: &DenseMatrix) {
    for (a, b) in acc.data_mut().iter_mut().zip(m.data()) {
        *a += b;
    }
}

fn multiplicative_update(base: &mut [f64], num: &[f64], den: &[f64], floor: f64) {
    for ((b, n), d) in base.iter_mut().zip(num).zip(den) {
        *b *= n / d.max(floor);
    }
}

/// a_ip <- a_ip [X F^T]_ip / [A (F F^T)]_ip with F_k = D^A_k H D^B_k B^T.
fn update_a(factors: &mut Paratuck2Factors, slices: &[DenseMatrix], floor: f64) -> Result<()> {
    let (i, _, _) = factors.dims();
    let (p, _) = factors.latent();
    let mut num = DenseMatrix::zeros(i, p);
    let mut gram = DenseMatrix::zeros(p, p);
    for (k, x_k) in slices.iter().enumerate() {
        let f_k = factors
            .h()
            .scale_rows(factors.da().slice(k))?
            .scale_cols(factors.db().slice(k))?
            .matmul_transpose_b(factors.b())?;
        add_into(&mut num, &x_k.matmul_transpose_b(&f_k)?);
        add_into(&mut gram, &f_k.matmul_transpose_b(&f_k)?);
    }
    let den = factors.a().matmul(&gram)?;
    multiplicative_update(factors.parts_mut().0.data_mut(), num.data(), den.data(), floor);
    Ok(())
}

/// d^a_pp <- d^a_pp [Z^T x]_p / [(Z^T Z) d^a]_p per slice, with
/// Z = (B D^B_k H^T) (khatri-rao) A. The products use the Khatri-Rao
/// identities Z^T x = diag(A^T X_k U) and Z^T Z = (U^T U) .* (A^T A).
fn update_da(factors: &mut Paratuck2Factors, slices: &[DenseMatrix], floor: f64) -> Result<()> {
    let (p, _) = factors.latent();
    let gram_a = factors.a().matmul_transpose_a(factors.a())?;
    for (k, x_k) in slices.iter().enumerate() {
        let u = factors
            .b()
            .scale_cols(factors.db().slice(k))?
            .matmul_transpose_b(factors.h())?;
        let w = factors.a().matmul_transpose_a(x_k)?;
        let mut num = vec![0.0; p];
        for (pp, value) in num.iter_mut().enumerate() {
            *value = (0..u.rows()).map(|j| w.get(pp, j) * u.get(j, pp)).sum();
        }
        let gram_u = u.matmul_transpose_a(&u)?;
        let mut gram = gram_u;
        for (g, ga) in gram.data_mut().iter_mut().zip(gram_a.data()) {
            *g *= ga;
        }
        let den = gram.matvec(factors.da().slice(k))?;
        multiplicative_update(factors.parts_mut().1.slice_mut(k), &num, &den, floor);
    }
    Ok(())
}

/// h_pq <- h_pq [Z^T x]_pq / [(Z^T Z) vec(H)]_pq accumulated over slices,
/// with Z_k = (B D^B_k) (kronecker) (A D^A_k). The Kronecker mixed-product
/// identities give Z^T x = (A D^A_k)^T X_k (B D^B_k) and
/// (Z^T Z) vec(H) = vec(gramA_k H gramB_k).
fn update_h(factors: &mut Paratuck2Factors, slices: &[DenseMatrix], floor: f64) -> Result<()> {
    let (p, q) = factors.latent();
    let mut num = DenseMatrix::zeros(p, q);
    let mut den = DenseMatrix::zeros(p, q);
    for (k, x_k) in slices.iter().enumerate() {
        let a_scaled = factors.a().scale_cols(factors.da().slice(k))?;
        let b_scaled = factors.b().scale_cols(factors.db().slice(k))?;
        add_into(&mut num, &a_scaled.matmul_transpose_a(x_k)?.matmul(&b_scaled)?);
        let gram_a = a_scaled.matmul_transpose_a(&a_scaled)?;
        let gram_b = b_scaled.matmul_transpose_a(&b_scaled)?;
        add_into(&mut den, &gram_a.matmul(factors.h())?.matmul(&gram_b)?);
    }
    multiplicative_update(factors.parts_mut().2.data_mut(), num.data(), den.data(), floor);
    Ok(())
}

/// d^b_qq <- d^b_qq [Z^T x]_q / [(Z^T Z) d^b]_q per slice, with
/// Z = B (khatri-rao) (A D^A_k H).
fn update_db(factors: &mut Paratuck2Factors, slices: &[DenseMatrix], floor: f64) -> Result<()> {
    let (_, q) = factors.latent();
    let gram_b = factors.b().matmul_transpose_a(factors.b())?;
    for (k, x_k) in slices.iter().enumerate() {
        let v = factors
            .a()
            .scale_cols(factors.da().slice(k))?
            .matmul(factors.h())?;
        let w = v.matmul_transpose_a(x_k)?;
        let mut num = vec![0.0; q];
        for (qq, value) in num.iter_mut().enumerate() {
            *value = (0..factors.b().rows())
                .map(|j| w.get(qq, j) * factors.b().get(j, qq))
                .sum();
        }
        let gram_v = v.matmul_transpose_a(&v)?;
        let mut gram = gram_b.clone();
        for (g, gv) in gram.data_mut().iter_mut().zip(gram_v.data()) {
            *g *= gv;
        }
        let den = gram.matvec(factors.db().slice(k))?;
        multiplicative_update(factors.parts_mut().3.slice_mut(k), &num, &den, floor);
    }
    Ok(())
}

/// b_jq <- b_jq [X^T F^T]_jq / [B (F F^T)]_jq with F_k = (A D^A_k H D^B_k)^T.
fn update_b(factors: &mut Paratuck2Factors, slices: &[DenseMatrix], floor: f64) -> Result<()> {
    let (_, j, _) = factors.dims();
    let (_, q) = factors.latent();
    let mut num = DenseMatrix::zeros(j, q);
    let mut gram = DenseMatrix::zeros(q, q);
    for (k, x_k) in slices.iter().enumerate() {
        let g_k = factors
            .a()
            .scale_cols(factors.da().slice(k))?
            .matmul(factors.h())?
            .scale_cols(factors.db().slice(k))?;
        add_into(&mut num, &x_k.matmul_transpose_a(&g_k)?);
        add_into(&mut gram, &g_k.matmul_transpose_a(&g_k)?);
    }
    let den = factors.b().matmul(&gram)?;
    multiplicative_update(factors.parts_mut().4.data_mut(), num.data(), den.data(), floor);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{init_factors, paratuck2_reconstruct};
    use crate::rng::SplitMix64;
    use crate::tensor::{khatri_rao, kronecker};

    fn non_negative_factors(
        dims: (usize, usize, usize),
        latent: (usize, usize),
        seed: u64,
    ) -> Paratuck2Factors {
        let mut f = init_factors(dims, latent, seed).unwrap();
        // Randomize the diagonals too so the oracle exercises them.
        let mut rng = SplitMix64::new(seed.wrapping_add(1));
        let (_, da, _, db, _) = f.parts_mut();
        for k in 0..da.slices() {
            for v in da.slice_mut(k) {
                *v = rng.next_range(0.2, 1.5);
            }
        }
        for k in 0..db.slices() {
            for v in db.slice_mut(k) {
                *v = rng.next_range(0.2, 1.5);
            }
        }
        f
    }

    fn target_slices(t: &DenseTensor3) -> Vec<DenseMatrix> {
        (0..t.dims().2).map(|k| t.frontal_slice(k).unwrap()).collect()
    }

    #[test]
    fn exact_fit_is_a_fixed_point() {
        let f = non_negative_factors((4, 3, 2), (2, 2), 21);
        let target = paratuck2_reconstruct(&f);
        let slices = target_slices(&target);
        let mut updated = f.clone();
        sweep(&mut updated, &slices, 1e-12).unwrap();
        for (before, after) in [
            (f.a().data(), updated.a().data()),
            (f.da().data(), updated.da().data()),
            (f.h().data(), updated.h().data()),
            (f.db().data(), updated.db().data()),
            (f.b().data(), updated.b().data()),
        ] {
            for (x, y) in before.iter().zip(after) {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} moved to {y}");
            }
        }
    }

    #[test]
    fn factors_stay_non_negative() {
        let target = crate::bench::synth_tensor((5, 4, 3)).unwrap();
        let slices = target_slices(&target);
        let mut f = init_factors((5, 4, 3), (2, 3), 2).unwrap();
        for _ in 0..25 {
            sweep(&mut f, &slices, 1e-12).unwrap();
            let all = f
                .a()
                .data()
                .iter()
                .chain(f.da().data())
                .chain(f.h().data())
                .chain(f.db().data())
                .chain(f.b().data());
            for &v in all {
                assert!(v >= 0.0, "negative factor entry {v}");
            }
        }
    }

    #[test]
    fn error_decreases_on_synthetic_target() {
        let target = crate::bench::synth_tensor((5, 4, 3)).unwrap();
        let slices = target_slices(&target);
        let mut f = init_factors((5, 4, 3), (2, 3), 4).unwrap();
        let before = target.distance(&paratuck2_reconstruct(&f)).unwrap();
        for _ in 0..50 {
            sweep(&mut f, &slices, 1e-12).unwrap();
        }
        let after = target.distance(&paratuck2_reconstruct(&f)).unwrap();
        assert!(after < 0.5 * before, "no progress: {before} -> {after}");
    }

    // The three structured updates use Khatri-Rao/Kronecker identities
    // instead of materializing Z; these oracles materialize Z with the
    // tensor primitives and must agree exactly up to float roundoff.

    #[test]
    fn da_update_matches_materialized_khatri_rao() {
        let f = non_negative_factors((3, 4, 2), (2, 2), 23);
        let target = paratuck2_reconstruct(&f);
        let slices = target_slices(&target);
        let (p, _) = f.latent();
        let gram_a = f.a().matmul_transpose_a(f.a()).unwrap();
        for (k, x_k) in slices.iter().enumerate() {
            let u = f
                .b()
                .scale_cols(f.db().slice(k))
                .unwrap()
                .matmul_transpose_b(f.h())
                .unwrap();
            let z = khatri_rao(&u, f.a()).unwrap();
            let x_vec: Vec<f64> = {
                let (i, j, _) = target.dims();
                let mut v = Vec::with_capacity(i * j);
                for jj in 0..j {
                    for ii in 0..i {
                        v.push(x_k.get(ii, jj));
                    }
                }
                v
            };
            let num_oracle = z.matvec_transpose(&x_vec).unwrap();
            let den_oracle = z
                .matmul_transpose_a(&z)
                .unwrap()
                .matvec(f.da().slice(k))
                .unwrap();

            // Fast path, replicated from update_da.
            let w = f.a().matmul_transpose_a(x_k).unwrap();
            let mut num = vec![0.0; p];
            for (pp, value) in num.iter_mut().enumerate() {
                *value = (0..u.rows()).map(|j| w.get(pp, j) * u.get(j, pp)).sum();
            }
            let gram_u = u.matmul_transpose_a(&u).unwrap();
            let mut gram = gram_u;
            for (g, ga) in gram.data_mut().iter_mut().zip(gram_a.data()) {
                *g *= ga;
            }
            let den = gram.matvec(f.da().slice(k)).unwrap();

            for pp in 0..p {
                assert!((num[pp] - num_oracle[pp]).abs() < 1e-10);
                assert!((den[pp] - den_oracle[pp]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn h_update_matches_materialized_kronecker() {
        let f = non_negative_factors((3, 4, 2), (2, 2), 29);
        let target = paratuck2_reconstruct(&f);
        let slices = target_slices(&target);
        let (p, q) = f.latent();
        for (k, x_k) in slices.iter().enumerate() {
            let a_scaled = f.a().scale_cols(f.da().slice(k)).unwrap();
            let b_scaled = f.b().scale_cols(f.db().slice(k)).unwrap();
            let z = kronecker(&b_scaled, &a_scaled);
            let (i, j, _) = target.dims();
            let mut x_vec = Vec::with_capacity(i * j);
            for jj in 0..j {
                for ii in 0..i {
                    x_vec.push(x_k.get(ii, jj));
                }
            }
            let num_oracle = z.matvec_transpose(&x_vec).unwrap();
            let mut vech = vec![0.0; p * q];
            for pp in 0..p {
                for qq in 0..q {
                    vech[qq * p + pp] = f.h().get(pp, qq);
                }
            }
            let den_oracle = z.matmul_transpose_a(&z).unwrap().matvec(&vech).unwrap();

            let num = a_scaled
                .matmul_transpose_a(x_k)
                .unwrap()
                .matmul(&b_scaled)
                .unwrap();
            let gram_a = a_scaled.matmul_transpose_a(&a_scaled).unwrap();
            let gram_b = b_scaled.matmul_transpose_a(&b_scaled).unwrap();
            let den = gram_a.matmul(f.h()).unwrap().matmul(&gram_b).unwrap();

            for pp in 0..p {
                for qq in 0..q {
                    assert!((num.get(pp, qq) - num_oracle[qq * p + pp]).abs() < 1e-10);
                    assert!((den.get(pp, qq) - den_oracle[qq * p + pp]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn db_update_matches_materialized_khatri_rao() {
        let f = non_negative_factors((3, 4, 2), (2, 2), 37);
        let target = paratuck2_reconstruct(&f);
        let slices = target_slices(&target);
        let (_, q) = f.latent();
        let gram_b = f.b().matmul_transpose_a(f.b()).unwrap();
        for (k, x_k) in slices.iter().enumerate() {
            let v = f.a().scale_cols(f.da().slice(k)).unwrap().matmul(f.h()).unwrap();
            let z = khatri_rao(f.b(), &v).unwrap();
            let (i, j, _) = target.dims();
            let mut x_vec = Vec::with_capacity(i * j);
            for jj in 0..j {
                for ii in 0..i {
                    x_vec.push(x_k.get(ii, jj));
                }
            }
            let num_oracle = z.matvec_transpose(&x_vec).unwrap();
            let den_oracle = z
                .matmul_transpose_a(&z)
                .unwrap()
                .matvec(f.db().slice(k))
                .unwrap();

            let w = v.matmul_transpose_a(x_k).unwrap();
            let mut num = vec![0.0; q];
            for (qq, value) in num.iter_mut().enumerate() {
                *value = (0..f.b().rows()).map(|j| w.get(qq, j) * f.b().get(j, qq)).sum();
            }
            let gram_v = v.matmul_transpose_a(&v).unwrap();
            let mut gram = gram_b.clone();
            for (g, gv) in gram.data_mut().iter_mut().zip(gram_v.data()) {
                *g *= gv;
            }
            let den = gram.matvec(f.db().slice(k)).unwrap();

            for qq in 0..q {
                assert!((num[qq] - num_oracle[qq]).abs() < 1e-10);
                assert!((den[qq] - den_oracle[qq]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn negative_target_is_rejected() {
        let target = DenseTensor3::new((2, 2, 1), vec![1.0, -0.5, 2.0, 3.0]).unwrap();
        let cfg = SolverConfig::new();
        assert!(solve(&target, (1, 1), &cfg).is_err());
    }
}
