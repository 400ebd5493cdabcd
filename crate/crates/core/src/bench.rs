//! Benchmark plans: synthetic problem generators, the solver x problem x
//! seed matrix runner, and the CSV trace/summary emitters.
//!
//! Cells of the plan matrix are independent and run on a scoped-thread work
//! pool; the summary row order is the plan order, never completion order,
//! so reruns of the same plan are reproducible apart from wall-clock fields.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::metrics::{accuracy_from_norms, convergence_speed_with, Ordinate, SpeedMode};
use crate::rng::SplitMix64;
use crate::solvers::{solve, ConvergenceTrace, Scheme, SolverConfig, StopReason};
use crate::tensor::DenseTensor3;

/// One benchmark problem: tensor dims plus the latent factors to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemSpec {
    pub dims: (usize, usize, usize),
    pub latent: (usize, usize),
}

impl ProblemSpec {
    pub fn new(dims: (usize, usize, usize), latent: (usize, usize)) -> Self {
        Self { dims, latent }
    }

    /// Stable identifier used in file names and the summary problem column.
    pub fn id(&self) -> String {
        format!(
            "{}x{}x{}_{}x{}",
            self.dims.0, self.dims.1, self.dims.2, self.latent.0, self.latent.1
        )
    }
}

/// The full benchmark request.
#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub problems: Vec<ProblemSpec>,
    pub solvers: Vec<Scheme>,
    pub seeds: Vec<u64>,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub eta: f64,
    pub ordinate: Ordinate,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            problems: Vec::new(),
            solvers: Vec::new(),
            seeds: Vec::new(),
            max_iters: 1000,
            rel_tol: 1e-6,
            eta: 1e-4,
            ordinate: Ordinate::Log10,
        }
    }
}

/// Tensor dims paired with latent factors.
pub type SuiteEntry = ((usize, usize, usize), (usize, usize));

/// The reference problem sizes with their latent factors, in suite order.
pub const SUITE_PROBLEMS: [SuiteEntry; 7] = [
    ((5, 5, 5), (2, 3)),
    ((10, 10, 10), (3, 4)),
    ((15, 10, 10), (5, 4)),
    ((15, 15, 15), (5, 6)),
    ((25, 20, 15), (10, 9)),
    ((50, 40, 20), (15, 14)),
    ((100, 100, 20), (3, 5)),
];

impl BenchPlan {
    /// All seven solvers on the suite problems with seeds 0..=4. The default
    /// suite caps problem size at 25x20x15; `full` adds the two largest.
    pub fn paper_suite(full: bool) -> Self {
        let cap = if full { SUITE_PROBLEMS.len() } else { 5 };
        Self {
            problems: SUITE_PROBLEMS[..cap]
                .iter()
                .map(|&(dims, latent)| ProblemSpec::new(dims, latent))
                .collect(),
            solvers: Scheme::ALL.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() || self.solvers.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "plan needs at least one problem, one solver and one seed".into(),
            ));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(usize, Scheme, u64)> {
        let mut cells = Vec::new();
        for (pi, _) in self.problems.iter().enumerate() {
            for &scheme in &self.solvers {
                for &seed in &self.seeds {
                    cells.push((pi, scheme, seed));
                }
            }
        }
        cells
    }
}

/// One row of the summary: a (problem, solver, seed) cell's outcome.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub problem: String,
    pub dims: (usize, usize, usize),
    pub latent: (usize, usize),
    pub solver: Scheme,
    pub seed: u64,
    pub final_error: f64,
    pub accuracy: f64,
    pub iter_speed: f64,
    pub time_speed: f64,
    pub iterations: usize,
    pub elapsed_s: f64,
    pub objective_evals: u64,
    pub stop_reason: StopReason,
}

/// The synthetic benchmark tensor: entries 1, 2, ..., I*J*K assigned in the
/// fixed linearization order (k-major, then j, then i fastest).
pub fn synth_tensor(dims: (usize, usize, usize)) -> Result<DenseTensor3> {
    let n = dims.0 * dims.1 * dims.2;
    DenseTensor3::new(dims, (1..=n).map(|v| v as f64).collect())
}

const IMBALANCED_SEED: u64 = 0x7a2a_11ce;

/// A non-negative tensor built as the sum of J rank-one components, each
/// confined to a distinct second-mode index, so the second mode carries far
/// richer structure than the first. Exact CP rank is at most J by
/// construction; deterministic for a given shape.
///
/// Each component's third-mode profile lives on a short contiguous block of
/// time indices, so the components barely overlap along the third mode and
/// a full-rank CP fit is well conditioned even though the first mode cannot
/// distinguish them.
pub fn synth_imbalanced_tensor(dims: (usize, usize, usize)) -> Result<DenseTensor3> {
    let (ni, nj, nk) = dims;
    if ni == 0 || nj == 0 || nk == 0 {
        return Err(Error::Dimension(format!(
            "tensor dims must be positive, got {ni}x{nj}x{nk}"
        )));
    }
    let mut rng = SplitMix64::new(IMBALANCED_SEED);
    let mut data = vec![0.0; ni * nj * nk];
    for j in 0..nj {
        let u: Vec<f64> = (0..ni).map(|_| rng.next_range(0.5, 1.5)).collect();
        // Component j owns the j-th contiguous group of third-mode indices,
        // so the groups partition 0..K and the components never overlap.
        let start = j * nk / nj;
        let end = ((j + 1) * nk / nj).max(start + 1).min(nk);
        for k in start..end {
            let w = rng.next_range(0.5, 1.5);
            for (i, ui) in u.iter().enumerate() {
                data[i + ni * j + ni * nj * k] += ui * w;
            }
        }
    }
    DenseTensor3::new(dims, data)
}

struct CellOutcome {
    record: BenchRecord,
    trace: ConvergenceTrace,
}

fn run_cell(
    problem: &ProblemSpec,
    target: &DenseTensor3,
    scheme: Scheme,
    seed: u64,
    plan: &BenchPlan,
) -> Result<CellOutcome> {
    let mut cfg = SolverConfig::new();
    cfg.max_iters = plan.max_iters;
    cfg.rel_tol = plan.rel_tol;
    cfg.fd.eta = plan.eta;
    cfg.seed = seed;
    let result = solve(scheme, target, problem.latent, &cfg)?;
    let trace = result.trace;
    let final_error = trace.final_error();
    let accuracy = accuracy_from_norms(target.norm(), final_error).unwrap_or(f64::NAN);
    let iter_speed = convergence_speed_with(&trace, SpeedMode::IterationBased, plan.ordinate)
        .unwrap_or(f64::NAN);
    let time_speed =
        convergence_speed_with(&trace, SpeedMode::TimeBased, plan.ordinate).unwrap_or(f64::NAN);
    let record = BenchRecord {
        problem: problem.id(),
        dims: problem.dims,
        latent: problem.latent,
        solver: scheme,
        seed,
        final_error,
        accuracy,
        iter_speed,
        time_speed,
        iterations: trace.iterations(),
        elapsed_s: trace.elapsed_s(),
        objective_evals: trace.objective_evals,
        stop_reason: trace.stop_reason,
    };
    Ok(CellOutcome { record, trace })
}

/// Execute every (problem, solver, seed) cell of the plan on `jobs` worker
/// threads. When `out_dir` is given, writes one trace CSV per cell plus
/// `summary.csv`, all in plan order.
pub fn run_benchmark(
    plan: &BenchPlan,
    jobs: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<BenchRecord>> {
    plan.validate()?;
    let targets: Vec<DenseTensor3> = plan
        .problems
        .iter()
        .map(|p| synth_tensor(p.dims))
        .collect::<Result<_>>()?;
    let cells = plan.cells();
    let slots: Vec<OnceLock<Result<CellOutcome>>> =
        (0..cells.len()).map(|_| OnceLock::new()).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.max(1).min(cells.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= cells.len() {
                    break;
                }
                let (pi, scheme, seed) = cells[idx];
                let outcome = run_cell(&plan.problems[pi], &targets[pi], scheme, seed, plan);
                let _ = slots[idx].set(outcome);
            });
        }
    });

    let mut records = Vec::with_capacity(cells.len());
    let mut traces = Vec::with_capacity(cells.len());
    for slot in slots {
        let outcome = slot
            .into_inner()
            .expect("every cell index was claimed by a worker")?;
        records.push(outcome.record);
        traces.push(outcome.trace);
    }

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        for (record, trace) in records.iter().zip(&traces) {
            let name = trace_file_name(record);
            std::fs::write(dir.join(name), trace_csv(trace))?;
        }
        std::fs::write(dir.join("summary.csv"), summary_csv(&records))?;
    }
    Ok(records)
}

/// 17 significant digits: round-trips f64 exactly, dot decimal separator.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_file_name(record: &BenchRecord) -> String {
    format!("trace_{}_{}_s{}.csv", record.problem, record.solver, record.seed)
}

/// Trace CSV: `iter,elapsed_s,error`, one row per outer iteration including
/// iteration 0.
pub fn trace_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from("iter,elapsed_s,error\n");
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.iter,
            fmt_float(r.elapsed_s),
            fmt_float(r.error)
        ));
    }
    out
}

/// Summary CSV with one row per cell, plan order.
pub fn summary_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(
        "problem,dims,latent,solver,seed,final_error,accuracy,iter_speed,time_speed,iterations,elapsed_s,objective_evals,stop_reason\n",
    );
    for r in records {
        let row = [
            r.problem.clone(),
            format!("{}x{}x{}", r.dims.0, r.dims.1, r.dims.2),
            format!("{}x{}", r.latent.0, r.latent.1),
            r.solver.to_string(),
            r.seed.to_string(),
            fmt_float(r.final_error),
            fmt_float(r.accuracy),
            fmt_float(r.iter_speed),
            fmt_float(r.time_speed),
            r.iterations.to_string(),
            fmt_float(r.elapsed_s),
            r.objective_evals.to_string(),
            r.stop_reason.name().to_string(),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_scalar() {
        let t = synth_tensor((1, 1, 1)).unwrap();
        assert_eq!(t.data(), &[1.0]);
    }

    #[test]
    fn synth_two_entries() {
        let t = synth_tensor((2, 1, 1)).unwrap();
        assert_eq!(t.data(), &[1.0, 2.0]);
    }

    #[test]
    fn synth_5x5x5_norm() {
        // sum of squares 1..125 = 125 * 126 * 251 / 6 = 658875
        let t = synth_tensor((5, 5, 5)).unwrap();
        let expected: f64 = (1..=125u64).map(|v| (v * v) as f64).sum();
        assert_eq!(expected, 658_875.0);
        assert!((t.norm() - expected.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn synth_entries_enumerate_exactly() {
        let t = synth_tensor((3, 4, 2)).unwrap();
        let mut seen: Vec<f64> = t.data().to_vec();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<f64> = (1..=24).map(|v| v as f64).collect();
        assert_eq!(seen, expected);
        assert_eq!(t.data().iter().cloned().fold(0.0, f64::max), 24.0);
    }

    #[test]
    fn imbalanced_tensor_is_non_negative_and_deterministic() {
        let a = synth_imbalanced_tensor((2, 20, 30)).unwrap();
        let b = synth_imbalanced_tensor((2, 20, 30)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn imbalanced_tensor_slabs_are_rank_one() {
        // Fixing the second index leaves u_j (outer) w_j, so every 2x2 minor
        // across (i, k) vanishes.
        let t = synth_imbalanced_tensor((3, 5, 7)).unwrap();
        for j in 0..5 {
            for i in 1..3 {
                for k in 1..7 {
                    let det = t.get(0, j, 0) * t.get(i, j, k) - t.get(0, j, k) * t.get(i, j, 0);
                    assert!(det.abs() < 1e-10, "slab {j} has a nonzero minor {det}");
                }
            }
        }
    }

    #[test]
    fn plan_cell_count_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let plan = BenchPlan {
            problems: vec![ProblemSpec::new((4, 3, 2), (2, 2))],
            solvers: vec![Scheme::Als, Scheme::Gd],
            seeds: vec![0],
            max_iters: 5,
            ..Default::default()
        };
        let records = run_benchmark(&plan, 2, Some(dir.path())).unwrap();
        assert_eq!(records.len(), 2);
        let mut files: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        files.sort();
        assert_eq!(
            files,
            vec![
                "summary.csv".to_string(),
                "trace_4x3x2_2x2_als_s0.csv".to_string(),
                "trace_4x3x2_2x2_gd_s0.csv".to_string(),
            ]
        );
    }

    #[test]
    fn rerun_is_deterministic_modulo_time() {
        let plan = BenchPlan {
            problems: vec![ProblemSpec::new((4, 4, 3), (2, 2))],
            solvers: vec![Scheme::Als, Scheme::Adam],
            seeds: vec![0, 1],
            max_iters: 20,
            ..Default::default()
        };
        let a = run_benchmark(&plan, 4, None).unwrap();
        let b = run_benchmark(&plan, 1, None).unwrap();
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.problem, rb.problem);
            assert_eq!(ra.solver, rb.solver);
            assert_eq!(ra.seed, rb.seed);
            assert_eq!(ra.final_error.to_bits(), rb.final_error.to_bits());
            assert_eq!(ra.accuracy.to_bits(), rb.accuracy.to_bits());
            assert_eq!(ra.iter_speed.to_bits(), rb.iter_speed.to_bits());
            assert_eq!(ra.iterations, rb.iterations);
            assert_eq!(ra.objective_evals, rb.objective_evals);
        }
    }

    #[test]
    fn summary_accuracy_recomputable_from_final_error() {
        let plan = BenchPlan {
            problems: vec![ProblemSpec::new((4, 3, 2), (2, 2))],
            solvers: vec![Scheme::Als],
            seeds: vec![0],
            max_iters: 10,
            ..Default::default()
        };
        let records = run_benchmark(&plan, 1, None).unwrap();
        let target = synth_tensor((4, 3, 2)).unwrap();
        for r in &records {
            let recomputed = accuracy_from_norms(target.norm(), r.final_error).unwrap();
            assert!((recomputed - r.accuracy).abs() <= 1e-9);
        }
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [
            0.1,
            1.0 / 3.0,
            658_125f64.sqrt(),
            1e-17,
            12345.678901234567,
        ] {
            let s = fmt_float(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{s} did not round-trip");
        }
    }

    #[test]
    fn records_respect_iteration_cap_and_tolerance_contract() {
        let dir = tempfile::tempdir().unwrap();
        let plan = BenchPlan {
            problems: vec![ProblemSpec::new((5, 4, 3), (2, 2))],
            solvers: vec![Scheme::Als, Scheme::Saga],
            seeds: vec![0, 1],
            max_iters: 400,
            ..Default::default()
        };
        let records = run_benchmark(&plan, 1, Some(dir.path())).unwrap();
        for r in &records {
            assert!(r.iterations <= plan.max_iters);
            if r.stop_reason == StopReason::Tolerance {
                // The trace tail must satisfy the relative-change rule.
                let trace = std::fs::read_to_string(dir.path().join(trace_file_name(r))).unwrap();
                let errors: Vec<f64> = trace
                    .lines()
                    .skip(1)
                    .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
                    .collect();
                let n = errors.len();
                assert!(n >= 2);
                let (f_prev, f_last) = (errors[n - 2], errors[n - 1]);
                let rel = if f_last == f_prev {
                    0.0
                } else {
                    (f_last - f_prev).abs() / f_last.abs()
                };
                let noise_floor = 1e-13 * synth_tensor(r.dims).unwrap().norm().max(1.0);
                assert!(
                    rel < plan.rel_tol || f_last <= noise_floor,
                    "{} seed {}: rel {rel}",
                    r.solver,
                    r.seed
                );
            }
        }
    }

    #[test]
    fn invalid_plan_is_rejected() {
        let plan = BenchPlan::default();
        assert!(run_benchmark(&plan, 1, None).is_err());
    }

    #[test]
    fn paper_suite_shapes() {
        let desk = BenchPlan::paper_suite(false);
        assert_eq!(desk.problems.len(), 5);
        assert_eq!(desk.solvers.len(), 7);
        assert_eq!(desk.seeds, vec![0, 1, 2, 3, 4]);
        let full = BenchPlan::paper_suite(true);
        assert_eq!(full.problems.len(), 7);
        assert_eq!(full.problems[6].dims, (100, 100, 20));
        assert_eq!(full.problems[6].latent, (3, 5));
    }
}
