//! Benchmark CLI: generates synthetic tensors, runs the requested
//! solver x problem x seed matrix, and writes per-cell trace CSVs plus a
//! summary CSV.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use tensolve::{run_benchmark, BenchPlan, Ordinate, ProblemSpec, Scheme};

#[derive(Parser)]
#[command(name = "tensolve", version, about = "Paratuck2 solver benchmark runner")]
struct Cli {
    /// Tensor dimensions IxJxK; repeat the flag for several problems.
    #[arg(long = "dims", value_name = "IxJxK", value_parser = parse_dims3)]
    dims: Vec<Dims3>,

    /// Latent factors PxQ, paired with --dims by position.
    #[arg(long = "latent", value_name = "PxQ", value_parser = parse_dims2)]
    latent: Vec<Dims2>,

    /// Solvers to run (comma separated).
    #[arg(
        long,
        value_name = "NAME[,NAME...]",
        value_delimiter = ',',
        value_parser = parse_scheme
    )]
    solvers: Vec<Scheme>,

    /// Seeds to run (comma separated). Defaults to 0,1,2,3,4.
    #[arg(long, value_name = "S[,S...]", value_delimiter = ',')]
    seeds: Vec<u64>,

    /// Iteration cap per solve.
    #[arg(long = "max-iters", value_name = "N", default_value_t = 1000)]
    max_iters: usize,

    /// Relative-change stopping tolerance.
    #[arg(long, value_name = "R", default_value_t = 1e-6)]
    tol: f64,

    /// Finite-difference perturbation.
    #[arg(long, value_name = "R", default_value_t = 1e-4)]
    eta: f64,

    /// Worker threads for independent plan cells.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,

    /// Output directory for trace and summary CSVs.
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,

    /// Run the reference problem suite capped at 25x20x15.
    #[arg(long = "paper-suite")]
    paper_suite: bool,

    /// Run the full reference suite including 50x40x20 and 100x100x20.
    #[arg(long = "paper-suite-full")]
    paper_suite_full: bool,

    /// Ordinate transform for the convergence-speed fits.
    #[arg(long, value_enum, default_value_t = OrdinateArg::Log10)]
    ordinate: OrdinateArg,
}

#[derive(Clone, Copy)]
struct Dims3((usize, usize, usize));

#[derive(Clone, Copy)]
struct Dims2((usize, usize));

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrdinateArg {
    Log10,
    Raw,
}

fn parse_positive_list(s: &str, parts: usize) -> Result<Vec<usize>, String> {
    let values: Vec<usize> = s
        .split('x')
        .map(|tok| tok.parse::<usize>().map_err(|_| format!("'{tok}' is not a positive integer")))
        .collect::<Result<_, _>>()?;
    if values.len() != parts {
        return Err(format!(
            "expected {parts} 'x'-separated values, got {}",
            values.len()
        ));
    }
    if values.contains(&0) {
        return Err("all values must be positive".into());
    }
    Ok(values)
}

fn parse_dims3(s: &str) -> Result<Dims3, String> {
    let v = parse_positive_list(s, 3)?;
    Ok(Dims3((v[0], v[1], v[2])))
}

fn parse_dims2(s: &str) -> Result<Dims2, String> {
    let v = parse_positive_list(s, 2)?;
    Ok(Dims2((v[0], v[1])))
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).map_err(|e| e.to_string())
}

fn build_plan(cli: &Cli) -> Result<BenchPlan, String> {
    let mut plan = if cli.paper_suite || cli.paper_suite_full {
        BenchPlan::paper_suite(cli.paper_suite_full)
    } else {
        if cli.dims.is_empty() {
            return Err("no problems given: pass --dims/--latent or --paper-suite".into());
        }
        if cli.dims.len() != cli.latent.len() {
            return Err(format!(
                "{} --dims but {} --latent; they pair by position",
                cli.dims.len(),
                cli.latent.len()
            ));
        }
        let mut plan = BenchPlan {
            problems: cli
                .dims
                .iter()
                .zip(&cli.latent)
                .map(|(d, l)| ProblemSpec::new(d.0, l.0))
                .collect(),
            solvers: Scheme::ALL.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            ..BenchPlan::default()
        };
        plan.max_iters = 1000;
        plan
    };
    if !cli.solvers.is_empty() {
        plan.solvers = cli.solvers.clone();
    }
    if !cli.seeds.is_empty() {
        plan.seeds = cli.seeds.clone();
    }
    plan.max_iters = cli.max_iters;
    plan.rel_tol = cli.tol;
    plan.eta = cli.eta;
    plan.ordinate = match cli.ordinate {
        OrdinateArg::Log10 => Ordinate::Log10,
        OrdinateArg::Raw => Ordinate::Raw,
    };
    Ok(plan)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let plan = match build_plan(&cli) {
        Ok(plan) => plan,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };

    match run_benchmark(&plan, cli.jobs, Some(&cli.out)) {
        Ok(records) => {
            for r in &records {
                println!(
                    "{} {} seed {}: accuracy {:.4} final_error {:.6e} iters {} stop {}",
                    r.problem,
                    r.solver,
                    r.seed,
                    r.accuracy,
                    r.final_error,
                    r.iterations,
                    r.stop_reason.name()
                );
            }
            println!(
                "wrote {} trace files and summary.csv to {}",
                records.len(),
                cli.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
