use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use lpsections::sections::SolverMethod;
use lpsections_cli::grid::{parse_count, parse_counts, parse_exponents, parse_reals};
use lpsections_cli::{run, CliResult, Experiment, ExperimentConfig, FitSpec};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Solver {
    Net,
    Opt,
}

/// Gaussian concentration of l_p norms and random almost-Euclidean sections.
///
/// Grids take comma-separated items: numbers (`1e6`, `2^10`), `inf` for
/// --p, integer ranges `a..b` or `2^i..2^j`, real ranges `start:stop:step`.
/// Unset options fall back to the experiment's preset.
#[derive(Debug, Parser)]
#[command(name = "lpsections", version)]
struct Args {
    /// variance, tails, moments, pairmoments, anticonc, section, critdim, process or theory-table
    #[arg(value_parser = parse_experiment)]
    experiment: Experiment,
    /// Dimension grid.
    #[arg(long)]
    n: Option<String>,
    /// Exponent grid, `inf` allowed.
    #[arg(long)]
    p: Option<String>,
    /// Section dimensions.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    /// Moment orders.
    #[arg(long)]
    r: Option<String>,
    /// Monte Carlo samples per grid point.
    #[arg(long, value_parser = |s: &str| parse_count("samples", s).map_err(|e| e.to_string()))]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Results CSV; sidecars are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Regime threshold constant in `p <= c0 log n`.
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long = "bigC")]
    big_c: Option<f64>,
    #[arg(long = "smallC")]
    small_c: Option<f64>,
    /// Normal quantile for confidence intervals.
    #[arg(long = "ci-z")]
    ci_z: Option<f64>,
    #[arg(long, value_enum)]
    solver: Option<Solver>,
    /// Net separation.
    #[arg(long)]
    delta: Option<f64>,
    /// Random starts for the optimizer.
    #[arg(long)]
    restarts: Option<usize>,
    /// Optimizer stopping tolerance (relative gain).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Count a section as a success only when the certified net bound is below 1+eps.
    #[arg(long)]
    certified: bool,
    /// Success level for critdim.
    #[arg(long)]
    target: Option<f64>,
    /// Exit with status 3 when a numerical-instability flag is raised.
    #[arg(long)]
    strict: bool,
    /// Least-squares fit over result columns, written as "y ~ x", e.g. "log(var) ~ log(n)".
    #[arg(long)]
    fit: Option<String>,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    Experiment::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
        format!("unknown experiment '{s}'; expected one of {}", names.join(", "))
    })
}

fn build_config(a: Args) -> CliResult<ExperimentConfig> {
    let mut c = ExperimentConfig::preset(a.experiment);
    if let Some(s) = &a.n {
        c.n = parse_counts("n", s)?;
    }
    if let Some(s) = &a.p {
        c.p = parse_exponents("p", s)?;
    }
    if let Some(s) = &a.k {
        c.k = parse_counts("k", s)?;
    }
    if let Some(s) = &a.eps {
        c.eps = parse_reals("eps", s)?;
    }
    if let Some(s) = &a.r {
        c.r = parse_reals("r", s)?;
    }
    c.samples = a.samples.unwrap_or(c.samples);
    c.seed = a.seed.unwrap_or(c.seed);
    c.workers = a.workers.unwrap_or(c.workers);
    c.out = a.out.unwrap_or(c.out);
    c.constants.c0 = a.c0.unwrap_or(c.constants.c0);
    c.constants.big_c = a.big_c.unwrap_or(c.constants.big_c);
    c.constants.small_c = a.small_c.unwrap_or(c.constants.small_c);
    c.ci_z = a.ci_z.unwrap_or(c.ci_z);
    if let Some(s) = a.solver {
        c.solver.method = match s {
            Solver::Net => SolverMethod::Net,
            Solver::Opt => SolverMethod::Optimizer,
        };
    }
    c.solver.delta = a.delta.unwrap_or(c.solver.delta);
    c.solver.restarts = a.restarts.unwrap_or(c.solver.restarts);
    c.solver.tol = a.tol.unwrap_or(c.solver.tol);
    c.solver.max_iter = a.max_iter.unwrap_or(c.solver.max_iter);
    c.solver.strict = a.certified;
    c.target = a.target.unwrap_or(c.target);
    c.strict = a.strict;
    if let Some(f) = &a.fit {
        c.fit = Some(FitSpec::parse(f)?);
    }
    Ok(c)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = build_config(args).and_then(|c| run(&c).map(|s| (c.strict, s)));
    match result {
        Ok((strict, summary)) => {
            println!(
                "wrote {} ({} rows) in {:.2} s",
                summary.csv_path.display(),
                summary.rows,
                summary.wall_seconds
            );
            if let Some(f) = &summary.fit {
                println!(
                    "fit {}: slope {:.6} ± {:.6}, intercept {:.6}, r² {:.6}",
                    f.model, f.slope, f.slope_se, f.intercept, f.r_squared
                );
            }
            for flag in &summary.instability {
                eprintln!("warning: {flag}");
            }
            ExitCode::from(summary.exit_code(strict) as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
