//! Experiment configuration, per-experiment presets and validation.

use std::fmt;
use std::path::PathBuf;

use lpsections::mc::DEFAULT_CI_Z;
use lpsections::sections::{SolverMethod, SolverOptions};
use lpsections::{PExponent, TheoryConstants};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::expr::Expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Variance,
    Tails,
    Moments,
    Pairmoments,
    Anticonc,
    Section,
    Critdim,
    Process,
    TheoryTable,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Variance,
        Experiment::Tails,
        Experiment::Moments,
        Experiment::Pairmoments,
        Experiment::Anticonc,
        Experiment::Section,
        Experiment::Critdim,
        Experiment::Process,
        Experiment::TheoryTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Variance => "variance",
            Experiment::Tails => "tails",
            Experiment::Moments => "moments",
            Experiment::Pairmoments => "pairmoments",
            Experiment::Anticonc => "anticonc",
            Experiment::Section => "section",
            Experiment::Critdim => "critdim",
            Experiment::Process => "process",
            Experiment::TheoryTable => "theory-table",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    fn samples_used(self) -> bool {
        self != Experiment::TheoryTable
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fit of `y` against `x`, both expressions over the result columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSpec {
    pub x: String,
    pub y: String,
}

impl FitSpec {
    /// Parses `"y ~ x"`.
    pub fn parse(s: &str) -> CliResult<Self> {
        let (y, x) = s
            .split_once('~')
            .ok_or_else(|| CliError::Config(format!("--fit expects 'y ~ x', got '{s}'")))?;
        let spec = FitSpec {
            x: x.trim().to_string(),
            y: y.trim().to_string(),
        };
        Expr::parse(&spec.x)?;
        Expr::parse(&spec.y)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: Vec<usize>,
    /// Empty for `anticonc` means `p = ⌈12 log n⌉` for each `n`.
    pub p: Vec<PExponent>,
    pub k: Vec<usize>,
    pub eps: Vec<f64>,
    pub r: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
    /// Worker threads; 0 uses every core. Does not affect results.
    pub workers: usize,
    pub out: PathBuf,
    pub constants: TheoryConstants,
    pub ci_z: f64,
    pub solver: SolverOptions,
    /// Success level for `critdim`.
    pub target: f64,
    /// Exit with status 3 when a numerical-instability flag is raised.
    pub strict: bool,
    pub fit: Option<FitSpec>,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`, written to `<experiment>.csv`.
    pub fn preset(experiment: Experiment) -> Self {
        let fin = |v: &[f64]| v.iter().map(|&p| PExponent::Finite(p)).collect::<Vec<_>>();
        let eps_grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.05).collect();
        let mut c = ExperimentConfig {
            experiment,
            n: vec![1000],
            p: fin(&[4.0]),
            k: vec![5],
            eps: vec![0.1],
            r: vec![2.0],
            samples: 100_000,
            seed: 0,
            workers: 0,
            out: PathBuf::from(format!("{}.csv", experiment.name())),
            constants: TheoryConstants::default(),
            ci_z: DEFAULT_CI_Z,
            solver: SolverOptions::default(),
            target: 0.5,
            strict: false,
            fit: None,
        };
        match experiment {
            Experiment::Variance => {
                c.n = vec![4096];
                c.p = fin(&[1.0, 2.0, 4.0]);
            }
            Experiment::Tails => {
                c.n = vec![100];
                c.p = fin(&[1.0, 1.5, 2.0]);
                c.eps = eps_grid;
            }
            Experiment::Moments => {
                c.r = vec![-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0];
            }
            Experiment::Pairmoments => {
                c.n = vec![100, 1000];
                c.p = fin(&[3.0, 4.0, 6.0]);
                c.r = vec![2.0, 4.0, 8.0];
            }
            Experiment::Anticonc => {
                c.n = vec![10_000];
                c.p = Vec::new();
                c.samples = 20_000;
            }
            Experiment::Section | Experiment::Critdim => {
                c.n = vec![2000];
                c.k = vec![2, 4, 8, 16, 32, 64];
                c.eps = vec![0.2];
                c.samples = 100;
            }
            Experiment::Process => {
                c.n = vec![200];
                c.samples = 20_000;
            }
            Experiment::TheoryTable => {
                c.n = vec![1_000_000];
                c.p = fin(&[1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 20.0, 50.0]);
                c.p.push(PExponent::Infinity);
                c.samples = 0;
            }
        }
        c
    }

    pub fn workers_or_default(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }

    /// Exponents to run at dimension `n`.
    pub fn exponents_for(&self, n: usize) -> Vec<PExponent> {
        if self.p.is_empty() {
            vec![PExponent::Finite((12.0 * (n as f64).ln()).ceil())]
        } else {
            self.p.clone()
        }
    }

    /// Checks every precondition the chosen experiment will meet, so that
    /// no sampling starts on a configuration that is bound to fail.
    pub fn validate(&self) -> CliResult<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        self.constants.validate()?;
        if !(self.ci_z > 0.0) || !self.ci_z.is_finite() {
            return fail(format!("--ci-z must be positive, got {}", self.ci_z));
        }
        if self.workers > 4096 {
            return fail(format!("--workers {} is not plausible", self.workers));
        }
        if self.experiment.samples_used() && self.samples < 2 {
            return fail(format!("--samples must be at least 2, got {}", self.samples));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return fail("--n must list positive dimensions".into());
        }
        if self.experiment != Experiment::Anticonc && self.p.is_empty() {
            return fail("--p must not be empty".into());
        }
        if let Some(parent) = self.out.parent() {
            if !parent.as_os_str().is_empty() && !parent.is_dir() {
                return fail(format!("output directory {} does not exist", parent.display()));
            }
        }
        let finite = |what: &str| -> CliResult<()> {
            if self.p.iter().any(|p| p.is_infinite()) {
                return fail(format!("{what} needs finite p"));
            }
            Ok(())
        };
        let min_n = |m: usize| -> CliResult<()> {
            match self.n.iter().find(|&&n| n < m) {
                Some(n) => fail(format!("{} needs n >= {m}, got {n}", self.experiment)),
                None => Ok(()),
            }
        };
        match self.experiment {
            Experiment::Variance => min_n(3)?,
            Experiment::Tails => {
                if let Some(e) = self.eps.iter().find(|e| !(0.0..=10.0).contains(*e)) {
                    return fail(format!("tails needs eps in [0, 10], got {e}"));
                }
            }
            Experiment::Moments => {
                if self.samples < 100 {
                    return fail(format!("moments needs at least 100 samples, got {}", self.samples));
                }
                for &n in &self.n {
                    if let Some(r) = self.r.iter().find(|r| !(**r > -(n as f64)) || !r.is_finite()) {
                        return fail(format!("moment order {r} must exceed -n = -{n}"));
                    }
                }
            }
            Experiment::Pairmoments => {
                finite("pairmoments")?;
                if let Some(r) = self.r.iter().find(|r| !(**r >= 2.0) || !r.is_finite()) {
                    return fail(format!("pairmoments needs r >= 2, got {r}"));
                }
            }
            Experiment::Anticonc => {
                min_n(2)?;
                for &n in &self.n {
                    let floor = 12.0 * (n as f64).ln();
                    if let Some(p) = self
                        .exponents_for(n)
                        .iter()
                        .find(|p| !(p.value() >= floor) || p.is_infinite())
                    {
                        return fail(format!(
                            "anticonc needs finite p >= 12 log n = {floor:.4} at n = {n}, got {p}"
                        ));
                    }
                }
                if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
                    return fail(format!("anticonc needs eps in (0, 1], got {e}"));
                }
            }
            Experiment::Section | Experiment::Critdim => {
                let kmax = *self.k.iter().max().unwrap_or(&0);
                if self.k.is_empty() || self.k.contains(&0) {
                    return fail("--k must list positive dimensions".into());
                }
                if let Some(n) = self.n.iter().find(|&&n| n < kmax) {
                    return fail(format!("need k <= n, got k = {kmax} with n = {n}"));
                }
                if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
                    return fail(format!("section needs eps > 0, got {e}"));
                }
                if self.solver.strict && self.solver.method != SolverMethod::Net {
                    return fail("--certified needs --solver net".into());
                }
                match self.solver.method {
                    SolverMethod::Net => {
                        if !(self.solver.delta > 0.0 && self.solver.delta <= 0.5) {
                            return fail(format!("--delta must lie in (0, 0.5], got {}", self.solver.delta));
                        }
                        for &k in &self.k {
                            lpsections::sections::check_net_budget(k, self.solver.delta)
                                .map_err(|e| CliError::Config(e.to_string()))?;
                        }
                    }
                    SolverMethod::Optimizer => {
                        if self.solver.restarts < 1 {
                            return fail("--restarts must be at least 1".into());
                        }
                        if !(self.solver.tol > 0.0) {
                            return fail(format!("--tol must be positive, got {}", self.solver.tol));
                        }
                    }
                }
                if self.experiment == Experiment::Critdim {
                    if !(self.target > 0.0 && self.target < 1.0) {
                        return fail(format!("--target must lie in (0, 1), got {}", self.target));
                    }
                    if self.k.windows(2).any(|w| w[0] >= w[1]) {
                        return fail("critdim needs an increasing k grid".into());
                    }
                    if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                        return fail(format!("critdim needs eps in (0, 1), got {e}"));
                    }
                    min_n(2)?;
                }
            }
            Experiment::Process => {
                finite("process")?;
                if let Some(p) = self.p.iter().find(|p| !(p.value() > 1.0)) {
                    return fail(format!("process needs p > 1, got {p}"));
                }
                if let Some(k) = self.k.iter().find(|&&k| k < 2) {
                    return fail(format!("process needs k >= 2, got {k}"));
                }
                if let Some(r) = self.r.iter().find(|r| !(**r >= 1.0) || !r.is_finite()) {
                    return fail(format!("process needs r >= 1, got {r}"));
                }
            }
            Experiment::TheoryTable => {
                min_n(3)?;
                if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                    return fail(format!("theory-table needs eps in (0, 1), got {e}"));
                }
            }
        }
        Ok(())
    }

    /// `key=value` lines describing everything that determines the results.
    /// The worker count and output path are left out so that the CSV bytes
    /// do not depend on them.
    pub fn describe(&self) -> Vec<String> {
        let list = |v: &[String]| v.join(",");
        let p = if self.p.is_empty() {
            "ceil(12 log n)".to_string()
        } else {
            list(&self.p.iter().map(|p| p.to_string()).collect::<Vec<_>>())
        };
        let mut out = vec![
            format!("experiment={}", self.experiment),
            format!("n={}", list(&self.n.iter().map(|v| v.to_string()).collect::<Vec<_>>())),
            format!("p={p}"),
        ];
        let nums = |v: &[f64]| list(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        match self.experiment {
            Experiment::Variance => {}
            Experiment::Tails | Experiment::Anticonc | Experiment::TheoryTable => {
                out.push(format!("eps={}", nums(&self.eps)))
            }
            Experiment::Moments | Experiment::Pairmoments => out.push(format!("r={}", nums(&self.r))),
            Experiment::Section | Experiment::Critdim => {
                out.push(format!(
                    "k={}",
                    list(&self.k.iter().map(|v| v.to_string()).collect::<Vec<_>>())
                ));
                out.push(format!("eps={}", nums(&self.eps)));
                let s = &self.solver;
                out.push(match s.method {
                    SolverMethod::Net => format!("solver=net delta={} certified={}", s.delta, s.strict),
                    SolverMethod::Optimizer => {
                        format!(
                            "solver=opt restarts={} tol={} max_iter={}",
                            s.restarts, s.tol, s.max_iter
                        )
                    }
                });
                if self.experiment == Experiment::Critdim {
                    out.push(format!("target={}", self.target));
                }
            }
            Experiment::Process => {
                out.push(format!(
                    "k={}",
                    list(&self.k.iter().map(|v| v.to_string()).collect::<Vec<_>>())
                ));
                out.push(format!("r={}", nums(&self.r)));
            }
        }
        if self.experiment.samples_used() {
            out.push(format!(
                "samples={} seed={} ci_z={}",
                self.samples, self.seed, self.ci_z
            ));
        }
        let k = &self.constants;
        out.push(format!("c0={} C={} c={}", k.c0, k.big_c, k.small_c));
        out
    }
}
