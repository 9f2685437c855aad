//! One table builder per experiment.

use lpsections::mc::{
    accumulate_chunked, anticoncentration_experiment, estimate_norm_moments, pair_moment_quadrature,
    pair_power_moment_mc, sample_norms, tail_curve, Centering, EstimateWithCI,
};
use lpsections::sections::{
    empirical_critical_dimension, schechtman_process_check, section_success_probability, SectionSuccess,
};
use lpsections::theory::{
    beta_exponent, critical_dimension, delta_method_variance_limit, dvoretzky_dimension,
    gaussian_concentration_envelope, gumbel_variance_prediction, lp_lipschitz, mean_lp_prediction, pair_power_envelope,
    pair_power_exact_r2, variance_prediction,
};
use lpsections::PExponent;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliResult;
use crate::table::{Cell, Table};

/// A finished table plus any numerical-instability flags raised on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub instability: Vec<String>,
}

pub fn build(config: &ExperimentConfig) -> CliResult<Outcome> {
    let mut flags = Vec::new();
    let table = match config.experiment {
        Experiment::Variance => variance(config)?,
        Experiment::Tails => tails(config)?,
        Experiment::Moments => moments(config, &mut flags)?,
        Experiment::Pairmoments => pair_moments(config)?,
        Experiment::Anticonc => anticonc(config)?,
        Experiment::Section => section(config, &mut flags)?,
        Experiment::Critdim => critdim(config, &mut flags)?,
        Experiment::Process => process(config)?,
        Experiment::TheoryTable => theory_table(config)?,
    };
    Ok(Outcome {
        table,
        instability: flags,
    })
}

/// Limiting variance `n^{2/p-1} v_p`, or the Gumbel value for `p = ∞`.
fn variance_limit(n: usize, p: PExponent) -> CliResult<f64> {
    Ok(match p {
        PExponent::Finite(q) => delta_method_variance_limit(q)? * (n as f64).powf(2.0 / q - 1.0),
        PExponent::Infinity => gumbel_variance_prediction(n as u64)?.value,
    })
}

fn estimate_cells(e: &EstimateWithCI) -> Vec<Cell> {
    vec![e.value.into(), e.std_error.into(), e.ci_low.into(), e.ci_high.into()]
}

fn variance(c: &ExperimentConfig) -> CliResult<Table> {
    let mut t = Table::new(&[
        "n",
        "p",
        "samples",
        "mean",
        "var",
        "var_se",
        "limit",
        "var_over_limit",
        "order",
        "regime",
    ]);
    for &n in &c.n {
        for &p in &c.p {
            let acc = accumulate_chunked(&sample_norms(n, p, c.samples, c.seed, "variance")?);
            let var = acc.variance()?;
            let limit = variance_limit(n, p)?;
            let order = variance_prediction(n as u64, p, &c.constants)?;
            t.push(vec![
                n.into(),
                p.into(),
                c.samples.into(),
                acc.mean()?.into(),
                var.into(),
                acc.variance_std_error()?.into(),
                limit.into(),
                (var / limit).into(),
                order.value.into(),
                order.regime.label().into(),
            ]);
        }
    }
    Ok(t)
}

fn tails(c: &ExperimentConfig) -> CliResult<Table> {
    let mut t = Table::new(&[
        "eps",
        "prob",
        "ci_low",
        "ci_high",
        "hits",
        "samples",
        "n",
        "p",
        "center",
        "envelope",
        "upper_bound_only",
    ]);
    for &n in &c.n {
        for &p in &c.p {
            let curve = tail_curve(n, p, &c.eps, c.samples, c.seed, Centering::EmpiricalMean, c.ci_z)?;
            let lip = lp_lipschitz(n as u64, p);
            for row in &curve.rows {
                t.push(vec![
                    row.eps.into(),
                    row.prob.value.into(),
                    row.prob.ci_low.into(),
                    row.prob.ci_high.into(),
                    row.hits.into(),
                    c.samples.into(),
                    n.into(),
                    p.into(),
                    curve.center.into(),
                    gaussian_concentration_envelope(row.eps * curve.center, lip).into(),
                    row.upper_bound_only.into(),
                ]);
            }
        }
    }
    Ok(t)
}

fn moments(c: &ExperimentConfig, flags: &mut Vec<String>) -> CliResult<Table> {
    let mut t = Table::new(&[
        "n",
        "p",
        "r",
        "value",
        "std_error",
        "ci_low",
        "ci_high",
        "samples",
        "unstable",
    ]);
    for &n in &c.n {
        for &p in &c.p {
            let (_, profile) = estimate_norm_moments(n, p, c.samples, c.seed, &c.r, c.ci_z)?;
            if profile.any_unstable() {
                flags.push(format!("moments n={n} p={p}: negative orders r <= -n/4 are unreliable"));
            }
            if !profile.is_lyapunov_monotone() {
                flags.push(format!("moments n={n} p={p}: profile is not monotone in r"));
            }
            for row in &profile.rows {
                let mut cells = vec![n.into(), p.into(), row.r.into()];
                cells.extend(estimate_cells(&row.estimate));
                cells.push(c.samples.into());
                cells.push(row.unstable.into());
                t.push(cells);
            }
        }
    }
    Ok(t)
}

fn pair_moments(c: &ExperimentConfig) -> CliResult<Table> {
    let mut t = Table::new(&[
        "n",
        "p",
        "r",
        "mc",
        "std_error",
        "ci_low",
        "ci_high",
        "samples",
        "envelope",
        "ratio",
        "exact_r2",
        "quadrature",
    ]);
    for &n in &c.n {
        for &p in &c.p {
            let q = p.value();
            for &r in &c.r {
                let mc = pair_power_moment_mc(n, q, r, c.samples, c.seed, c.ci_z)?;
                let envelope = pair_power_envelope(n as u64, q, r)?;
                let exact = if r == 2.0 {
                    Some(pair_power_exact_r2(n as u64, q)?)
                } else {
                    None
                };
                // the polar identity is for a single coordinate pair
                let quad = if n == 1 && q >= 2.0 && q * r <= 600.0 {
                    Some(pair_moment_quadrature(q, r)?.root(r))
                } else {
                    None
                };
                let mut cells = vec![n.into(), p.into(), r.into()];
                cells.extend(estimate_cells(&mc));
                cells.extend([
                    c.samples.into(),
                    envelope.into(),
                    (mc.value / envelope).into(),
                    exact.into(),
                    quad.into(),
                ]);
                t.push(cells);
            }
        }
    }
    Ok(t)
}

fn anticonc(c: &ExperimentConfig) -> CliResult<Table> {
    let mut t = Table::new(&[
        "n",
        "p",
        "eps",
        "quantity",
        "i",
        "value",
        "std_error",
        "ci_low",
        "ci_high",
        "bound",
        "samples",
    ]);
    for &n in &c.n {
        for p in c.exponents_for(n) {
            for &eps in &c.eps {
                let rep = anticoncentration_experiment(n, p.value(), eps, c.samples, c.seed, c.ci_z)?;
                let mut push = |name: &str, i: Option<usize>, values: Vec<Cell>, bound: Option<f64>| {
                    let mut cells = vec![n.into(), p.into(), eps.into(), name.into(), i.into()];
                    cells.extend(values);
                    cells.push(bound.into());
                    cells.push(c.samples.into());
                    t.push(cells);
                };
                push("x1_window", None, estimate_cells(&rep.prob_x1_window), Some(0.17));
                push("q1", None, estimate_cells(&rep.prob_q1), None);
                for (i, e) in &rep.top_order_tail {
                    push(
                        "top_order_tail",
                        Some(*i),
                        estimate_cells(e),
                        Some((-(*i as f64)).exp()),
                    );
                }
                let count = |v: u64| vec![v.into(), Cell::Empty, Cell::Empty, Cell::Empty];
                let real = |v: f64| vec![v.into(), Cell::Empty, Cell::Empty, Cell::Empty];
                push("pnorm_violations", None, count(rep.pnorm_violations), Some(0.0));
                push("distance_violations", None, count(rep.distance_violations), Some(0.0));
                let three_e2 = 3.0 * std::f64::consts::E.powi(2);
                push("max_pnorm_ratio", None, real(rep.max_pnorm_ratio), Some(three_e2));
                push("min_distance_gain", None, real(rep.min_distance_gain), Some(2.0));
                push("levy_q", None, estimate_cells(&rep.levy_q), None);
            }
        }
    }
    Ok(t)
}

const SECTION_COLUMNS: [&str; 7] = ["k", "success", "ci_low", "ci_high", "samples", "solver", "tol"];

fn success_cells(row: &SectionSuccess) -> Vec<Cell> {
    vec![
        row.k.into(),
        row.estimate.value.into(),
        row.estimate.ci_low.into(),
        row.estimate.ci_high.into(),
        row.estimate.sample_count.into(),
        row.method.to_string().into(),
        row.tolerance.into(),
    ]
}

fn flag_unconverged(flags: &mut Vec<String>, n: usize, p: PExponent, eps: f64, row: &SectionSuccess) {
    if row.unconverged > 0 {
        flags.push(format!(
            "section n={n} p={p} eps={eps} k={}: {} optimizer runs hit the iteration cap",
            row.k, row.unconverged
        ));
    }
}

fn section(c: &ExperimentConfig, flags: &mut Vec<String>) -> CliResult<Table> {
    let mut header = SECTION_COLUMNS.to_vec();
    header.extend(["n", "p", "eps", "unconverged"]);
    let mut t = Table::new(&header);
    for &n in &c.n {
        for &p in &c.p {
            for &eps in &c.eps {
                for &k in &c.k {
                    let row = section_success_probability(n, k, p, eps, c.samples, c.seed, &c.solver, c.ci_z)?;
                    flag_unconverged(flags, n, p, eps, &row);
                    let mut cells = success_cells(&row);
                    cells.extend([n.into(), p.into(), eps.into(), row.unconverged.into()]);
                    t.push(cells);
                }
            }
        }
    }
    Ok(t)
}

fn critdim(c: &ExperimentConfig, flags: &mut Vec<String>) -> CliResult<Table> {
    let mut header = SECTION_COLUMNS.to_vec();
    header.extend(["n", "p", "eps", "target", "k_star", "theory_k", "theory_regime"]);
    let mut t = Table::new(&header);
    for &n in &c.n {
        for &p in &c.p {
            for &eps in &c.eps {
                let theory = dvoretzky_dimension(n as u64, p, eps, &c.constants)?;
                let crit =
                    empirical_critical_dimension(n, p, eps, c.target, c.samples, c.seed, &c.k, &c.solver, c.ci_z)?;
                for row in &crit.curve.rows {
                    flag_unconverged(flags, n, p, eps, row);
                    let mut cells = success_cells(row);
                    cells.extend([
                        n.into(),
                        p.into(),
                        eps.into(),
                        c.target.into(),
                        crit.k_star.into(),
                        theory.value.into(),
                        theory.regime.label().into(),
                    ]);
                    t.push(cells);
                }
            }
        }
    }
    Ok(t)
}

/// The pair `a = e₁`, `b = e₂`, so `‖a - b‖₂ = √2`.
fn process(c: &ExperimentConfig) -> CliResult<Table> {
    let mut t = Table::new(&[
        "n",
        "k",
        "p",
        "r",
        "lhs",
        "lhs_se",
        "rhs",
        "rhs_se",
        "gradient_moment",
        "margin",
        "samples",
    ]);
    for &n in &c.n {
        for &k in &c.k {
            let mut a = vec![0.0; k];
            let mut b = vec![0.0; k];
            a[0] = 1.0;
            b[1] = 1.0;
            for &p in &c.p {
                for &r in &c.r {
                    let chk = schechtman_process_check(n, k, p.value(), &a, &b, r, c.samples, c.seed, c.ci_z)?;
                    t.push(vec![
                        n.into(),
                        k.into(),
                        p.into(),
                        r.into(),
                        chk.lhs.value.into(),
                        chk.lhs.std_error.into(),
                        chk.rhs.into(),
                        chk.rhs_std_error.into(),
                        chk.gradient_moment.value.into(),
                        chk.margin.into(),
                        c.samples.into(),
                    ]);
                }
            }
        }
    }
    Ok(t)
}

fn theory_table(c: &ExperimentConfig) -> CliResult<Table> {
    let mut t = Table::new(&[
        "n",
        "p",
        "eps",
        "beta",
        "beta_regime",
        "dvoretzky_k",
        "dvoretzky_regime",
        "critical_k",
        "critical_regime",
        "variance_order",
        "variance_regime",
        "variance_limit",
        "mean_order",
    ]);
    for &n in &c.n {
        let nn = n as u64;
        for &p in &c.p {
            let crit = critical_dimension(nn, p)?;
            let var = variance_prediction(nn, p, &c.constants)?;
            let limit = variance_limit(n, p)?;
            let mean = mean_lp_prediction(nn, p)?;
            for &eps in &c.eps {
                let beta = beta_exponent(nn, p, eps, &c.constants)?;
                let dvo = dvoretzky_dimension(nn, p, eps, &c.constants)?;
                t.push(vec![
                    n.into(),
                    p.into(),
                    eps.into(),
                    beta.value.into(),
                    beta.regime.label().into(),
                    dvo.value.into(),
                    dvo.regime.label().into(),
                    crit.value.into(),
                    crit.regime.label().into(),
                    var.value.into(),
                    var.regime.label().into(),
                    limit.into(),
                    mean.value.into(),
                ]);
            }
        }
    }
    Ok(t)
}
