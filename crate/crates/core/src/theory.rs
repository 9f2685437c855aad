//! Closed-form predictions: mean scales and critical dimensions of the ℓ_p
//! ball, the piecewise concentration exponents β, θ, τ and ψ, the Dvoretzky
//! dimension k(n, p, ε), variance regimes and their limits, quantile vectors
//! of `|g|`, and the chaining schedule used for nets on the sphere.
//!
//! Logarithms are natural. Unspecified absolute constants live in
//! [`TheoryConstants`]. At a regime boundary the lower-p (or lower-ε) branch
//! wins.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::gauss::PExponent;
use crate::specfun::{self, abs_gauss_upper_quantile, gaussian_abs_moment, ln_abs_moment};

/// Absolute constants left unspecified by the asymptotic statements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    /// Threshold constant in `p ≤ c0 · log n`.
    pub c0: f64,
    /// Large constant `C`.
    pub big_c: f64,
    /// Small constant `c`.
    pub small_c: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        Self {
            c0: 0.5,
            big_c: 1.0,
            small_c: 1.0,
        }
    }
}

impl TheoryConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0 < 1.0) {
            return domain("TheoryConstants", format!("c0 must lie in (0, 1), got {}", self.c0));
        }
        if !(self.big_c > 0.0 && self.small_c > 0.0) {
            return domain("TheoryConstants", "C and c must be positive");
        }
        Ok(())
    }
}

/// Which branch of a piecewise formula produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Regime(pub &'static str);

impl Regime {
    pub const EXACT: Regime = Regime("exact");
    pub const SUBGAUSSIAN: Regime = Regime("1<=p<=2");
    pub const MODERATE: Regime = Regime("2<p<=c0 log n");
    pub const LARGE_P: Regime = Regime("p>c0 log n");
    pub const POLYNOMIAL: Regime = Regime("1<=p<=c0 log n");
    pub const INFINITE_P: Regime = Regime("p=inf");
    pub const BELOW_LOG_N: Regime = Regime("p<log n");
    pub const ABOVE_LOG_N: Regime = Regime("p>=log n");
    pub const POLY_MIDDLE: Regime = Regime("2<p<=log n");
    pub const DVO_LINEAR: Regime = Regime("(Cp)^-p eps^2 n");
    pub const DVO_POWER: Regime = Regime("p^-1 (eps n)^{2/p}");
    pub const DVO_LOG_CORRECTED: Regime = Regime("eps p n^{2/p}/log(1/eps)");
    pub const DVO_LARGE_P: Regime = Regime("eps log n/log(1/eps)");
    pub const GAUSSIAN_BRANCH: Regime = Regime("quadratic branch");
    pub const POWER_BRANCH: Regime = Regime("power branch");
    pub const LIPSCHITZ_BRANCH: Regime = Regime("Lipschitz branch");
    pub const LIMIT: Regime = Regime("limit");

    pub fn label(&self) -> &'static str {
        self.0
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.0)
    }
}

/// A closed-form value together with the branch that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryPrediction {
    pub value: f64,
    pub regime: Regime,
    pub constants: TheoryConstants,
}

impl TheoryPrediction {
    fn new(value: f64, regime: Regime, constants: TheoryConstants) -> Self {
        Self {
            value,
            regime,
            constants,
        }
    }
}

fn ln_n(n: u64) -> f64 {
    (n as f64).ln()
}

fn check_n(op: &'static str, n: u64, min: u64) -> Result<()> {
    if n < min {
        return domain(op, format!("n must be at least {min}, got {n}"));
    }
    Ok(())
}

fn check_eps(op: &'static str, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return domain(op, format!("eps must lie in (0, 1), got {eps}"));
    }
    Ok(())
}

/// Order of `E‖Z‖_p`; exact for `p ∈ {1, 2}`.
pub fn mean_lp_prediction(n: u64, p: PExponent) -> Result<TheoryPrediction> {
    check_n("mean_lp_prediction", n, 2)?;
    let k = TheoryConstants::default();
    let nf = n as f64;
    let ln = ln_n(n);
    Ok(match p {
        PExponent::Finite(p) if p == 1.0 => TheoryPrediction::new(nf * (2.0 / PI).sqrt(), Regime::EXACT, k),
        PExponent::Finite(p) if p == 2.0 => {
            let log_ratio = specfun::ln_gamma_unchecked(0.5 * (nf + 1.0)) - specfun::ln_gamma_unchecked(0.5 * nf);
            TheoryPrediction::new(2f64.sqrt() * log_ratio.exp(), Regime::EXACT, k)
        }
        PExponent::Finite(p) if p < ln => TheoryPrediction::new(nf.powf(1.0 / p) * p.sqrt(), Regime::BELOW_LOG_N, k),
        _ => TheoryPrediction::new(ln.sqrt(), Regime::ABOVE_LOG_N, k),
    })
}

/// Critical dimension `k_{p,n}` of the ℓ_p ball.
pub fn critical_dimension(n: u64, p: PExponent) -> Result<TheoryPrediction> {
    check_n("critical_dimension", n, 2)?;
    let k = TheoryConstants::default();
    let nf = n as f64;
    let ln = ln_n(n);
    Ok(match p {
        PExponent::Finite(p) if p <= 2.0 => TheoryPrediction::new(nf, Regime::SUBGAUSSIAN, k),
        PExponent::Finite(p) if p <= ln => TheoryPrediction::new(p * nf.powf(2.0 / p), Regime::POLY_MIDDLE, k),
        _ => TheoryPrediction::new(ln, Regime::ABOVE_LOG_N, k),
    })
}

/// Exponent β(n, p, ε) of the two-sided deviation bound for `‖X‖_p`.
///
/// For the max-norm the large-p branch `ε p n^{2/p}` degenerates, and the
/// limiting `ε log n` is returned instead.
pub fn beta_exponent(n: u64, p: PExponent, eps: f64, constants: &TheoryConstants) -> Result<TheoryPrediction> {
    check_n("beta_exponent", n, 2)?;
    check_eps("beta_exponent", eps)?;
    constants.validate()?;
    let nf = n as f64;
    let threshold = constants.c0 * ln_n(n);
    let k = *constants;
    Ok(match p {
        PExponent::Infinity => TheoryPrediction::new(eps * ln_n(n), Regime::INFINITE_P, k),
        PExponent::Finite(p) if p <= 2.0 => TheoryPrediction::new(eps * eps * nf, Regime::SUBGAUSSIAN, k),
        PExponent::Finite(p) if p <= threshold => {
            let quad = p * p * 2f64.powf(-p) * eps * eps * nf;
            let power = (eps * nf).powf(2.0 / p);
            let lip = eps * p * nf.powf(2.0 / p);
            TheoryPrediction::new(quad.min(power).max(lip), Regime::MODERATE, k)
        }
        PExponent::Finite(p) => TheoryPrediction::new(eps * p * nf.powf(2.0 / p), Regime::LARGE_P, k),
    })
}

/// Dimension k(n, p, ε) up to which random sections are (1+ε)-Euclidean.
pub fn dvoretzky_dimension(n: u64, p: PExponent, eps: f64, constants: &TheoryConstants) -> Result<TheoryPrediction> {
    check_n("dvoretzky_dimension", n, 2)?;
    check_eps("dvoretzky_dimension", eps)?;
    constants.validate()?;
    let nf = n as f64;
    let ln = ln_n(n);
    let k = *constants;
    let log_inv_eps = (1.0 / eps).ln();
    let large = || TheoryPrediction::new(eps * ln / log_inv_eps, Regime::DVO_LARGE_P, k);
    Ok(match p {
        PExponent::Infinity => large(),
        PExponent::Finite(p) if p <= 2.0 => TheoryPrediction::new(eps * eps * nf, Regime::SUBGAUSSIAN, k),
        PExponent::Finite(p) if p <= constants.c0 * ln => {
            let cp = constants.big_c * p;
            let breakpoint = cp.powf(p / 2.0) * nf.powf(-(p - 2.0) / (2.0 * (p - 1.0)));
            if eps <= breakpoint && eps <= 1.0 / p {
                TheoryPrediction::new(cp.powf(-p) * eps * eps * nf, Regime::DVO_LINEAR, k)
            } else if eps <= 1.0 / p {
                TheoryPrediction::new((eps * nf).powf(2.0 / p) / p, Regime::DVO_POWER, k)
            } else {
                TheoryPrediction::new(eps * p * nf.powf(2.0 / p) / log_inv_eps, Regime::DVO_LOG_CORRECTED, k)
            }
        }
        PExponent::Finite(_) => large(),
    })
}

/// The ε-dependent floor `log n / log(1/ε)` valid for `p < c0 log n`.
pub fn dvoretzky_floor(n: u64, eps: f64) -> Result<f64> {
    check_n("dvoretzky_floor", n, 2)?;
    check_eps("dvoretzky_floor", eps)?;
    Ok(ln_n(n) / (1.0 / eps).ln())
}

/// τ(n, p, t) = max{t² p n^{2/p}, min{t² n / C^p, (t n)^{2/p}}}.
pub fn tau(n: u64, p: f64, t: f64, constants: &TheoryConstants) -> Result<TheoryPrediction> {
    check_n("tau", n, 1)?;
    if !(t > 0.0) {
        return domain("tau", format!("t must be positive, got {t}"));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return domain("tau", format!("p must be finite and >= 1, got {p}"));
    }
    let nf = n as f64;
    let lip = t * t * p * nf.powf(2.0 / p);
    let quad = t * t * nf / constants.big_c.powf(p);
    let power = (t * nf).powf(2.0 / p);
    let (inner, inner_regime) = if quad <= power {
        (quad, Regime::GAUSSIAN_BRANCH)
    } else {
        (power, Regime::POWER_BRANCH)
    };
    Ok(if inner >= lip {
        TheoryPrediction::new(inner, inner_regime, *constants)
    } else {
        TheoryPrediction::new(lip, Regime::LIPSCHITZ_BRANCH, *constants)
    })
}

/// ψ(n, p, r) = √r min{1/(σ_p n^{1/p}), σ_{2p-2}^{p-1} (1 + p r / (σ_{2p-2}² n^{1/(p-1)}))^{(p-1)/2} / (√n σ_p^p)}.
pub fn psi(n: u64, p: f64, r: f64) -> Result<TheoryPrediction> {
    check_n("psi", n, 1)?;
    if !(r >= 2.0) {
        return domain("psi", format!("r must be >= 2, got {r}"));
    }
    if !(p > 1.0) || !p.is_finite() {
        return domain("psi", format!("p must be finite and > 1, got {p}"));
    }
    let nf = n as f64;
    let ln_sp_p = ln_abs_moment(p);
    let ln_sp = ln_sp_p / p;
    let q = 2.0 * p - 2.0;
    let ln_sq = ln_abs_moment(q) / q;
    let first = (-ln_sp - nf.ln() / p).exp();
    let inner = 1.0 + p * r / ((2.0 * ln_sq).exp() * nf.powf(1.0 / (p - 1.0)));
    let ln_second = (p - 1.0) * ln_sq - 0.5 * nf.ln() - ln_sp_p + 0.5 * (p - 1.0) * inner.ln();
    let second = ln_second.exp();
    let k = TheoryConstants::default();
    Ok(if first <= second {
        TheoryPrediction::new(r.sqrt() * first, Regime::LIPSCHITZ_BRANCH, k)
    } else {
        TheoryPrediction::new(r.sqrt() * second, Regime::GAUSSIAN_BRANCH, k)
    })
}

/// θ(n, p, ε) = min{p² ε² n / 2^p, (ε n)^{2/p}} for `p > 2`, `0 < ε < 1/p`.
pub fn theta_exponent(n: u64, p: f64, eps: f64) -> Result<TheoryPrediction> {
    check_n("theta_exponent", n, 1)?;
    if !(p > 2.0) || !p.is_finite() {
        return domain("theta_exponent", format!("p must be finite and > 2, got {p}"));
    }
    if !(eps > 0.0 && eps < 1.0 / p) {
        return domain("theta_exponent", format!("eps must lie in (0, 1/p), got {eps}"));
    }
    let nf = n as f64;
    let quad = p * p * eps * eps * nf / 2f64.powf(p);
    let power = (eps * nf).powf(2.0 / p);
    let k = TheoryConstants::default();
    Ok(if quad <= power {
        TheoryPrediction::new(quad, Regime::GAUSSIAN_BRANCH, k)
    } else {
        TheoryPrediction::new(power, Regime::POWER_BRANCH, k)
    })
}

/// Order of `Var ‖X‖_p`: `(2^p/p) n^{2/p-1}` below `c0 log n`, `1/log n` above.
pub fn variance_prediction(n: u64, p: PExponent, constants: &TheoryConstants) -> Result<TheoryPrediction> {
    check_n("variance_prediction", n, 3)?;
    constants.validate()?;
    let nf = n as f64;
    let ln = ln_n(n);
    Ok(match p {
        PExponent::Finite(p) if p <= constants.c0 * ln => TheoryPrediction::new(
            2f64.powf(p) / p * nf.powf(2.0 / p - 1.0),
            Regime::POLYNOMIAL,
            *constants,
        ),
        _ => TheoryPrediction::new(1.0 / ln, Regime::LARGE_P, *constants),
    })
}

/// Limit of `n^{1-2/p} Var ‖X‖_p` from the delta method:
/// `(σ_{2p}^{2p} - σ_p^{2p}) / (p² σ_p^{2(p-1)})`.
pub fn delta_method_variance_limit(p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return domain(
            "delta_method_variance_limit",
            format!("p must be finite and >= 1, got {p}"),
        );
    }
    let l_p = ln_abs_moment(p);
    let l_2p = ln_abs_moment(2.0 * p);
    // ln(σ_{2p}^{2p} - (σ_p^p)²), factored to avoid overflow
    let ln_num = l_2p + (-(2.0 * l_p - l_2p).exp_m1()).ln();
    let ln_den = 2.0 * p.ln() + 2.0 * (p - 1.0) / p * l_p;
    Ok((ln_num - ln_den).exp())
}

/// `a_n = -Φ⁻¹(1/(2n))`, the centring scale of `max_i |g_i|`.
pub fn gumbel_scale(n: u64) -> Result<f64> {
    check_n("gumbel_scale", n, 2)?;
    abs_gauss_upper_quantile(1.0 / n as f64)
}

/// `Var ‖X‖_∞ ≈ (π²/6) / a_n²` from the Gumbel limit.
pub fn gumbel_variance_prediction(n: u64) -> Result<TheoryPrediction> {
    let a = gumbel_scale(n)?;
    Ok(TheoryPrediction::new(
        PI * PI / 6.0 / (a * a),
        Regime::LIMIT,
        TheoryConstants::default(),
    ))
}

/// `c_{n,r} = √2 [Γ((n+r)/2) / Γ(n/2)]^{1/r}`, relating Gaussian and
/// spherical r-means.
pub fn gaussian_to_spherical_factor(n: u64, r: f64) -> Result<f64> {
    check_n("gaussian_to_spherical_factor", n, 1)?;
    let nf = n as f64;
    if !(r > -nf) || r == 0.0 || !r.is_finite() {
        return domain(
            "gaussian_to_spherical_factor",
            format!("need r > -n and r != 0, got {r}"),
        );
    }
    let log_ratio = specfun::ln_gamma_unchecked(0.5 * (nf + r)) - specfun::ln_gamma_unchecked(0.5 * nf);
    Ok(2f64.sqrt() * (log_ratio / r).exp())
}

/// `(lower, exact, upper)` with
/// `θ|a-b|(2/(a+b))^{1-θ} ≤ |a^θ - b^θ| ≤ θ|a-b|(a^{θ-1} + b^{θ-1})/2`.
pub fn power_diff_bracket(a: f64, b: f64, theta: f64) -> Result<(f64, f64, f64)> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return domain("power_diff_bracket", "a and b must be positive and finite");
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return domain("power_diff_bracket", format!("theta must lie in (0, 1], got {theta}"));
    }
    let d = (a - b).abs();
    let lower = theta * d * (2.0 / (a + b)).powf(1.0 - theta);
    let exact = (a.powf(theta) - b.powf(theta)).abs();
    let upper = theta * d * (a.powf(theta - 1.0) + b.powf(theta - 1.0)) / 2.0;
    Ok((lower, exact, upper))
}

/// Quantiles `y_i = ξ_{1-(i-1/2)/n}` of `|g|` and the cap `y_0 = ξ_{1-1/(4n)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileVector {
    pub n: usize,
    /// `y[i-1] = y_i`, strictly decreasing.
    pub y: Vec<f64>,
    pub y0: f64,
}

impl QuantileVector {
    /// `y_m` with the convention that index 0 is `y_0`.
    pub fn at(&self, m: usize) -> f64 {
        if m == 0 {
            self.y0
        } else {
            self.y[m - 1]
        }
    }
}

pub fn quantile_vector(n: usize) -> Result<QuantileVector> {
    if n == 0 {
        return domain("quantile_vector", "n must be at least 1");
    }
    let nf = n as f64;
    let y = (1..=n)
        .map(|i| abs_gauss_upper_quantile((i as f64 - 0.5) / nf))
        .collect::<Result<Vec<_>>>()?;
    let y0 = abs_gauss_upper_quantile(1.0 / (4.0 * nf))?;
    Ok(QuantileVector { n, y, y0 })
}

/// One level of the chaining decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainingLevel {
    pub j: u32,
    pub delta: f64,
    pub t: f64,
    /// `k · log(3/δ_j)`, the log of the net cardinality bound.
    pub log_net_cardinality_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainingSchedule {
    pub p: f64,
    pub k: usize,
    /// `s_p = Σ_{j≥1} j^{p/2} e^{-j}`.
    pub s_p: f64,
    pub levels: Vec<ChainingLevel>,
    /// `Σ_{j > j_max} t_j`, so that `Σ levels.t + tail_mass = 1`.
    pub tail_mass: f64,
}

/// Scales `δ_j = e^{-j}` and weights `t_j = j^{p/2} e^{-j} / s_p` for
/// `j = 1..=j_max`.
pub fn dudley_fernique_schedule(p: f64, k: usize, j_max: u32) -> Result<ChainingSchedule> {
    if !(p > 2.0) || !p.is_finite() {
        return domain("dudley_fernique_schedule", format!("p must be finite and > 2, got {p}"));
    }
    if j_max < 1 {
        return domain("dudley_fernique_schedule", "j_max must be at least 1");
    }
    let term = |j: u32| (0.5 * p * (j as f64).ln() - j as f64).exp();
    let peak = (0.5 * p).ceil() as u32;
    let mut s_p = 0.0;
    let mut tail = 0.0;
    let mut j = 1u32;
    loop {
        let t = term(j);
        s_p += t;
        if j > j_max {
            tail += t;
        }
        if j > peak && t < 1e-17 * s_p {
            break;
        }
        j += 1;
    }
    let levels = (1..=j_max)
        .map(|j| ChainingLevel {
            j,
            delta: (-(j as f64)).exp(),
            t: term(j) / s_p,
            log_net_cardinality_bound: k as f64 * (3f64.ln() + j as f64),
        })
        .collect();
    Ok(ChainingSchedule {
        p,
        k,
        s_p,
        levels,
        tail_mass: tail / s_p,
    })
}

/// `(1-t)² (Eξ)² / Eξ²`, the Paley–Zygmund lower bound on `P(ξ ≥ t Eξ)`.
pub fn paley_zygmund_bound(t: f64, mean: f64, second_moment: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return domain("paley_zygmund_bound", format!("t must lie in [0, 1], got {t}"));
    }
    if !(second_moment > 0.0) || mean < 0.0 {
        return domain("paley_zygmund_bound", "need E xi >= 0 and E xi^2 > 0");
    }
    Ok((1.0 - t).powi(2) * mean * mean / second_moment)
}

/// `σ_p^p max{2^{p/2} (r n)^{1/2}, r^{p/2} n^{1/r}}`, the order of
/// `(E|‖X‖_p^p - ‖Y‖_p^p|^r)^{1/r}`.
pub fn pair_power_envelope(n: u64, p: f64, r: f64) -> Result<f64> {
    check_n("pair_power_envelope", n, 1)?;
    if !(r >= 2.0) || !(p >= 1.0) || !p.is_finite() {
        return domain("pair_power_envelope", "need r >= 2 and finite p >= 1");
    }
    let nf = n as f64;
    let sp = gaussian_abs_moment(p)?.value;
    let a = 2f64.powf(p / 2.0) * (r * nf).sqrt();
    let b = r.powf(p / 2.0) * nf.powf(1.0 / r);
    Ok(sp * a.max(b))
}

/// `(E|‖X‖_p^p - ‖Y‖_p^p|²)^{1/2} = √(2n(σ_{2p}^{2p} - σ_p^{2p}))` exactly.
pub fn pair_power_exact_r2(n: u64, p: f64) -> Result<f64> {
    check_n("pair_power_exact_r2", n, 1)?;
    if !(p > 0.0) || !p.is_finite() {
        return domain("pair_power_exact_r2", "p must be finite and positive");
    }
    let var = gaussian_abs_moment(2.0 * p)?.value - gaussian_abs_moment(p)?.value.powi(2);
    Ok((2.0 * n as f64 * var).sqrt())
}

/// `c (2s - r) / (k_{p,n} log n)`, the gate for `I_s / I_r - 1`.
pub fn moment_stability_bound(n: u64, p: PExponent, r: f64, s: f64, c: f64) -> Result<f64> {
    let k = critical_dimension(n, p)?.value;
    Ok(c * (2.0 * s - r) / (k * ln_n(n)))
}

/// Lipschitz constant of `x ↦ ‖x‖_p` with respect to `‖·‖_2` on `R^n`.
pub fn lp_lipschitz(n: u64, p: PExponent) -> f64 {
    match p {
        PExponent::Infinity => 1.0,
        PExponent::Finite(p) => (n as f64).powf(1.0 / p - 0.5).max(1.0),
    }
}

/// `2 exp(-t² / (2π² L²))`, the Gaussian concentration envelope for an
/// `L`-Lipschitz function.
pub fn gaussian_concentration_envelope(t: f64, lipschitz: f64) -> f64 {
    2.0 * (-(t * t) / (2.0 * PI * PI * lipschitz * lipschitz)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    const K: TheoryConstants = TheoryConstants {
        c0: 0.5,
        big_c: 1.0,
        small_c: 1.0,
    };

    fn fin(p: f64) -> PExponent {
        PExponent::Finite(p)
    }

    #[test]
    fn mean_predictions() {
        let m = mean_lp_prediction(100, fin(1.0)).unwrap();
        assert_relative_eq!(m.value, 79.788_456_080_286_54, max_relative = 1e-13);
        assert_eq!(m.regime, Regime::EXACT);
        // √2 Γ(2.5)/Γ(2) = √2 · 3√π/4
        let m = mean_lp_prediction(4, fin(2.0)).unwrap();
        assert_relative_eq!(m.value, 2f64.sqrt() * 0.75 * PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(m.value, 1.8800, max_relative = 1e-4);
        let m = mean_lp_prediction(1_000_000, PExponent::Infinity).unwrap();
        assert_relative_eq!(m.value, (1e6f64).ln().sqrt(), max_relative = 1e-14);
        assert_eq!(m.regime, Regime::ABOVE_LOG_N);
        assert_eq!(
            mean_lp_prediction(1_000_000, fin(3.0)).unwrap().regime,
            Regime::BELOW_LOG_N
        );
        assert!(mean_lp_prediction(1, fin(3.0)).is_err());
    }

    #[test]
    fn critical_dimensions() {
        assert_eq!(critical_dimension(500, fin(2.0)).unwrap().value, 500.0);
        assert_eq!(critical_dimension(500, fin(1.3)).unwrap().value, 500.0);
        let n = 1_000_000;
        assert_relative_eq!(
            critical_dimension(n, PExponent::Infinity).unwrap().value,
            (n as f64).ln()
        );
        assert_relative_eq!(
            critical_dimension(10_000, fin(4.0)).unwrap().value,
            400.0,
            max_relative = 1e-14
        );
        // middle branch at p = log n equals e² log n
        let n = 20_000u64;
        let ln = (n as f64).ln();
        let at = critical_dimension(n, fin(ln)).unwrap();
        assert_eq!(at.regime, Regime::POLY_MIDDLE);
        assert_relative_eq!(at.value, E * E * ln, max_relative = 1e-12);
    }

    #[test]
    fn beta_values() {
        for n in [10u64, 1000, 100_000] {
            for eps in [0.01, 0.3, 0.9] {
                let b = beta_exponent(n, fin(1.5), eps, &K).unwrap();
                assert_eq!(b.value, eps * eps * n as f64);
                assert_eq!(b.regime, Regime::SUBGAUSSIAN);
            }
        }
        let b = beta_exponent(1_000_000, fin(3.0), 0.01, &K).unwrap();
        // max{min{112.5, 464.16}, 300}
        assert_relative_eq!(b.value, 300.0, max_relative = 1e-12);
        assert_eq!(b.regime, Regime::MODERATE);
        let b = beta_exponent(1_000_000, fin(30.0), 0.1, &K).unwrap();
        assert_eq!(b.regime, Regime::LARGE_P);
        assert!(beta_exponent(100, fin(3.0), 0.0, &K).is_err());
        assert!(beta_exponent(100, fin(3.0), 1.0, &K).is_err());
    }

    #[test]
    fn beta_is_continuous_in_eps() {
        let n = 1_000_000;
        // every branch is a power of eps with exponent at most 2
        for p in [3.0, 5.0] {
            let mut eps = 0.001;
            let mut prev = beta_exponent(n, fin(p), eps, &K).unwrap().value;
            while eps * 1.0001 < 1.0 {
                eps *= 1.0001;
                let v = beta_exponent(n, fin(p), eps, &K).unwrap().value;
                assert!((v / prev - 1.0).abs() <= 2.5e-4, "jump at eps={eps}");
                prev = v;
            }
        }
    }

    #[test]
    fn dvoretzky_values() {
        let n = 1_000_000;
        let k = dvoretzky_dimension(n, fin(1.5), 0.2, &K).unwrap();
        assert_relative_eq!(k.value, 0.04 * 1e6, max_relative = 1e-14);
        // breakpoint (Cp)^{p/2} n^{-(p-2)/(2(p-1))} = 16 · 10^{-2} = 0.16
        let k = dvoretzky_dimension(n, fin(4.0), 0.1, &K).unwrap();
        assert_eq!(k.regime, Regime::DVO_LINEAR);
        assert_relative_eq!(k.value, 0.01 * 1e6 / 256.0, max_relative = 1e-12);
        let k = dvoretzky_dimension(n, fin(4.0), 0.2, &K).unwrap();
        assert_eq!(k.regime, Regime::DVO_POWER);
        assert_relative_eq!(k.value, (0.2f64 * 1e6).sqrt() / 4.0, max_relative = 1e-12);
        let k = dvoretzky_dimension(n, fin(4.0), 0.5, &K).unwrap();
        assert_eq!(k.regime, Regime::DVO_LOG_CORRECTED);
        assert_relative_eq!(k.value, 0.5 * 4.0 * 1e3 / 2f64.ln(), max_relative = 1e-12);
        let k = dvoretzky_dimension(n, PExponent::Infinity, 0.5, &K).unwrap();
        assert_relative_eq!(k.value, 0.5 * (1e6f64).ln() / 2f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(k.value, 9.965_784, max_relative = 1e-6);
        assert_relative_eq!(dvoretzky_floor(n, 0.5).unwrap(), (1e6f64).ln() / 2f64.ln());
        assert!(dvoretzky_dimension(n, fin(4.0), 1.5, &K).is_err());
    }

    #[test]
    fn tau_and_psi() {
        let n = 1_000_000u64;
        let t = tau(n, 5.0, 0.01, &K).unwrap();
        let nf = n as f64;
        let inner = (1e-4 * nf).min((0.01 * nf).powf(0.4));
        let lip = 1e-4 * 5.0 * nf.powf(0.4);
        assert!(inner > lip);
        assert_relative_eq!(t.value, inner, max_relative = 1e-13);
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let s = 0.5f64.powi(i);
            let v = tau(n, 5.0, s, &K).unwrap().value;
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        assert!(prev < 1e-6);
        assert!(tau(n, 5.0, 0.0, &K).is_err());
        for p in [1.5, 2.5, 3.0, 6.0, 12.0] {
            let sp = crate::specfun::gaussian_abs_norm(p).unwrap();
            let v = psi(1000, p, 2.0).unwrap().value;
            assert!(v <= 2f64.sqrt() / (sp * 1000f64.powf(1.0 / p)) * (1.0 + 1e-12));
        }
        assert!(psi(1000, 3.0, 1.5).is_err());
    }

    #[test]
    fn theta_values() {
        let t = theta_exponent(1_000_000, 3.0, 0.01).unwrap();
        assert_relative_eq!(t.value, 112.5, max_relative = 1e-12);
        for (p, eps) in [(3.0, 0.01), (5.0, 0.001), (5.0, 0.05), (8.0, 0.02)] {
            let a = theta_exponent(1_000_000, p, eps).unwrap().value;
            let b = theta_exponent(1_000_000, p, 2.0 * eps).unwrap().value;
            let ratio = b / a;
            assert!(
                (ratio - 4.0).abs() < 1e-9
                    || (ratio - 2f64.powf(2.0 / p)).abs() < 1e-9
                    || (2f64.powf(2.0 / p) <= ratio && ratio <= 4.0),
                "ratio {ratio}"
            );
        }
        assert!(theta_exponent(1_000_000, 3.0, 1e-12).unwrap().value < 1e-15);
        assert!(theta_exponent(100, 3.0, 0.4).is_err());
    }

    #[test]
    fn variance_values() {
        let v = variance_prediction(1000, fin(2.0), &K).unwrap();
        assert_relative_eq!(v.value, 2.0, max_relative = 1e-14);
        let v = variance_prediction(1000, PExponent::Infinity, &K).unwrap();
        assert_relative_eq!(v.value, 1.0 / 1000f64.ln(), max_relative = 1e-14);
        let v = variance_prediction(10_000, fin(4.0), &K).unwrap();
        assert_relative_eq!(v.value, 0.04, max_relative = 1e-12);
        assert!(variance_prediction(2, fin(4.0), &K).is_err());
    }

    #[test]
    fn delta_method_limits() {
        assert_relative_eq!(
            delta_method_variance_limit(1.0).unwrap(),
            1.0 - 2.0 / PI,
            max_relative = 1e-13
        );
        assert_relative_eq!(delta_method_variance_limit(2.0).unwrap(), 0.5, max_relative = 1e-13);
        let scaled = |p: f64| delta_method_variance_limit(p).unwrap() * E * 2f64.sqrt() * p / 2f64.powf(p);
        let errs: Vec<f64> = [50.0, 200.0, 800.0].iter().map(|&p| (scaled(p) - 1.0).abs()).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] < 0.01, "{errs:?}");
    }

    #[test]
    fn gumbel_values() {
        for n in [1_000u64, 1_000_000, 1_000_000_000] {
            let a = gumbel_scale(n).unwrap();
            let ratio = a / (2.0 * (n as f64).ln()).sqrt();
            assert!(ratio < 1.0 && ratio > 0.85, "n={n} ratio={ratio}");
        }
        let r3 = gumbel_scale(1_000).unwrap() / (2.0 * 1e3f64.ln()).sqrt();
        let r9 = gumbel_scale(1_000_000_000).unwrap() / (2.0 * 1e9f64.ln()).sqrt();
        assert!(r9 > r3);
        let a = gumbel_scale(1_000_000).unwrap();
        assert_relative_eq!(a, 4.891_638_475_698_590_4, max_relative = 1e-12);
        let g = gumbel_variance_prediction(1_000_000).unwrap().value;
        assert_relative_eq!(g, PI * PI / 6.0 / (a * a), max_relative = 1e-14);
        assert_relative_eq!(g, 0.068_74, max_relative = 1e-3);
        let mut prev = f64::INFINITY;
        for n in [2u64, 10, 100, 10_000, 1_000_000] {
            let v = gumbel_variance_prediction(n).unwrap().value;
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn spherical_factor() {
        for n in [1u64, 3, 10, 500] {
            assert_relative_eq!(
                gaussian_to_spherical_factor(n, 2.0).unwrap(),
                (n as f64).sqrt(),
                max_relative = 1e-13
            );
        }
        // √2 Γ(2)/Γ(1.5) = 2√2/√π
        assert_relative_eq!(
            gaussian_to_spherical_factor(3, 1.0).unwrap(),
            2.0 * 2f64.sqrt() / PI.sqrt(),
            max_relative = 1e-13
        );
        let mut prev = 0.0;
        for i in -19..40 {
            let r = i as f64 * 0.5;
            if r == 0.0 {
                continue;
            }
            let c = gaussian_to_spherical_factor(10, r).unwrap();
            assert!(c > prev);
            prev = c;
        }
        assert!(gaussian_to_spherical_factor(10, -10.0).is_err());
        assert!(gaussian_to_spherical_factor(10, 0.0).is_err());
    }

    #[test]
    fn power_diff_examples() {
        assert_eq!(power_diff_bracket(2.0, 2.0, 0.3).unwrap(), (0.0, 0.0, 0.0));
        let (l, e, u) = power_diff_bracket(5.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(l, 3.0);
        assert_relative_eq!(e, 3.0);
        assert_relative_eq!(u, 3.0);
        let (l, e, u) = power_diff_bracket(4.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(l, 1.5 * 0.4f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(l, 0.948_683, max_relative = 1e-6);
        assert_relative_eq!(e, 1.0);
        assert_relative_eq!(u, 1.125);
        assert!(power_diff_bracket(0.0, 1.0, 0.5).is_err());
        assert!(power_diff_bracket(1.0, 1.0, 0.0).is_err());
        assert!(power_diff_bracket(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn power_diff_bracket_random_triples() {
        let mut s = crate::gauss::RngStream::new(12, 34);
        for _ in 0..100_000 {
            let a = (20.0 * s.next_uniform() - 10.0).exp();
            let b = (20.0 * s.next_uniform() - 10.0).exp();
            let theta = s.next_uniform();
            let (l, e, u) = power_diff_bracket(a, b, theta).unwrap();
            let tol = 1e-12 * (a.powf(theta) + b.powf(theta));
            assert!(l <= e + tol && e <= u + tol, "a={a} b={b} theta={theta}: {l} {e} {u}");
        }
    }

    #[test]
    fn quantile_vector_properties() {
        let q = quantile_vector(1).unwrap();
        assert_relative_eq!(q.y[0], 0.674_489_750_196_081_7, max_relative = 1e-12);
        assert!(q.y0 > q.y[0]);
        let n = 10_000;
        let q = quantile_vector(n).unwrap();
        assert!(q.y.windows(2).all(|w| w[0] > w[1]));
        assert!(q.y0 > q.y[0]);
        let y1 = q.y[0];
        for i in 1..=(0.317 * n as f64) as usize {
            assert!(y1 * y1 - q.y[i - 1].powi(2) >= (i as f64).ln(), "i={i}");
        }
        let mut prev_gap = f64::INFINITY;
        for n in [1_000usize, 100_000, 10_000_000] {
            let y1 = abs_gauss_upper_quantile(0.5 / n as f64).unwrap();
            let gap = 1.0 - y1 / (2.0 * (n as f64).ln()).sqrt();
            assert!(gap.abs() < prev_gap);
            prev_gap = gap.abs();
        }
        assert!(prev_gap < 0.06);
        assert!(quantile_vector(0).is_err());
    }

    #[test]
    fn chaining_schedule() {
        for p in [3.0, 4.5, 10.0, 40.0] {
            let s = dudley_fernique_schedule(p, 5, 30).unwrap();
            let total: f64 = s.levels.iter().map(|l| l.t).sum::<f64>() + s.tail_mass;
            assert!((total - 1.0).abs() < 1e-10);
            assert_eq!(s.levels[0].delta, (-1.0f64).exp());
            assert_relative_eq!(
                s.levels[2].log_net_cardinality_bound,
                5.0 * (3f64.ln() + 3.0),
                max_relative = 1e-14
            );
        }
        // direct summation oracle for s_p
        for p in 3..=40 {
            let p = p as f64;
            let direct: f64 = (1..2000).map(|j| (j as f64).powf(p / 2.0) * (-(j as f64)).exp()).sum();
            let s = dudley_fernique_schedule(p, 1, 1).unwrap();
            assert_relative_eq!(s.s_p, direct, max_relative = 1e-12);
            assert!(s.s_p <= 10.0 * p.sqrt() * (p / (2.0 * E)).powf(p / 2.0));
        }
        let short = dudley_fernique_schedule(5.0, 2, 3).unwrap();
        assert!(short.tail_mass > 0.0);
        assert!(dudley_fernique_schedule(2.0, 2, 3).is_err());
    }

    #[test]
    fn paley_zygmund_on_enumerated_distributions() {
        // every distribution on {0, ..., 4} with weights from a coarse simplex grid
        let support = [0.0, 0.5, 1.0, 2.0, 7.0];
        let steps = 6u32;
        let mut count = 0;
        let mut stack = vec![(0usize, steps, Vec::<u32>::new())];
        while let Some((i, left, w)) = stack.pop() {
            if i == support.len() - 1 {
                let mut w = w.clone();
                w.push(left);
                let probs: Vec<f64> = w.iter().map(|&k| k as f64 / steps as f64).collect();
                let mean: f64 = probs.iter().zip(&support).map(|(p, x)| p * x).sum();
                let second: f64 = probs.iter().zip(&support).map(|(p, x)| p * x * x).sum();
                if second == 0.0 {
                    continue;
                }
                for ti in 1..=9 {
                    let t = ti as f64 / 10.0;
                    let tail: f64 = probs
                        .iter()
                        .zip(&support)
                        .filter(|(_, x)| **x >= t * mean)
                        .map(|(p, _)| p)
                        .sum();
                    assert!(tail + 1e-12 >= paley_zygmund_bound(t, mean, second).unwrap());
                }
                count += 1;
                continue;
            }
            for k in 0..=left {
                let mut w2 = w.clone();
                w2.push(k);
                stack.push((i + 1, left - k, w2));
            }
        }
        assert!(count > 200);
    }

    /// All up-sets of the product order on `{0..m}²`, as indicator functions.
    fn monotone_indicators(m: usize) -> Vec<Vec<f64>> {
        let cells = m * m;
        let mut out = Vec::new();
        for mask in 0u32..(1 << cells) {
            let f = |i: usize, j: usize| (mask >> (i * m + j)) & 1 == 1;
            let monotone = (0..m)
                .all(|i| (0..m).all(|j| !f(i, j) || ((i + 1 >= m || f(i + 1, j)) && (j + 1 >= m || f(i, j + 1)))));
            if monotone {
                out.push((0..cells).map(|c| ((mask >> c) & 1) as f64).collect());
            }
        }
        out
    }

    #[test]
    fn harris_inequality_by_enumeration() {
        let mut s = crate::gauss::RngStream::new(8, 8);
        for m in [2usize, 3] {
            let fns = monotone_indicators(m);
            assert_eq!(fns.len(), if m == 2 { 6 } else { 20 });
            for _ in 0..20 {
                let w1: Vec<f64> = (0..m).map(|_| s.next_uniform()).collect();
                let w2: Vec<f64> = (0..m).map(|_| s.next_uniform()).collect();
                let (t1, t2): (f64, f64) = (w1.iter().sum(), w2.iter().sum());
                let prob = |c: usize| w1[c / m] / t1 * w2[c % m] / t2;
                // also random monotone real-valued functions: sums of scaled indicators
                let mut family = fns.clone();
                for _ in 0..10 {
                    let mut g = vec![0.0; m * m];
                    for f in &fns {
                        let a = s.next_uniform();
                        g.iter_mut().zip(f).for_each(|(gi, fi)| *gi += a * fi);
                    }
                    family.push(g);
                }
                for f in &family {
                    for g in &family {
                        let e = |h: &dyn Fn(usize) -> f64| (0..m * m).map(|c| prob(c) * h(c)).sum::<f64>();
                        let efg = e(&|c| f[c] * g[c]);
                        let ef = e(&|c| f[c]);
                        let eg = e(&|c| g[c]);
                        assert!(efg >= ef * eg - 1e-12);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn piecewise_functions_are_finite(n in 3u64..100_000_000, p in 1.0f64..60.0, eps in 1e-6f64..0.999) {
            let p = PExponent::Finite(p);
            for v in [
                beta_exponent(n, p, eps, &K).unwrap().value,
                dvoretzky_dimension(n, p, eps, &K).unwrap().value,
                variance_prediction(n, p, &K).unwrap().value,
                critical_dimension(n, p).unwrap().value,
                mean_lp_prediction(n, p).unwrap().value,
            ] {
                prop_assert!(v.is_finite() && v >= 0.0);
            }
        }
    }
}
