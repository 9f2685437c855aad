//! Monte Carlo estimators and quadrature oracles: norm moments and moment
//! profiles, deviation tail curves, the Lévy concentration function, the
//! two-coordinate pair-moment identity, independent-pair power moments and
//! the order-statistics anti-concentration experiment.
//!
//! Every estimator draws its samples in [`CHUNK_SAMPLES`]-sized chunks, each
//! from its own stream keyed by an experiment tag, so results do not depend
//! on the rayon pool size.

use std::f64::consts::{E, LN_2, PI};

use serde::Serialize;

use crate::error::{domain, Result};
use crate::fit::{ols, FitResult};
use crate::gauss::{stream_tag, LpKernel, MomentAccumulator, PExponent};
use crate::par::{collect_chunks, map_chunks, CHUNK_SAMPLES};
use crate::specfun::{ln_gamma_unchecked, MomentValue, LN_PI};
use crate::theory::{mean_lp_prediction, quantile_vector};

pub const DEFAULT_CI_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    Normal,
    Wilson,
}

/// A point estimate with standard error and confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub sample_count: u64,
    pub ci_method: CiMethod,
}

impl EstimateWithCI {
    pub fn normal(value: f64, std_error: f64, sample_count: u64, z: f64) -> Self {
        Self {
            value,
            std_error,
            ci_low: value - z * std_error,
            ci_high: value + z * std_error,
            sample_count,
            ci_method: CiMethod::Normal,
        }
    }

    /// Binomial proportion `hits / trials` with the Wilson score interval.
    pub fn wilson(hits: u64, trials: u64, z: f64) -> Self {
        let n = trials as f64;
        let ph = if trials == 0 { 0.0 } else { hits as f64 / n };
        let (lo, hi) = if trials == 0 {
            (0.0, 1.0)
        } else {
            let z2 = z * z;
            let denom = 1.0 + z2 / n;
            let center = (ph + z2 / (2.0 * n)) / denom;
            let half = z / denom * (ph * (1.0 - ph) / n + z2 / (4.0 * n * n)).sqrt();
            ((center - half).clamp(0.0, ph), (center + half).clamp(ph, 1.0))
        };
        Self {
            value: ph,
            std_error: if trials == 0 { 0.0 } else { (ph * (1.0 - ph) / n).sqrt() },
            ci_low: lo,
            ci_high: hi,
            sample_count: trials,
            ci_method: CiMethod::Wilson,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

fn check_z(z: f64) -> Result<()> {
    if !(z > 0.0) || !z.is_finite() {
        return domain("ci_z", format!("z must be positive, got {z}"));
    }
    Ok(())
}

fn p_bits(p: PExponent) -> u64 {
    p.value().to_bits()
}

/// `N` independent draws of `‖X‖_p`, `X ~ N(0, I_n)`, from stream family
/// `family`. Chunk `c` always holds samples `512c..512(c+1)`.
pub fn sample_norms(n: usize, p: PExponent, samples: u64, seed: u64, family: &str) -> Result<Vec<f64>> {
    if n == 0 {
        return domain("sample_norms", "n must be at least 1");
    }
    let kernel = LpKernel::new(p);
    let tag = stream_tag(family, &[n as u64, p_bits(p)]);
    Ok(collect_chunks(samples, CHUNK_SAMPLES, |c| {
        let mut s = c.stream(seed, tag);
        let mut scratch = Vec::new();
        (0..c.len()).map(|_| s.gaussian_norm(n, kernel, &mut scratch)).collect()
    }))
}

/// Moment accumulator over `values`, built chunk by chunk and merged in
/// order so the result matches what the parallel estimators produce.
pub fn accumulate_chunked(values: &[f64]) -> MomentAccumulator {
    values
        .chunks(CHUNK_SAMPLES as usize)
        .fold(MomentAccumulator::new(), |acc, c| {
            acc.merge(&MomentAccumulator::from_values(c))
        })
}

/// One row of a moment profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub r: f64,
    /// `I_r = (E‖X‖_p^r)^{1/r}`; `r = 0` is the geometric mean.
    pub estimate: EstimateWithCI,
    /// Set for negative `r ≤ -n/4`, where direct averaging is unreliable.
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentProfile {
    pub n: usize,
    pub p: PExponent,
    pub samples: u64,
    pub rows: Vec<MomentRow>,
}

impl MomentProfile {
    /// `I_r` non-decreasing in `r`, allowing overlap of consecutive intervals.
    pub fn is_lyapunov_monotone(&self) -> bool {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.r.total_cmp(&b.r));
        rows.windows(2)
            .all(|w| w[1].estimate.value >= w[0].estimate.value || w[1].estimate.ci_high >= w[0].estimate.ci_low)
    }

    pub fn any_unstable(&self) -> bool {
        self.rows.iter().any(|r| r.unstable)
    }
}

/// `I_r` estimated from sampled norms, in log-space.
pub fn r_mean(norms: &[f64], r: f64, z: f64) -> Result<EstimateWithCI> {
    if norms.len() < 2 {
        return domain("r_mean", "need at least two samples");
    }
    if norms.iter().any(|v| !(*v > 0.0)) {
        return domain("r_mean", "norms must be positive");
    }
    let count = norms.len() as u64;
    if r == 0.0 {
        let logs: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
        let acc = accumulate_chunked(&logs);
        let value = acc.mean()?.exp();
        return Ok(EstimateWithCI::normal(value, value * acc.std_error_mean()?, count, z));
    }
    let shift = norms.iter().map(|v| r * v.ln()).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = norms.iter().map(|v| (r * v.ln() - shift).exp()).collect();
    let acc = accumulate_chunked(&w);
    let a = acc.mean()?;
    let value = ((shift + a.ln()) / r).exp();
    let se = value * acc.std_error_mean()? / (r.abs() * a);
    Ok(EstimateWithCI::normal(value, se, count, z))
}

/// `I_s / I_r` from the same samples, with a delta-method standard error
/// that accounts for the correlation of the two moments.
pub fn moment_ratio(norms: &[f64], s: f64, r: f64, z: f64) -> Result<EstimateWithCI> {
    if s == 0.0 || r == 0.0 {
        return domain("moment_ratio", "orders must be non-zero");
    }
    if norms.len() < 2 || norms.iter().any(|v| !(*v > 0.0)) {
        return domain("moment_ratio", "need at least two positive samples");
    }
    let shifted = |q: f64| {
        let shift = norms.iter().map(|v| q * v.ln()).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = norms.iter().map(|v| (q * v.ln() - shift).exp()).collect();
        let mean = accumulate_chunked(&w).mean().unwrap_or(f64::NAN);
        (shift, w, mean)
    };
    let (sh_s, w_s, a_s) = shifted(s);
    let (sh_r, w_r, a_r) = shifted(r);
    let ln_ratio = (sh_s + a_s.ln()) / s - (sh_r + a_r.ln()) / r;
    let influence: Vec<f64> = w_s
        .iter()
        .zip(&w_r)
        .map(|(x, y)| x / (s * a_s) - y / (r * a_r))
        .collect();
    let se_ln = accumulate_chunked(&influence).std_error_mean()?;
    let value = ln_ratio.exp();
    Ok(EstimateWithCI::normal(value, value * se_ln, norms.len() as u64, z))
}

/// Mean and variance of `‖X‖_p` plus the moment profile over `r_grid`.
pub fn estimate_norm_moments(
    n: usize,
    p: PExponent,
    samples: u64,
    seed: u64,
    r_grid: &[f64],
    z: f64,
) -> Result<(MomentAccumulator, MomentProfile)> {
    if samples < 100 {
        return domain(
            "estimate_norm_moments",
            format!("need at least 100 samples, got {samples}"),
        );
    }
    check_z(z)?;
    if let Some(r) = r_grid.iter().find(|r| !(**r > -(n as f64)) || !r.is_finite()) {
        return domain("estimate_norm_moments", format!("moment order {r} must exceed -n"));
    }
    let norms = sample_norms(n, p, samples, seed, "norms")?;
    let acc = accumulate_chunked(&norms);
    let rows = r_grid
        .iter()
        .map(|&r| {
            Ok(MomentRow {
                r,
                estimate: r_mean(&norms, r, z)?,
                unstable: r <= -(n as f64) / 4.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((acc, MomentProfile { n, p, samples, rows }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Mean of an independent batch of the same size.
    EmpiricalMean,
    /// Exact `E‖X‖_p`, available for `p ∈ {1, 2}`.
    TheoryMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub eps: f64,
    pub prob: EstimateWithCI,
    pub hits: u64,
    /// No sample exceeded the threshold; only `ci_high` is informative.
    pub upper_bound_only: bool,
}

/// Empirical `P(|‖X‖_p - m| > ε m)` on an ε grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub n: usize,
    pub p: PExponent,
    pub samples: u64,
    pub seed: u64,
    pub centering: Centering,
    pub center: f64,
    pub rows: Vec<TailRow>,
}

fn tail_rows(norms: &[f64], center: f64, eps_grid: &[f64], z: f64) -> Vec<TailRow> {
    let mut dev: Vec<f64> = norms.iter().map(|v| (v - center).abs() / center).collect();
    dev.sort_unstable_by(f64::total_cmp);
    let total = dev.len() as u64;
    eps_grid
        .iter()
        .map(|&eps| {
            let hits = (dev.len() - dev.partition_point(|d| *d <= eps)) as u64;
            TailRow {
                eps,
                prob: EstimateWithCI::wilson(hits, total, z),
                hits,
                upper_bound_only: hits == 0,
            }
        })
        .collect()
}

fn check_eps_grid(op: &'static str, eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return domain(op, "eps grid is empty");
    }
    if let Some(e) = eps_grid.iter().find(|e| !(0.0..=10.0).contains(*e)) {
        return domain(op, format!("eps {e} outside [0, 10]"));
    }
    Ok(())
}

pub fn tail_curve(
    n: usize,
    p: PExponent,
    eps_grid: &[f64],
    samples: u64,
    seed: u64,
    centering: Centering,
    z: f64,
) -> Result<TailCurve> {
    check_eps_grid("tail_curve", eps_grid)?;
    check_z(z)?;
    if samples < 2 {
        return domain("tail_curve", "need at least two samples");
    }
    let center = match centering {
        Centering::TheoryMean => match p {
            PExponent::Finite(q) if q == 1.0 || q == 2.0 => mean_lp_prediction(n as u64, p)?.value,
            _ => {
                return domain("tail_curve", format!("no closed-form mean for p = {p}"));
            }
        },
        Centering::EmpiricalMean => accumulate_chunked(&sample_norms(n, p, samples, seed, "tails-center")?).mean()?,
    };
    let norms = sample_norms(n, p, samples, seed, "tails")?;
    Ok(TailCurve {
        n,
        p,
        samples,
        seed,
        centering,
        center,
        rows: tail_rows(&norms, center, eps_grid, z),
    })
}

/// Largest number of sorted samples inside a closed window of width `2t`.
pub fn levy_window_count(sorted: &[f64], t: f64) -> usize {
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..sorted.len() {
        while sorted[hi] - sorted[lo] > 2.0 * t {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

/// Empirical `Q(η, t) = sup_λ P(|η - λ| ≤ t)` with a Wilson interval on the
/// maximizing window.
pub fn levy_concentration(sorted: &[f64], t: f64, z: f64) -> Result<EstimateWithCI> {
    if sorted.is_empty() {
        return domain("levy_concentration", "samples must be non-empty");
    }
    if !(t >= 0.0) {
        return domain("levy_concentration", format!("t must be non-negative, got {t}"));
    }
    if sorted.windows(2).any(|w| !(w[0] <= w[1])) {
        return domain("levy_concentration", "samples must be sorted ascending");
    }
    check_z(z)?;
    let hits = levy_window_count(sorted, t) as u64;
    Ok(EstimateWithCI::wilson(hits, sorted.len() as u64, z))
}

// 15-point Kronrod nodes on [-1, 1] (non-negative half) and weights; the
// embedded 7-point Gauss rule uses the odd-indexed nodes and the centre.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod integration by repeated bisection of the interval
/// with the largest error estimate.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|x| x.2).sum();
        let err: f64 = parts.iter().map(|x| x.3).sum();
        if err <= rel_tol * total.abs() || parts.len() >= MAX_INTERVALS || err == 0.0 {
            return (total, err);
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|x| x.0)
            .unwrap();
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// `E||g₁|^p - |g₂|^p|^r` by the polar-coordinate identity
/// `(2^{pr/2+2}/π) Γ(pr/2+1) ∫₀^{π/4} (cos^p θ - sin^p θ)^r dθ`.
pub fn pair_moment_quadrature(p: f64, r: f64) -> Result<MomentValue> {
    if !(p >= 2.0) || !p.is_finite() {
        return domain("pair_moment_quadrature", format!("p must be finite and >= 2, got {p}"));
    }
    if !(r >= 1.0) || !r.is_finite() {
        return domain("pair_moment_quadrature", format!("r must be >= 1, got {r}"));
    }
    if p * r > 600.0 {
        return domain("pair_moment_quadrature", format!("p r = {} exceeds 600", p * r));
    }
    // (cos^p - sin^p)^r = exp(r (p log cos + log(1 - tan^p)))
    let integrand = |t: f64| {
        let tp = p * t.tan().ln();
        (r * (p * t.cos().ln() + (-tp.exp_m1()).ln())).exp()
    };
    let (integral, _) = integrate_adaptive(integrand, 0.0, PI / 4.0, 1e-13);
    let half = 0.5 * p * r;
    let ln_value = (half + 2.0) * LN_2 - LN_PI + ln_gamma_unchecked(half + 1.0) + integral.ln();
    Ok(MomentValue::from_log(ln_value))
}

/// `(E|‖X‖_p^p - ‖Y‖_p^p|^r)^{1/r}` for independent `X, Y ~ N(0, I_n)`.
pub fn pair_power_moment_mc(n: usize, p: f64, r: f64, samples: u64, seed: u64, z: f64) -> Result<EstimateWithCI> {
    if n == 0 {
        return domain("pair_power_moment_mc", "n must be at least 1");
    }
    if !(p >= 1.0) || !p.is_finite() {
        return domain("pair_power_moment_mc", format!("p must be finite and >= 1, got {p}"));
    }
    if !(r >= 1.0) || !r.is_finite() {
        return domain("pair_power_moment_mc", format!("r must be >= 1, got {r}"));
    }
    if samples < 2 {
        return domain("pair_power_moment_mc", "need at least two samples");
    }
    check_z(z)?;
    let kernel = LpKernel::new(PExponent::Finite(p));
    let tag = stream_tag("pairs", &[n as u64, p.to_bits(), r.to_bits()]);
    let values = collect_chunks(samples, CHUNK_SAMPLES, |c| {
        let mut s = c.stream(seed, tag);
        (0..c.len())
            .map(|_| {
                let x = s.gaussian_pow_sum(n, kernel);
                let y = s.gaussian_pow_sum(n, kernel);
                (x - y).abs().powf(r)
            })
            .collect()
    });
    let acc = accumulate_chunked(&values);
    let a = acc.mean()?;
    let value = a.powf(1.0 / r);
    let se = value * acc.std_error_mean()? / (r * a);
    Ok(EstimateWithCI::normal(value, se, samples, z))
}

/// Outcome of the order-statistics anti-concentration experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnticoncReport {
    pub n: usize,
    pub p: f64,
    pub eps: f64,
    pub samples: u64,
    /// `P(x₁* ∈ [y₁, y₀])`.
    pub prob_x1_window: EstimateWithCI,
    /// `P(|X| ∈ Q₁)`.
    pub prob_q1: EstimateWithCI,
    pub q1_count: u64,
    /// `(i, P(x_i* ≥ y_{⌊i/e²⌋}))`.
    pub top_order_tail: Vec<(usize, EstimateWithCI)>,
    /// Members of `Q₁` with `‖z‖_p^p > 3e² (z₁*)^p`.
    pub pnorm_violations: u64,
    /// Members of `Q₁` with `‖Tz‖_p - ‖z‖_p ≤ 2ε√(log n)`.
    pub distance_violations: u64,
    /// Largest `‖z‖_p^p / (z₁*)^p` seen on `Q₁`.
    pub max_pnorm_ratio: f64,
    /// Smallest `(‖Tz‖_p - ‖z‖_p) / (ε√(log n))` seen on `Q₁`.
    pub min_distance_gain: f64,
    /// `Q(‖X‖_p, ε√(log n))` over all samples.
    pub levy_q: EstimateWithCI,
}

pub const TOP_ORDER_ROWS: usize = 10;

struct AnticoncChunk {
    x1_window: u64,
    q1: u64,
    top_hits: [u64; TOP_ORDER_ROWS],
    pnorm_violations: u64,
    distance_violations: u64,
    max_pnorm_ratio: f64,
    min_distance_gain: f64,
    norms: Vec<f64>,
}

pub fn anticoncentration_experiment(
    n: usize,
    p: f64,
    eps: f64,
    samples: u64,
    seed: u64,
    z: f64,
) -> Result<AnticoncReport> {
    if n < 2 {
        return domain("anticoncentration_experiment", "n must be at least 2");
    }
    let ln = (n as f64).ln();
    if !(p >= 12.0 * ln) || !p.is_finite() {
        return domain(
            "anticoncentration_experiment",
            format!("p must satisfy p >= 12 log n = {:.4}, got {p}", 12.0 * ln),
        );
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return domain(
            "anticoncentration_experiment",
            format!("eps must lie in (0, 1], got {eps}"),
        );
    }
    check_z(z)?;
    let y = quantile_vector(n)?;
    let e2 = E * E;
    let bucket = |i: usize| (i as f64 / e2).floor() as usize;
    let floor_level = y.at(bucket(n));
    let shift = 60.0 * eps * ln.sqrt();
    let gain_unit = eps * ln.sqrt();
    let kernel = LpKernel::new(PExponent::Finite(p));
    let tag = stream_tag("anticonc", &[n as u64, p.to_bits(), eps.to_bits()]);

    let parts = map_chunks(samples, CHUNK_SAMPLES, |c| {
        let mut s = c.stream(seed, tag);
        let mut x = vec![0.0; n];
        let mut top: Vec<f64> = Vec::new();
        let mut out = AnticoncChunk {
            x1_window: 0,
            q1: 0,
            top_hits: [0; TOP_ORDER_ROWS],
            pnorm_violations: 0,
            distance_violations: 0,
            max_pnorm_ratio: 0.0,
            min_distance_gain: f64::INFINITY,
            norms: Vec::with_capacity(c.len()),
        };
        for _ in 0..c.len() {
            s.fill_gaussian(&mut x);
            x.iter_mut().for_each(|v| *v = v.abs());
            out.norms.push(kernel.norm(&x));
            // T acts on the first coordinate attaining the maximum
            let (k, z1) = x
                .iter()
                .enumerate()
                .fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
            // entries at or below y_{⌊n/e²⌋} satisfy every rank constraint
            top.clear();
            top.extend(x.iter().copied().filter(|v| *v > floor_level));
            top.sort_unstable_by(|a, b| b.total_cmp(a));
            for (i, hits) in out.top_hits.iter_mut().enumerate() {
                let rank = i + 1;
                if rank <= top.len() && top[rank - 1] >= y.at(bucket(rank)) {
                    *hits += 1;
                }
            }
            let window = z1 >= y.at(1) && z1 <= y.y0;
            if !window {
                continue;
            }
            out.x1_window += 1;
            let ranks_ok = top
                .iter()
                .enumerate()
                .skip(1)
                .all(|(idx, &v)| v <= y.at(bucket(idx + 1)));
            if !ranks_ok {
                continue;
            }
            out.q1 += 1;
            let ratio: f64 = x.iter().map(|&v| kernel.pow_sum(&[v / z1])).sum();
            out.max_pnorm_ratio = out.max_pnorm_ratio.max(ratio);
            if ratio > 3.0 * e2 {
                out.pnorm_violations += 1;
            }
            let bumped = x[k] + shift;
            let ln_big = p * (bumped / z1).ln();
            let ln_tz = z1.ln() + (ln_big + ((ratio - 1.0) * (-ln_big).exp()).ln_1p()) / p;
            let gain = ln_tz.exp() - z1 * ratio.powf(1.0 / p);
            out.min_distance_gain = out.min_distance_gain.min(gain / gain_unit);
            if !(gain > 2.0 * gain_unit) {
                out.distance_violations += 1;
            }
        }
        out
    });

    let mut x1_window = 0;
    let mut q1 = 0;
    let mut top_hits = [0u64; TOP_ORDER_ROWS];
    let mut pnorm_violations = 0;
    let mut distance_violations = 0;
    let mut max_pnorm_ratio: f64 = 0.0;
    let mut min_distance_gain = f64::INFINITY;
    let mut norms = Vec::with_capacity(samples as usize);
    for part in parts {
        x1_window += part.x1_window;
        q1 += part.q1;
        top_hits.iter_mut().zip(part.top_hits).for_each(|(a, b)| *a += b);
        pnorm_violations += part.pnorm_violations;
        distance_violations += part.distance_violations;
        max_pnorm_ratio = max_pnorm_ratio.max(part.max_pnorm_ratio);
        min_distance_gain = min_distance_gain.min(part.min_distance_gain);
        norms.extend(part.norms);
    }
    norms.sort_unstable_by(f64::total_cmp);
    Ok(AnticoncReport {
        n,
        p,
        eps,
        samples,
        prob_x1_window: EstimateWithCI::wilson(x1_window, samples, z),
        prob_q1: EstimateWithCI::wilson(q1, samples, z),
        q1_count: q1,
        top_order_tail: top_hits
            .iter()
            .enumerate()
            .map(|(i, &h)| (i + 1, EstimateWithCI::wilson(h, samples, z)))
            .collect(),
        pnorm_violations,
        distance_violations,
        max_pnorm_ratio,
        min_distance_gain,
        levy_q: levy_concentration(&norms, gain_unit, z)?,
    })
}

/// Two-sided tail curve for `p ≥ (log n)²` with the least-squares slope of
/// `log prob` against `ε log n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReverseConcentration {
    pub curve: TailCurve,
    /// `None` when fewer than three rows have hits.
    pub fit: Option<FitResult>,
}

pub fn reverse_concentration_check(
    n: usize,
    p: PExponent,
    eps_grid: &[f64],
    samples: u64,
    seed: u64,
    z: f64,
) -> Result<ReverseConcentration> {
    if n < 3 {
        return domain("reverse_concentration_check", "n must be at least 3");
    }
    let ln = (n as f64).ln();
    if let PExponent::Finite(q) = p {
        if q < ln * ln {
            return domain(
                "reverse_concentration_check",
                format!("p must be at least (log n)^2 = {:.4}, got {q}", ln * ln),
            );
        }
    }
    let curve = tail_curve(n, p, eps_grid, samples, seed, Centering::EmpiricalMean, z)?;
    let used: Vec<&TailRow> = curve.rows.iter().filter(|r| r.hits > 0 && r.eps > 0.0).collect();
    let fit = if used.len() >= 3 {
        let x: Vec<f64> = used.iter().map(|r| r.eps * ln).collect();
        let y: Vec<f64> = used.iter().map(|r| r.prob.value.ln()).collect();
        ols(&x, &y, "log prob ~ eps log n").ok()
    } else {
        None
    };
    Ok(ReverseConcentration { curve, fit })
}
