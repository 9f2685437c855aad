//! Special functions behind the closed-form quantities: log-Gamma, the
//! standard normal CDF and its inverse, Gaussian absolute moments, Mill's
//! ratio brackets and quantiles of `|g|`.
//!
//! Moment arithmetic happens in log-space; `E|g|^p` overflows an `f64` a
//! little above `p = 300`.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_SQRT_PI: f64 = 0.572_364_942_924_700_1;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Shift point above which the Stirling series is used directly.
const STIRLING_MIN: f64 = 10.0;

/// Natural log of the Gamma function for `x > 0`.
///
/// Stirling's series with seven Bernoulli corrections for `x >= 10`, and the
/// recurrence `Γ(x) = Γ(x + m) / (x (x+1) ... (x+m-1))` below that.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain("ln_gamma", format!("x must be positive and finite, got {x}"));
    }
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < STIRLING_MIN {
        prod *= z;
        z += 1.0;
    }
    stirling(z) - prod.ln()
}

fn stirling(z: f64) -> f64 {
    // B_2k / (2k (2k - 1)) for k = 1..7
    const COEF: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
    ];
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut series = 0.0;
    for c in COEF.iter().rev() {
        series = series * inv2 + c;
    }
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series * inv
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF `Φ(x)`, accurate in relative terms in the lower tail.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn std_normal_sf(x: f64) -> f64 {
    std_normal_cdf(-x)
}

// Rational approximation of Φ⁻¹ (P. J. Acklam), relative error below 1.2e-9.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const ACKLAM_LOW: f64 = 0.024_25;

/// `-Φ⁻¹(q)` for `q ∈ (0, 0.5]` from the rational stage only.
///
/// This is the magnitude of the normal quantile at `q` or `1 - q`. It is
/// monotone decreasing in `q` and is what the Gaussian sampler uses.
#[inline]
pub(crate) fn neg_inv_cdf_rational(q: f64) -> f64 {
    debug_assert!(q > 0.0 && q <= 0.5);
    if q > ACKLAM_LOW {
        neg_inv_cdf_central(q)
    } else {
        neg_inv_cdf_tail(q)
    }
}

pub(crate) const ACKLAM_SPLIT: f64 = ACKLAM_LOW;

#[inline(always)]
pub(crate) fn neg_inv_cdf_central(q: f64) -> f64 {
    let t = q - 0.5;
    let r = t * t;
    let num = (((((ACKLAM_A[0] * r + ACKLAM_A[1]) * r + ACKLAM_A[2]) * r + ACKLAM_A[3]) * r + ACKLAM_A[4]) * r
        + ACKLAM_A[5])
        * t;
    let den = ((((ACKLAM_B[0] * r + ACKLAM_B[1]) * r + ACKLAM_B[2]) * r + ACKLAM_B[3]) * r + ACKLAM_B[4]) * r + 1.0;
    -num / den
}

#[inline]
pub(crate) fn neg_inv_cdf_tail(q: f64) -> f64 {
    let t = (-2.0 * q.ln()).sqrt();
    let num =
        ((((ACKLAM_C[0] * t + ACKLAM_C[1]) * t + ACKLAM_C[2]) * t + ACKLAM_C[3]) * t + ACKLAM_C[4]) * t + ACKLAM_C[5];
    let den = (((ACKLAM_D[0] * t + ACKLAM_D[1]) * t + ACKLAM_D[2]) * t + ACKLAM_D[3]) * t + 1.0;
    -num / den
}

/// Inverse standard normal CDF on the open interval `(0, 1)`.
///
/// Rational initial guess followed by two Newton steps on the CDF. The
/// residual is always formed on the side of the smaller tail, so both tails
/// keep full relative precision.
pub fn std_normal_inv_cdf(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return domain("std_normal_inv_cdf", format!("probability must lie in (0, 1), got {s}"));
    }
    if s == 0.5 {
        return Ok(0.0);
    }
    let (q, sign) = if s < 0.5 { (s, -1.0) } else { (1.0 - s, 1.0) };
    // x < 0 solves Φ(x) = q
    let mut x = -neg_inv_cdf_rational(q);
    for _ in 0..2 {
        let density = std_normal_pdf(x);
        if density == 0.0 {
            break;
        }
        x -= (std_normal_cdf(x) - q) / density;
    }
    Ok(-sign * x)
}

/// `E|g|^p` for a standard normal `g`, kept in log-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentValue {
    pub log_value: f64,
    /// `exp(log_value)`; `+inf` when that overflows.
    pub value: f64,
}

impl MomentValue {
    pub fn from_log(log_value: f64) -> Self {
        Self {
            log_value,
            value: log_value.exp(),
        }
    }

    /// `(E|g|^p)^{1/p}`, i.e. σ_p.
    pub fn root(&self, p: f64) -> f64 {
        (self.log_value / p).exp()
    }
}

/// Absolute moment `σ_p^p = E|g|^p = 2^{p/2} Γ((p+1)/2) / √π`.
pub fn gaussian_abs_moment(p: f64) -> Result<MomentValue> {
    if !(p >= 0.0) || !p.is_finite() {
        return domain("gaussian_abs_moment", format!("p must be finite and >= 0, got {p}"));
    }
    Ok(MomentValue::from_log(ln_abs_moment(p)))
}

pub(crate) fn ln_abs_moment(p: f64) -> f64 {
    0.5 * p * LN_2 + ln_gamma_unchecked(0.5 * (p + 1.0)) - LN_SQRT_PI
}

/// `σ_p = (E|g|^p)^{1/p}` for `p > 0`.
pub fn gaussian_abs_norm(p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return domain("gaussian_abs_norm", format!("p must be positive, got {p}"));
    }
    Ok(gaussian_abs_moment(p)?.root(p))
}

/// Bracket `a/(1+a²) ≤ e^{a²/2} ∫_a^∞ e^{-t²/2} dt ≤ 1/a`.
pub fn mills_ratio_bracket(a: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !a.is_finite() {
        return domain("mills_ratio_bracket", format!("a must be positive, got {a}"));
    }
    Ok((a / (1.0 + a * a), 1.0 / a))
}

/// Quantile `ξ_s` of `|g|`: the point with `P(|g| ≤ ξ_s) = s`.
pub fn abs_gauss_quantile(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return domain("abs_gauss_quantile", format!("s must lie in (0, 1), got {s}"));
    }
    // ξ_s = Φ⁻¹((1+s)/2) = -Φ⁻¹((1-s)/2); the second form keeps the tail exact
    let upper_tail = if s >= 0.5 { 0.5 * (1.0 - s) } else { 0.5 - 0.5 * s };
    Ok(-std_normal_inv_cdf(upper_tail)?)
}

/// `ξ` with `P(|g| > ξ) = tail`, for tails given directly (avoids forming `1 - tail`).
pub fn abs_gauss_upper_quantile(tail: f64) -> Result<f64> {
    if !(tail > 0.0 && tail < 1.0) {
        return domain(
            "abs_gauss_upper_quantile",
            format!("tail must lie in (0, 1), got {tail}"),
        );
    }
    Ok(-std_normal_inv_cdf(0.5 * tail)?)
}

/// `ln(π)`, used by the quadrature prefactors.
pub(crate) const LN_PI: f64 = 1.144_729_885_849_400_2;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    // Reference values from mpmath at 40 digits.
    const LGAMMA_REF: [(f64, f64); 12] = [
        (0.5, 0.572_364_942_924_700_087_1),
        (0.75, 0.203_280_951_431_295_371_5),
        (1.5, -0.120_782_237_635_245_222_3),
        (2.5, 0.284_682_870_472_919_159_6),
        (3.0, 0.693_147_180_559_945_309_4),
        (6.0, 4.787_491_742_782_045_994),
        (7.25, 7.052_185_450_738_539_445),
        (10.5, 13.940_625_219_403_763_63),
        (33.3, 82.603_723_581_654_952_93),
        (100.0, 359.134_205_369_575_398_8),
        (1234.5, 7550.550_901_077_894_896),
        (1e6, 12_815_504.569_147_611_66),
    ];

    #[test]
    fn ln_gamma_reference_values() {
        assert_eq!(ln_gamma(1.0).unwrap(), 0.0);
        assert_eq!(ln_gamma(2.0).unwrap(), 0.0);
        for (x, want) in LGAMMA_REF {
            let got = ln_gamma(x).unwrap();
            assert!(
                (got - want).abs() <= 1e-13 * want.abs().max(1.0),
                "ln_gamma({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn ln_gamma_matches_libm_on_a_grid() {
        let mut x = 0.5;
        while x < 1e6 {
            let want = libm::lgamma(x);
            let got = ln_gamma(x).unwrap();
            assert!(
                (got - want).abs() <= 1e-13 * want.abs().max(1.0),
                "x={x}: {got} vs {want}"
            );
            x *= 1.07;
        }
    }

    #[test]
    fn ln_gamma_rejects_non_positive() {
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.5).is_err());
        assert!(ln_gamma(f64::NAN).is_err());
    }

    #[test]
    fn cdf_basics() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        for &x in &[0.1, 0.7, 1.3, 2.9, 6.0, 11.0] {
            assert_relative_eq!(std_normal_cdf(-x) + std_normal_cdf(x), 1.0, epsilon = 1e-15);
        }
        assert_relative_eq!(std_normal_cdf(1.3), 0.903_199_515_414_389_666_9, max_relative = 1e-14);
        assert_relative_eq!(std_normal_cdf(-5.0), 2.866_515_718_791_939_117e-7, max_relative = 1e-13);
        assert_relative_eq!(
            std_normal_cdf(-30.0),
            4.906_713_927_148_187_059e-198,
            max_relative = 1e-12
        );
    }

    #[test]
    fn inverse_cdf_reference_values() {
        assert_relative_eq!(
            std_normal_inv_cdf(0.975).unwrap(),
            1.959_963_984_540_054_2,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            std_normal_inv_cdf(0.75).unwrap(),
            0.674_489_750_196_081_743,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            std_normal_inv_cdf(1e-15).unwrap(),
            -7.941_345_326_170_996_781,
            max_relative = 1e-13
        );
        assert_eq!(std_normal_inv_cdf(0.5).unwrap(), 0.0);
    }

    #[test]
    fn inverse_cdf_domain() {
        assert!(std_normal_inv_cdf(0.0).is_err());
        assert!(std_normal_inv_cdf(1.0).is_err());
        assert!(std_normal_inv_cdf(-0.1).is_err());
        assert!(std_normal_inv_cdf(f64::NAN).is_err());
    }

    #[test]
    fn cdf_roundtrip_on_log_grid() {
        // 10^4 points, log-spaced towards both ends of [1e-15, 1 - 1e-15]
        let m = 5_000;
        for i in 0..m {
            let e = -15.0 + (i as f64) * (15.0 - 0.30103) / (m as f64 - 1.0);
            let lo = 10f64.powf(e);
            for s in [lo, 1.0 - lo] {
                let x = std_normal_inv_cdf(s).unwrap();
                let back = std_normal_cdf(x);
                assert!((back - s).abs() <= 1e-12, "s={s}: Φ(Φ⁻¹(s))={back}");
            }
        }
    }

    #[test]
    fn inverse_cdf_is_odd() {
        for &s in &[1e-12, 1e-5, 0.01, 0.2, 0.49] {
            // 1 - s is rounded; invert the exactly representable complement
            let c = 1.0 - s;
            let b = std_normal_inv_cdf(c).unwrap();
            let a = std_normal_inv_cdf(1.0 - c).unwrap();
            assert_relative_eq!(a, -b, max_relative = 1e-9);
        }
    }

    #[test]
    fn abs_moment_exact_cases() {
        assert_relative_eq!(gaussian_abs_moment(0.0).unwrap().value, 1.0, max_relative = 1e-14);
        assert_relative_eq!(gaussian_abs_moment(2.0).unwrap().value, 1.0, max_relative = 1e-14);
        assert_relative_eq!(gaussian_abs_moment(4.0).unwrap().value, 3.0, max_relative = 1e-14);
        assert_relative_eq!(gaussian_abs_moment(6.0).unwrap().value, 15.0, max_relative = 1e-14);
        assert_relative_eq!(
            gaussian_abs_moment(1.0).unwrap().value,
            0.797_884_560_802_865_4,
            max_relative = 1e-14
        );
        assert!(gaussian_abs_moment(-0.5).is_err());
    }

    #[test]
    fn abs_moment_stirling_regime() {
        let p: f64 = 200.0;
        let m = gaussian_abs_moment(p).unwrap();
        let log_asym = 0.5 * LN_2 + 0.5 * p * (p.ln() - 1.0);
        let ratio = (m.log_value - log_asym).exp();
        assert!((0.99..=1.01).contains(&ratio), "ratio {ratio}");
        // overflows linearly but not in log-space
        let big = gaussian_abs_moment(400.0).unwrap();
        assert!(big.value.is_infinite());
        assert!(big.log_value.is_finite());
    }

    #[test]
    fn abs_moment_is_log_convex() {
        let grid: Vec<f64> = (0..200).map(|i| 0.25 * i as f64).collect();
        for w in grid.windows(3) {
            let (p, q, r) = (w[0], w[1], w[2]);
            let lp = gaussian_abs_moment(p).unwrap().log_value;
            let lq = gaussian_abs_moment(q).unwrap().log_value;
            let lr = gaussian_abs_moment(r).unwrap().log_value;
            let lam = (r - q) / (r - p);
            assert!(lq <= lam * lp + (1.0 - lam) * lr + 1e-12, "p={p} q={q} r={r}");
        }
    }

    #[test]
    fn mills_bracket_examples() {
        assert_eq!(mills_ratio_bracket(1.0).unwrap(), (0.5, 1.0));
        assert_eq!(mills_ratio_bracket(2.0).unwrap(), (0.4, 0.5));
        let exact1 = 0.655_679_542_418_798;
        let exact2 = 0.421_369_229_288_054;
        assert!(0.5 <= exact1 && exact1 <= 1.0);
        assert!(0.4 <= exact2 && exact2 <= 0.5);
        let (lo, hi) = mills_ratio_bracket(100.0).unwrap();
        assert!(hi - lo <= 1e-4 * hi);
        assert!(mills_ratio_bracket(0.0).is_err());
        assert!(mills_ratio_bracket(-1.0).is_err());
    }

    #[test]
    fn mills_bracket_contains_cdf_value() {
        for i in 0..1000 {
            let a = 1e-2 + (10.0 - 1e-2) * i as f64 / 999.0;
            let exact = (0.5 * a * a).exp() * (2.0 * PI).sqrt() * std_normal_sf(a);
            let (lo, hi) = mills_ratio_bracket(a).unwrap();
            assert!(lo <= exact * (1.0 + 1e-13) && exact <= hi * (1.0 + 1e-13), "a={a}");
        }
    }

    #[test]
    fn abs_quantile_values() {
        assert_relative_eq!(
            abs_gauss_quantile(0.5).unwrap(),
            0.674_489_750_196_081_7,
            max_relative = 1e-13
        );
        let n = 1e6;
        let a_n = -std_normal_inv_cdf(1.0 / (2.0 * n)).unwrap();
        assert_relative_eq!(a_n, 4.891_638_475_698_590_4, max_relative = 1e-12);
        assert_relative_eq!(abs_gauss_quantile(1.0 - 1.0 / n).unwrap(), a_n, max_relative = 1e-9);
        assert_relative_eq!(abs_gauss_upper_quantile(1.0 / n).unwrap(), a_n, max_relative = 1e-13);
        let mut prev = 0.0;
        for i in 1..1000 {
            let q = abs_gauss_quantile(i as f64 / 1000.0).unwrap();
            assert!(q > prev);
            prev = q;
        }
        assert!(abs_gauss_quantile(1e-12).unwrap() < 1e-11);
        assert!(abs_gauss_quantile(0.0).is_err());
        assert!(abs_gauss_quantile(1.0).is_err());
    }
}
