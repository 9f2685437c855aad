//! Parameter grids on the command line.
//!
//! A grid is a comma-separated list of items. An item is a number
//! (`100`, `1e6`, `2^10`), `inf` for exponents, an integer range `a..b`
//! (inclusive, powers of two when both ends are written `2^i`), or a real
//! range `start:stop:step` (inclusive up to rounding).

use lpsections::PExponent;

use crate::error::{CliError, CliResult};

fn bad(flag: &str, item: &str, why: &str) -> CliError {
    CliError::Config(format!("--{flag}: cannot read '{item}': {why}"))
}

fn scalar(flag: &str, s: &str) -> CliResult<f64> {
    let s = s.trim();
    if let Some((b, e)) = s.split_once('^') {
        let b: f64 = b.trim().parse().map_err(|_| bad(flag, s, "bad base"))?;
        let e: f64 = e.trim().parse().map_err(|_| bad(flag, s, "bad exponent"))?;
        return Ok(b.powf(e));
    }
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    s.parse().map_err(|_| bad(flag, s, "not a number"))
}

fn power_of_two_exponent(s: &str) -> Option<u32> {
    let (b, e) = s.trim().split_once('^')?;
    if b.trim() != "2" {
        return None;
    }
    e.trim().parse().ok()
}

/// Real-valued grid.
pub fn parse_reals(flag: &str, spec: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.len() {
            1 => out.push(scalar(flag, item)?),
            3 => {
                let (a, b, h) = (
                    scalar(flag, parts[0])?,
                    scalar(flag, parts[1])?,
                    scalar(flag, parts[2])?,
                );
                if !(h > 0.0) || !a.is_finite() || !b.is_finite() || b < a {
                    return Err(bad(flag, item, "need start <= stop and a positive step"));
                }
                let count = ((b - a) / h + 1e-9).floor() as usize + 1;
                if count > 100_000 {
                    return Err(bad(flag, item, "range has more than 100000 points"));
                }
                // a + i h rather than repeated addition keeps the points exact
                // where they can be
                out.extend((0..count).map(|i| a + i as f64 * h));
            }
            _ => return Err(bad(flag, item, "ranges are start:stop:step")),
        }
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("--{flag}: empty list")));
    }
    Ok(out)
}

/// Positive-integer grid.
pub fn parse_counts(flag: &str, spec: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = item.split_once("..") {
            if let (Some(i), Some(j)) = (power_of_two_exponent(a), power_of_two_exponent(b)) {
                if i > j || j > 62 {
                    return Err(bad(flag, item, "need 2^i..2^j with i <= j <= 62"));
                }
                out.extend((i..=j).map(|e| 1usize << e));
                continue;
            }
            let (a, b) = (integer(flag, a)?, integer(flag, b)?);
            if a > b || b - a > 100_000 {
                return Err(bad(flag, item, "need a <= b and at most 100000 values"));
            }
            out.extend(a..=b);
        } else {
            out.push(integer(flag, item)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("--{flag}: empty list")));
    }
    Ok(out)
}

/// A single positive integer in the same notation, e.g. `1e5` or `2^16`.
pub fn parse_count(flag: &str, spec: &str) -> CliResult<u64> {
    integer(flag, spec.trim()).map(|v| v as u64)
}

fn integer(flag: &str, s: &str) -> CliResult<usize> {
    let v = scalar(flag, s)?;
    if !(v >= 1.0) || v.fract() != 0.0 || v > 1e15 {
        return Err(bad(flag, s, "expected a positive integer"));
    }
    Ok(v as usize)
}

/// Exponent grid; accepts `inf`.
pub fn parse_exponents(flag: &str, spec: &str) -> CliResult<Vec<PExponent>> {
    parse_reals(flag, spec)?
        .into_iter()
        .map(|p| PExponent::finite(p).map_err(|e| CliError::Config(format!("--{flag}: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(parse_counts("n", "2^10..2^12").unwrap(), vec![1024, 2048, 4096]);
        assert_eq!(parse_counts("n", "1e4, 3..5").unwrap(), vec![10_000, 3, 4, 5]);
        assert!(parse_counts("n", "0").is_err());
        assert!(parse_counts("n", "2.5").is_err());
        assert!(parse_counts("n", "").is_err());
        assert_eq!(parse_count("samples", "2e5").unwrap(), 200_000);
        assert!(parse_count("samples", "1,2").is_err());
    }

    #[test]
    fn reals_and_ranges() {
        let g = parse_reals("eps", "0.1:0.5:0.1").unwrap();
        assert_eq!(g.len(), 5);
        assert!((g[4] - 0.5).abs() < 1e-12);
        assert_eq!(parse_reals("r", "-1,0,2").unwrap(), vec![-1.0, 0.0, 2.0]);
        assert!(parse_reals("eps", "0.5:0.1:0.1").is_err());
    }

    #[test]
    fn exponents() {
        let p = parse_exponents("p", "1,4.5,inf").unwrap();
        assert_eq!(
            p,
            vec![PExponent::Finite(1.0), PExponent::Finite(4.5), PExponent::Infinity]
        );
        assert!(parse_exponents("p", "0.5").is_err());
    }
}
