//! Ordinary least squares on transformed coordinates.

use serde::Serialize;

use crate::error::{Error, Result};

/// Straight-line fit `y ≈ intercept + slope · x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope (0 for an exact fit or 2 points).
    pub slope_se: f64,
    pub model: String,
    pub points: usize,
}

pub fn ols(x: &[f64], y: &[f64], model: impl Into<String>) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::DegenerateFit(format!(
            "x has {} points, y has {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateFit("need at least 2 points".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite coordinate".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= f64::EPSILON * nf * mx.abs().max(1.0).powi(2) {
        return Err(Error::DegenerateFit("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    };
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        slope_se,
        model: model.into(),
        points: n,
    })
}
