//! Log-log slope fitting by ordinary least squares.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub points: usize,
}

/// OLS fit of `y = a + b x`; `stderr` is the usual standard error of `b`.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!("slope fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite("slope fit input".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("all abscissae are equal".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit { slope, intercept, stderr, points: points.len() })
}

/// Fits `log var` against `log p`.
pub fn loglog_fit(ps: &[usize], vars: &[f64]) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = ps.iter().zip(vars).map(|(&p, &v)| ((p as f64).ln(), v.ln())).collect();
    slope_fit(&pts)
}

/// `2^⌈log2 d + 2⌉`, the smallest batch size included in the fit by default.
pub fn default_p_min(d: usize) -> usize {
    let e = ((d as f64).log2() + 2.0).ceil() as u32;
    1usize << e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, -2.0 * i as f64 + 3.0)).collect();
        let f = slope_fit(&pts).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && f.stderr < 1e-7);
    }

    #[test]
    fn flat_and_too_few() {
        let f = slope_fit(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert!(slope_fit(&[(0.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(slope_fit(&[(0.0, 1.0), (1.0, f64::NAN), (2.0, 0.0)]).is_err());
    }

    #[test]
    fn p_min_defaults() {
        assert_eq!(default_p_min(1), 4);
        assert_eq!(default_p_min(2), 8);
        assert_eq!(default_p_min(3), 16);
    }
}
