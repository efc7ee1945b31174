//! Log-linear rate fitting.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Points below this multiple of their standard error are dropped before fitting.
pub const NOISE_FLOOR_FACTOR: f64 = 10.0;

/// OLS fit of `log y = a + slope·t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% confidence interval for the slope.
    pub ci: (f64, f64),
    /// Number of points kept.
    pub used: usize,
    pub discarded: usize,
}

impl RateFit {
    pub fn ci_excludes_zero(&self) -> bool {
        self.ci.1 < 0.0 || self.ci.0 > 0.0
    }
}

/// Fits `log y` against `t` over `window` (inclusive), discarding points with
/// `y ≤ 10·se` or `y ≤ 0`. Rows are `(t, y, se)`.
pub fn fit_log_rate(rows: &[(f64, f64, f64)], window: Option<(f64, f64)>) -> Result<RateFit> {
    let in_window = |t: f64| window.is_none_or(|(a, b)| t >= a - 1e-12 && t <= b + 1e-12);
    let candidates: Vec<_> = rows.iter().filter(|r| in_window(r.0)).collect();
    let kept: Vec<(f64, f64)> = candidates
        .iter()
        .filter(|(_, y, se)| *y > 0.0 && y.is_finite() && *y > NOISE_FLOOR_FACTOR * se)
        .map(|&&(t, y, _)| (t, y.ln()))
        .collect();
    let discarded = candidates.len() - kept.len();
    let n = kept.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs at least 3 points above the noise floor, got {n}"
        )));
    }
    let nf = n as f64;
    let tbar = kept.iter().map(|p| p.0).sum::<f64>() / nf;
    let ybar = kept.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = kept.iter().map(|p| (p.0 - tbar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument(
            "rate fit needs distinct times".into(),
        ));
    }
    let sxy: f64 = kept.iter().map(|p| (p.0 - tbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * tbar;
    let rss: f64 = kept
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_se = (rss / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(RateFit {
        slope,
        intercept,
        slope_se,
        ci: (slope - t * slope_se, slope + t * slope_se),
        used: n,
        discarded,
    })
}
