//! Chi-square quantiles and CDF.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

use crate::error::{Error, Result};

fn chi2(df: usize) -> Result<ChiSquared> {
    if df == 0 {
        return Err(Error::InvalidArgument("chi-square degrees of freedom must be positive".into()));
    }
    ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn chi2_cdf(x: f64, df: usize) -> Result<f64> {
    Ok(chi2(df)?.cdf(x))
}

/// The `prob` quantile of a chi-square with `df` degrees of freedom.
///
/// Starts from the statrs inverse and polishes with Newton steps on the CDF;
/// the relative error is at the level of the CDF's own accuracy.
pub fn chi2_quantile(prob: f64, df: usize) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level {prob} is outside (0, 1)")));
    }
    let dist = chi2(df)?;
    let mut x = dist.inverse_cdf(prob);
    for _ in 0..50 {
        let density = dist.pdf(x);
        if !(density > 0.0) {
            break;
        }
        let step = (dist.cdf(x) - prob) / density;
        let next = (x - step).max(x * 0.5);
        let done = (next - x).abs() <= 1e-15 * x.abs();
        x = next;
        if done {
            break;
        }
    }
    Ok(x)
}

/// Upper-tail critical value `χ²_{df, 1-alpha}`.
pub fn chi2_cv(alpha: f64, df: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} is outside (0, 1)")));
    }
    chi2_quantile(1.0 - alpha, df)
}
