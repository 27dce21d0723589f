//! Least-squares line fits for convergence and virial reports.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 when the data are exactly linear or
    /// constant.
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a line fit needs at least two paired samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("a line fit needs finite samples".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("a line fit needs two distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Slope of `log(err)` against `log(h)`.
pub fn fit_loglog_slope(hs: &[f64], errs: &[f64]) -> Result<f64> {
    if hs.iter().chain(errs).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("log-log fits need positive spacings and errors".into()));
    }
    let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    Ok(linear_fit(&lx, &ly)?.slope)
}

/// Leading samples up to the last one still at or above half the initial
/// value.
pub fn first_half_of_decay(ts: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let Some(&y0) = ys.first() else {
        return (Vec::new(), Vec::new());
    };
    let k = ys.iter().take_while(|&&y| y >= 0.5 * y0).count();
    (ts[..k].to_vec(), ys[..k].to_vec())
}
