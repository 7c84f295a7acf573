//! Composite controller-performance cost.
//!
//! Three normalized terms computed on one exposed vector, combined by the
//! Euclidean norm:
//!
//! * `mse_prime`  — squared tracking error of the emission, summed over the
//!   second half of the vector only (so the rise transient does not bias the
//!   tracking term), divided by `N · c_mse`.
//! * `rise_prime` — 1-based index of the first sample inside the ±5% band
//!   around the reference, divided by `N`; 1.0 when the band is never
//!   reached.
//! * `sigma_prime` — RMS deviation of the power command around its rolling
//!   mean (window 100, truncated at the tail), divided by `c_sigma`; this
//!   isolates controller-induced oscillation from the slow power trend.

use serde::{Deserialize, Serialize};

use crate::closedloop::Trace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub c_mse: f64,
    pub c_sigma: f64,
    pub window_w: usize,
    /// Half-width of the reference band as a fraction of the reference.
    pub band: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            c_mse: 500.0,
            c_sigma: 150.0,
            window_w: 100,
            band: 0.05,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_mse <= 0.0 || self.c_sigma <= 0.0 || self.band <= 0.0 || self.band.is_nan() {
            return Err(Error::config(
                "cost constants c_mse, c_sigma and band must be positive",
            ));
        }
        if self.window_w == 0 {
            return Err(Error::config("rolling-mean window must be at least 1"));
        }
        Ok(())
    }
}

/// The three normalized error terms and their Euclidean combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub mse_prime: f64,
    pub rise_prime: f64,
    pub sigma_prime: f64,
    pub total: f64,
    /// 1-based index of the first in-band sample, if the band was reached.
    pub rise_index: Option<usize>,
}

impl CostBreakdown {
    /// Wraps a scalar objective value for synthetic benchmarks.
    pub fn from_total(total: f64) -> Self {
        CostBreakdown {
            mse_prime: 0.0,
            rise_prime: 0.0,
            sigma_prime: 0.0,
            total,
            rise_index: None,
        }
    }
}

/// Normalized mean squared tracking error over the second half of the
/// vector. The sum runs from ceil(N/2) (0-based) to N-1; the denominator
/// uses the full N.
pub fn mse_prime(trace: &Trace, cfg: &CostConfig) -> Result<f64> {
    cfg.validate()?;
    let n = trace.len();
    if n == 0 {
        return Err(Error::config("cannot compute cost of an empty trace"));
    }
    let start = n.div_ceil(2);
    let reference = trace.reference_mv;
    let sum: f64 = trace.y_mv[start..]
        .iter()
        .map(|&y| (y - reference) * (y - reference))
        .sum();
    Ok(sum / (n as f64 * cfg.c_mse))
}

/// Normalized rise time and the 1-based index of the first sample within
/// the reference band; (1.0, None) when the band is never reached.
pub fn rise_prime(trace: &Trace, cfg: &CostConfig) -> Result<(f64, Option<usize>)> {
    cfg.validate()?;
    let n = trace.len();
    if n == 0 {
        return Err(Error::config("cannot compute cost of an empty trace"));
    }
    let reference = trace.reference_mv;
    let tolerance = cfg.band * reference;
    for (i, &y) in trace.y_mv.iter().enumerate() {
        if (y - reference).abs() <= tolerance {
            let k = i + 1;
            return Ok((k as f64 / n as f64, Some(k)));
        }
    }
    Ok((1.0, None))
}

/// Rolling mean with a forward window of `w` samples, truncated to the
/// available tail near the end of the sequence.
pub fn rolling_mean(u: &[f64], w: usize) -> Result<Vec<f64>> {
    if w == 0 {
        return Err(Error::config("rolling-mean window must be at least 1"));
    }
    let n = u.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let end = (i + w).min(n);
        let len = (end - i) as f64;
        let sum: f64 = u[i..end].iter().sum();
        out.push(sum / len);
    }
    Ok(out)
}

/// Normalized standard deviation of the power command around its rolling
/// mean.
pub fn sigma_prime(u: &[f64], cfg: &CostConfig) -> Result<f64> {
    cfg.validate()?;
    if u.is_empty() {
        return Err(Error::config("cannot compute cost of an empty trace"));
    }
    let mu = rolling_mean(u, cfg.window_w)?;
    let n = u.len() as f64;
    let sum: f64 = u
        .iter()
        .zip(&mu)
        .map(|(&ui, &mi)| (ui - mi) * (ui - mi))
        .sum();
    Ok((sum / n).sqrt() / cfg.c_sigma)
}

/// All three terms on the same trace, combined by the Euclidean norm.
pub fn composite_cost(trace: &Trace, cfg: &CostConfig) -> Result<CostBreakdown> {
    let mse = mse_prime(trace, cfg)?;
    let (rise, rise_index) = rise_prime(trace, cfg)?;
    let sigma = sigma_prime(&trace.u_w, cfg)?;
    let total = (mse * mse + rise * rise + sigma * sigma).sqrt();
    Ok(CostBreakdown {
        mse_prime: mse,
        rise_prime: rise,
        sigma_prime: sigma,
        total,
        rise_index,
    })
}
