//! Exact univariate minimum covariance determinant (MCD) estimation.
//!
//! In one dimension the h-subset with the smallest variance is always a run
//! of h consecutive order statistics, so the exact optimum is found by
//! sorting once and sliding a window of h over the sorted sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chi_square_cdf, chi_square_quantile};

/// Dimension of the estimator. Only the univariate case is supported.
pub const DIMENSION: usize = 1;

/// Coverage used when none is given: the half-sample boundary, h = ⌊(n+2)/2⌋.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McdConfig {
    /// Asymptotic coverage h/n, in [0.5, 1].
    pub alpha: f64,
    /// Chi-square quantile level for the consistency factor. `None` uses
    /// `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_level: Option<f64>,
}

impl Default for McdConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            quantile_level: None,
        }
    }
}

impl McdConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            quantile_level: None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobustEstimate {
    pub location: f64,
    /// Sample variance (divisor h − 1) of the optimal subset.
    pub raw_scale: f64,
    pub consistency_factor: f64,
    /// `consistency_factor * raw_scale`.
    pub scaled_scale: f64,
    pub h: usize,
    /// Start of the optimal subset in the sorted sample.
    pub subset_start: usize,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.5..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "alpha must lie in [0.5, 1], got {alpha}"
        )))
    }
}

/// h = max(⌈αn⌉, ⌊(n+p+1)/2⌋), at most n.
pub fn choose_h(n: usize, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    if n < 2 {
        return Err(Error::SeriesTooShort {
            operation: "choose_h",
            required: 2,
            found: n,
        });
    }
    // Guard against αn landing one ulp above an integer.
    let coverage = (alpha * n as f64 - 1e-9).ceil().max(0.0) as usize;
    let lower = (n + DIMENSION).div_ceil(2);
    Ok(coverage.max(lower).min(n))
}

/// Result of the raw subset search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawMcd {
    pub location: f64,
    pub raw_scale: f64,
    pub subset_start: usize,
}

/// Finds the h consecutive order statistics with minimal sample variance.
/// Ties go to the smallest start index in sorted order.
pub fn exact_univariate_mcd(data: &[f64], h: usize) -> Result<RawMcd> {
    if h < 2 {
        return Err(Error::InvalidArgument(format!(
            "h must be at least 2, got {h}"
        )));
    }
    if h > data.len() {
        return Err(Error::InvalidArgument(format!(
            "h = {h} exceeds sample size {}",
            data.len()
        )));
    }
    let mut sorted = data.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(mcd_on_sorted(&sorted, h))
}

/// Same as [`exact_univariate_mcd`] on data that is already sorted ascending.
pub(crate) fn mcd_on_sorted(sorted: &[f64], h: usize) -> RawMcd {
    let n = sorted.len();
    let windows = n - h + 1;
    let hf = h as f64;

    // Sliding sum of squared deviations, re-anchored with an exact two-pass
    // computation every h windows to bound drift.
    let mut ss = vec![0.0; windows];
    let (mut mean, mut m2) = (0.0, 0.0);
    let mut max_m2 = 0.0_f64;
    for i in 0..windows {
        if i % h == 0 {
            (mean, m2) = two_pass(&sorted[i..i + h]);
        } else {
            let out = sorted[i - 1];
            let inc = sorted[i + h - 1];
            let new_mean = mean + (inc - out) / hf;
            m2 += (inc - out) * (inc - new_mean + out - mean);
            mean = new_mean;
            if m2 < 0.0 {
                m2 = 0.0;
            }
        }
        ss[i] = m2;
        max_m2 = max_m2.max(m2);
    }

    let min_ss = ss.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * min_ss + 8.0 * f64::EPSILON * max_m2 * (n as f64).sqrt();
    let start = ss
        .iter()
        .position(|&v| v <= min_ss + tol)
        .expect("at least one window");

    let window = &sorted[start..start + h];
    let (mean, m2) = two_pass(window);
    RawMcd {
        location: mean,
        raw_scale: m2 / (hf - 1.0),
        subset_start: start,
    }
}

/// Mean and sum of squared deviations of a sorted window.
fn two_pass(w: &[f64]) -> (f64, f64) {
    let mean = (w.iter().sum::<f64>() / w.len() as f64).clamp(w[0], w[w.len() - 1]);
    let m2 = w.iter().map(|&v| (v - mean) * (v - mean)).sum();
    (mean, m2)
}

/// c₀ = α / F_{χ²(p+2)}(χ²_{p}(α)), which makes the raw subset variance
/// consistent at the normal model. Returns exactly 1 for α = 1.
pub fn consistency_factor(alpha: f64) -> Result<f64> {
    consistency_factor_at_level(alpha, alpha)
}

/// Consistency factor with the chi-square quantile taken at `level` instead
/// of `alpha`.
pub fn consistency_factor_at_level(alpha: f64, level: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie in (0, 1], got {level}"
        )));
    }
    if level == 1.0 {
        return Ok(alpha);
    }
    let q = chi_square_quantile(level, DIMENSION as u32)?;
    let f = chi_square_cdf(q, DIMENSION as u32 + 2)?;
    Ok(alpha / f)
}

/// Raw MCD on `data`, scaled by the consistency factor for `cfg.alpha`.
pub fn robust_estimate(data: &[f64], cfg: &McdConfig) -> Result<RobustEstimate> {
    let mut sorted = data.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let c0 = factor_for(cfg)?;
    robust_estimate_sorted(&sorted, cfg.alpha, c0)
}

pub(crate) fn factor_for(cfg: &McdConfig) -> Result<f64> {
    consistency_factor_at_level(cfg.alpha, cfg.quantile_level.unwrap_or(cfg.alpha))
}

/// Variant taking a pre-sorted sample and a precomputed consistency factor,
/// used when many windows share one configuration.
pub(crate) fn robust_estimate_sorted(
    sorted: &[f64],
    alpha: f64,
    consistency_factor: f64,
) -> Result<RobustEstimate> {
    let h = choose_h(sorted.len(), alpha)?;
    let raw = mcd_on_sorted(sorted, h);
    Ok(RobustEstimate {
        location: raw.location,
        raw_scale: raw.raw_scale,
        consistency_factor,
        scaled_scale: consistency_factor * raw.raw_scale,
        h,
        subset_start: raw.subset_start,
    })
}
