//! Log-log power-law fits, bulk window selection, scaling reports and the
//! edge-burst detector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 6;
/// Cells closest to the pump that are excluded from bulk fits.
pub const NEAR_PUMP_EXCLUSION: usize = 5;
/// First cell eligible for bulk fits.
pub const EDGE_EXCLUSION: usize = 10;
pub const EDGE_BURST_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Decay exponent, positive for decaying data.
    pub exponent: f64,
    /// Natural-log intercept: `ln value = intercept - exponent ln distance`.
    pub intercept: f64,
    /// Inclusive range of the fitted abscissa labels (cells or pump positions).
    pub window: (usize, usize),
    pub r_squared: f64,
    /// Standard error of the exponent.
    pub stderr: f64,
    pub points: usize,
}

impl ScalingFit {
    pub fn predict(&self, distance: f64) -> f64 {
        (self.intercept - self.exponent * distance.ln()).exp()
    }
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints { needed: MIN_FIT_POINTS, got: points.len() });
    }
    for &(d, v) in points {
        if !(d > 0.0) || !(v > 0.0) || !d.is_finite() || !v.is_finite() {
            return Err(Error::NonPositiveValue { distance: d, value: v });
        }
    }
    Ok(())
}

fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> (f64, f64, f64, f64) {
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).zip(ws).map(|((x, y), w)| w * (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    let n = xs.len() as f64;
    let stderr = if n > 2.0 { (ss_res / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, intercept, r2, stderr)
}

fn fit(points: &[(f64, f64)], weights: Option<Vec<f64>>) -> Result<ScalingFit> {
    check_points(points)?;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let ws = weights.unwrap_or_else(|| vec![1.0; points.len()]);
    let (slope, intercept, r_squared, stderr) = weighted_line(&xs, &ys, &ws);
    Ok(ScalingFit {
        exponent: -slope,
        intercept,
        window: (0, points.len() - 1),
        r_squared,
        stderr,
        points: points.len(),
    })
}

/// Unweighted least squares on `(ln distance, ln value)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<ScalingFit> {
    fit(points, None)
}

/// Inverse-variance weighted fit; `sigma[i]` is the standard error of the
/// i-th value, so `ln value` has variance `(sigma / value)^2`.
pub fn fit_power_law_weighted(points: &[(f64, f64)], sigma: &[f64]) -> Result<ScalingFit> {
    if sigma.len() != points.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: sigma.len() });
    }
    check_points(points)?;
    let w = points
        .iter()
        .zip(sigma)
        .map(|(p, s)| {
            let rel = s / p.1;
            if rel > 0.0 && rel.is_finite() {
                1.0 / (rel * rel)
            } else {
                1.0
            }
        })
        .collect();
    fit(points, Some(w))
}

/// Cells `[x_min, x0 - 5]` left of the pump (1-based, inclusive). `x_min`
/// starts at 10 and rises until the values strictly increase towards the
/// pump over the whole window.
pub fn select_bulk_window(profile: &[f64], x0: usize) -> Result<(usize, usize)> {
    let too_small = |got: usize| Error::WindowTooSmall { needed: MIN_FIT_POINTS, got };
    if x0 <= NEAR_PUMP_EXCLUSION || x0 > profile.len() {
        return Err(too_small(0));
    }
    let hi = x0 - NEAR_PUMP_EXCLUSION;
    let mut lo = EDGE_EXCLUSION;
    let count = |lo: usize| if hi >= lo { hi - lo + 1 } else { 0 };
    if count(lo) < MIN_FIT_POINTS {
        return Err(too_small(count(lo)));
    }
    let v = |x: usize| profile[x - 1];
    // Largest x in [lo, hi) where monotonicity toward the pump breaks.
    let last_break = (lo..hi).rev().find(|&x| !(v(x) > 0.0 && v(x + 1) > v(x)));
    if let Some(x) = last_break {
        lo = x + 1;
    }
    if count(lo) < MIN_FIT_POINTS {
        return Err(too_small(count(lo)));
    }
    Ok((lo, hi))
}

/// Bulk fit of a per-cell profile against distance to the pump.
pub fn fit_bulk(profile: &[f64], x0: usize, stderr: Option<&[f64]>) -> Result<ScalingFit> {
    let (lo, hi) = select_bulk_window(profile, x0)?;
    let points: Vec<(f64, f64)> = (lo..=hi).map(|x| ((x0 - x) as f64, profile[x - 1])).collect();
    let mut f = match stderr {
        Some(s) => fit_power_law_weighted(&points, &s[lo - 1..hi])?,
        None => fit_power_law(&points)?,
    };
    f.window = (lo, hi);
    Ok(f)
}

/// Fit of the first-cell value against `x0 - 1` over a pump sweep.
pub fn fit_edge(series: &[(usize, f64)], stderr: Option<&[f64]>) -> Result<ScalingFit> {
    let points: Vec<(f64, f64)> = series.iter().map(|&(x0, v)| (x0 as f64 - 1.0, v)).collect();
    let mut f = match stderr {
        Some(s) => fit_power_law_weighted(&points, s)?,
        None => fit_power_law(&points)?,
    };
    f.window = (series.iter().map(|s| s.0).min().unwrap_or(0), series.iter().map(|s| s.0).max().unwrap_or(0));
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBurst {
    pub fires: bool,
    /// `value(1) / value(2)`.
    pub neighbour_ratio: f64,
    /// `value(1)` over the bulk power law extrapolated to cell 1.
    pub extrapolation_ratio: f64,
}

/// Fires iff `value(1) > value(2)` and `value(1)` is at least three times the
/// bulk power law extrapolated to cell 1. Without a usable bulk window the
/// extrapolation ratio is NaN and the detector does not fire.
pub fn edge_burst(profile: &[f64], x0: usize) -> EdgeBurst {
    let neighbour_ratio = if profile.len() >= 2 { profile[0] / profile[1] } else { f64::NAN };
    let extrapolation_ratio = match fit_bulk(profile, x0, None) {
        Ok(f) if x0 > 1 => profile[0] / f.predict((x0 - 1) as f64),
        _ => f64::NAN,
    };
    EdgeBurst {
        fires: neighbour_ratio > 1.0 && extrapolation_ratio >= EDGE_BURST_FACTOR,
        neighbour_ratio,
        extrapolation_ratio,
    }
}

/// One profile of a pump sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepProfile {
    pub x0: usize,
    pub values: Vec<f64>,
    #[serde(default)]
    pub stderr: Option<Vec<f64>>,
}

/// `sum_x value^power` expected to equal `expected` within `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRule {
    pub name: String,
    pub power: i32,
    pub expected: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub expected: f64,
    /// Sum with the largest deviation across the sweep.
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkEntry {
    pub x0: usize,
    pub fit: ScalingFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    /// Median of the per-pump bulk exponents.
    pub alpha_b: f64,
    pub alpha_e: f64,
    pub difference: f64,
    pub bulk_fits: Vec<BulkEntry>,
    /// Pump positions whose bulk window was too small.
    pub skipped: Vec<usize>,
    pub edge_fit: ScalingFit,
    pub edge_series: Vec<(usize, f64)>,
    pub constraint_checks: Vec<ConstraintCheck>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Bulk exponent (median over pumps), edge exponent (fit of the first-cell
/// series) and sum-rule checks for a pump sweep.
pub fn scaling_report(runs: &[SweepProfile], rules: &[SumRule]) -> Result<ScalingReport> {
    let mut bulk_fits = Vec::new();
    let mut skipped = Vec::new();
    for r in runs {
        match fit_bulk(&r.values, r.x0, r.stderr.as_deref()) {
            Ok(fit) => bulk_fits.push(BulkEntry { x0: r.x0, fit }),
            Err(Error::WindowTooSmall { .. }) => skipped.push(r.x0),
            Err(e) => return Err(e),
        }
    }
    if bulk_fits.is_empty() {
        return Err(Error::WindowTooSmall { needed: MIN_FIT_POINTS, got: 0 });
    }
    let alpha_b = median(&bulk_fits.iter().map(|b| b.fit.exponent).collect::<Vec<_>>());
    let edge_series: Vec<(usize, f64)> = runs.iter().map(|r| (r.x0, r.values[0])).collect();
    let edge_err: Option<Vec<f64>> = runs.iter().map(|r| r.stderr.as_ref().map(|s| s[0])).collect();
    let edge_fit = fit_edge(&edge_series, edge_err.as_deref())?;
    let constraint_checks = rules
        .iter()
        .map(|rule| {
            let worst = runs.iter().map(|r| r.values.iter().map(|v| v.powi(rule.power)).sum::<f64>()).fold(
                rule.expected,
                |w, s| {
                    if (s - rule.expected).abs() > (w - rule.expected).abs() {
                        s
                    } else {
                        w
                    }
                },
            );
            ConstraintCheck {
                name: rule.name.clone(),
                expected: rule.expected,
                worst,
                tolerance: rule.tolerance,
                pass: (worst - rule.expected).abs() <= rule.tolerance,
            }
        })
        .collect();
    Ok(ScalingReport {
        alpha_b,
        alpha_e: edge_fit.exponent,
        difference: alpha_b - edge_fit.exponent,
        bulk_fits,
        skipped,
        edge_fit,
        edge_series,
        constraint_checks,
    })
}
