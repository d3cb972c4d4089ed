//! The exposure-shift model.
//!
//! For statements with both a fresh (unexposed) mean rating `r` and an
//! exposed mean rating `r'`, the shift is modelled as
//!
//! ```text
//! r' = r + offset + tilt * (r - 3.5)
//! ```
//!
//! i.e. a constant shift plus a pivot around the scale midpoint. Fitting is
//! least squares of `y = r' - r` on `x = r - 3.5` across statements.

use crate::bank::SCALE_MIDPOINT;
use crate::stats::StatsError;

/// Fresh and exposed mean ratings of one statement in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposurePair {
    pub statement: String,
    pub fresh_mean: f64,
    pub exposed_mean: f64,
}

/// Fitted exposure-shift parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetTilt {
    pub offset: f64,
    pub tilt: f64,
}

/// Weighted least squares on `(x = r - midpoint, y = r' - r, w)` points.
/// `None` when fewer than three points carry weight or the x-spread is
/// degenerate.
pub(crate) fn fit_weighted(points: &[(f64, f64, f64)]) -> Option<OffsetTilt> {
    let mut w_total = 0.0;
    let mut n_effective = 0usize;
    let mut x_mean = 0.0;
    let mut y_mean = 0.0;
    for &(x, y, w) in points {
        if w <= 0.0 {
            continue;
        }
        n_effective += 1;
        w_total += w;
        x_mean += w * x;
        y_mean += w * y;
    }
    if n_effective < 3 || w_total <= 0.0 {
        return None;
    }
    x_mean /= w_total;
    y_mean /= w_total;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y, w) in points {
        if w <= 0.0 {
            continue;
        }
        sxx += w * (x - x_mean) * (x - x_mean);
        sxy += w * (x - x_mean) * (y - y_mean);
    }
    if sxx < 1e-10 {
        return None;
    }
    let tilt = sxy / sxx;
    let offset = y_mean - tilt * x_mean;
    Some(OffsetTilt { offset, tilt })
}

/// Fit the exposure-shift model across statements, equally weighted.
pub fn fit_offset_tilt(pairs: &[ExposurePair]) -> Result<OffsetTilt, StatsError> {
    if pairs.len() < 3 {
        return Err(StatsError::InsufficientData {
            detail: format!("{} exposure pairs, need at least 3", pairs.len()),
        });
    }
    let points: Vec<(f64, f64, f64)> = pairs
        .iter()
        .map(|p| {
            (
                p.fresh_mean - SCALE_MIDPOINT,
                p.exposed_mean - p.fresh_mean,
                1.0,
            )
        })
        .collect();
    fit_weighted(&points).ok_or_else(|| StatsError::DegenerateDesign {
        detail: "fresh means have no spread around the midpoint".into(),
    })
}
