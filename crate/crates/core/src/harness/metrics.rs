//! Image-quality metrics against a ground truth on a different grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ObjectField, ObjectGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub correlation: f64,
    pub rel_l2: f64,
    /// Set when either field is constant and the correlation is undefined (reported as 0).
    pub constant_field: bool,
}

/// Bilinear interpolation of `field` at the points of `target`.
/// Points outside the source extent take the nearest edge value.
pub fn resample_bilinear(field: &ObjectField, target: &ObjectGrid) -> Result<ObjectField> {
    let src = field.grid();
    let rho = field.rho();
    let axis = |v: f64, extent: f64, n: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let u = ((v + 0.5 * extent) / (extent / (n - 1) as f64)).clamp(0.0, (n - 1) as f64);
        let i0 = (u.floor() as usize).min(n - 2);
        (i0, i0 + 1, u - i0 as f64)
    };
    let center = src.center();
    let values = target
        .points()
        .iter()
        .map(|p| {
            let (c0, c1, fx) = axis(p[0] - center[0], src.extent_x(), src.n_x());
            let (r0, r1, fy) = axis(p[1] - center[1], src.extent_y(), src.n_y());
            let at = |r, c| rho[src.index(r, c)];
            (1.0 - fy) * ((1.0 - fx) * at(r0, c0) + fx * at(r0, c1)) + fy * ((1.0 - fx) * at(r1, c0) + fx * at(r1, c1))
        })
        .collect();
    ObjectField::new(target.clone(), values)
}

/// Single-pass Pearson correlation (Welford co-moment update).
/// Returns `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, (&a, &b)) in x.iter().zip(y).enumerate() {
        let n = (k + 1) as f64;
        let (dx, dy) = (a - mx, b - my);
        mx += dx / n;
        my += dy / n;
        sxx += dx * (a - mx);
        syy += dy * (b - my);
        sxy += dx * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `||x - y|| / ||y||`.
pub fn relative_l2(x: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm: f64 = reference.iter().map(|b| b * b).sum();
    if norm == 0.0 {
        diff.sqrt()
    } else {
        (diff / norm).sqrt()
    }
}

/// Correlation and relative error of `rho_hat` against `rho_true` resampled to its grid.
pub fn compute_metrics(rho_hat: &ObjectField, rho_true: &ObjectField) -> Result<MetricsRecord> {
    let truth = resample_bilinear(rho_true, rho_hat.grid())?;
    let (x, y) = (rho_hat.rho(), truth.rho());
    let corr = pearson(x, y);
    let record = MetricsRecord {
        correlation: corr.unwrap_or(0.0),
        rel_l2: relative_l2(x, y),
        constant_field: corr.is_none(),
    };
    if !record.correlation.is_finite() || !record.rel_l2.is_finite() {
        return Err(Error::InvalidParameter("non-finite metrics".into()));
    }
    Ok(record)
}
