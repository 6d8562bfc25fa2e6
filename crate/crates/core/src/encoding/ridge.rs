//! Ridge regression and predictive r².

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>()
    }
}

/// Column means of `x` and the centered copy.
pub(crate) fn center_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = x.nrows() as f64;
    let means = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (centered, means)
}

/// Thin SVD of a centered design, reusable across penalties and targets.
///
/// For `Xc = U S V'` the ridge solution is `w = V diag(s / (s^2 + lambda)) U' yc`.
pub(crate) struct RidgeSolver {
    v: DMatrix<f64>,
    s: DVector<f64>,
    ut: DMatrix<f64>,
}

impl RidgeSolver {
    pub(crate) fn new(centered: DMatrix<f64>) -> Self {
        let p = centered.ncols();
        if centered.nrows() == 0 || p == 0 {
            return RidgeSolver {
                v: DMatrix::zeros(p, 0),
                s: DVector::zeros(0),
                ut: DMatrix::zeros(0, centered.nrows()),
            };
        }
        let svd = centered.svd(true, true);
        RidgeSolver {
            v: svd.v_t.expect("v requested").transpose(),
            s: svd.singular_values,
            ut: svd.u.expect("u requested").transpose(),
        }
    }

    /// `U' Y` for centered targets (one column per voxel).
    pub(crate) fn project(&self, yc: &DMatrix<f64>) -> DMatrix<f64> {
        &self.ut * yc
    }

    pub(crate) fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Scales each row `k` of the projected targets by `s_k / (s_k^2 + lambda)`.
    pub(crate) fn shrink(&self, projected: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let mut out = projected.clone();
        for (k, mut row) in out.row_iter_mut().enumerate() {
            let s = self.s[k];
            row *= s / (s * s + lambda);
        }
        out
    }

    pub(crate) fn weights(&self, projected: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        &self.v * self.shrink(projected, lambda)
    }
}

/// Fits `y ~ X w + b` with penalty `lambda |w|^2` on training-mean-centered data.
pub fn ridge_fit(x: &FeatureMatrix, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    let design = DMatrix::from_row_slice(x.n_images(), x.n_features(), x.values());
    ridge_fit_matrix(&design, y, lambda)
}

pub fn ridge_fit_matrix(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} design rows, {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::InvalidParameter("ridge needs at least 2 samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge input".into()));
    }
    let (xc, x_mean) = center_columns(x);
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DMatrix::from_iterator(y.len(), 1, y.iter().map(|v| v - y_mean));
    let solver = RidgeSolver::new(xc);
    let w = solver.weights(&solver.project(&yc), lambda);
    let weights: Vec<f64> = w.column(0).iter().copied().collect();
    let intercept = y_mean - x_mean.iter().zip(&weights).map(|(m, w)| m * w).sum::<f64>();
    Ok(RidgeFit {
        weights,
        intercept,
        lambda,
    })
}

/// `1 - SS_res / SS_base` with `SS_base` measured around `baseline`
/// (the training-set mean), so the score can be negative.
pub fn r2_score(y_true: &[f64], y_pred: &[f64], baseline: f64) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "r2 needs equal non-empty inputs, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).powi(2)).sum();
    let ss_base: f64 = y_true.iter().map(|t| (t - baseline).powi(2)).sum();
    if ss_base == 0.0 {
        return Err(Error::DegenerateTarget);
    }
    Ok(1.0 - ss_res / ss_base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_examples() {
        assert_eq!(r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 2.0).unwrap(), 1.0);
        assert_eq!(r2_score(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0], 2.0).unwrap(), 0.0);
        assert_eq!(r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0], 2.0).unwrap(), -1.0);
        assert_eq!(
            r2_score(&[2.0, 2.0], &[1.0, 3.0], 2.0),
            Err(Error::DegenerateTarget)
        );
        assert!(r2_score(&[], &[], 0.0).is_err());
    }

    #[test]
    fn interpolates_exact_linear_target() {
        let x = DMatrix::from_fn(12, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 + 0.1 * (i * j) as f64);
        let y: Vec<f64> = (0..12)
            .map(|i| 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * x[(i, 2)] + 3.0)
            .collect();
        let fit = ridge_fit_matrix(&x, &y, 1e-10).unwrap();
        for i in 0..12 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            assert!((fit.predict(&row) - y[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn heavy_shrinkage_predicts_mean() {
        let x = DMatrix::from_fn(8, 2, |i, j| (i + 2 * j) as f64 * 0.3 + (i % 3) as f64);
        let y: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let fit = ridge_fit_matrix(&x, &y, 1e12).unwrap();
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-9));
        let row: Vec<f64> = x.row(0).iter().copied().collect();
        assert!((fit.predict(&row) - 3.5).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DMatrix::from_element(3, 2, 1.0);
        assert!(ridge_fit_matrix(&x, &[1.0, 2.0, 3.0], 0.0).is_err());
        assert!(ridge_fit_matrix(&x, &[1.0, f64::NAN, 3.0], 1.0).is_err());
        assert!(ridge_fit_matrix(&x, &[1.0, 2.0], 1.0).is_err());
    }
}
