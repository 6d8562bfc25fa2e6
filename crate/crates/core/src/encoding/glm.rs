//! One-regressor-per-image GLM on BOLD time courses.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

use super::VoxelResponses;
use crate::error::{Error, Result};

/// Double-gamma hemodynamic response: a gamma density with shape `peak`
/// minus `ratio` times one with shape `undershoot`, both with unit time scale
/// (seconds). Defaults are the SPM canonical 6 / 16 / 1:6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hrf {
    pub peak: f64,
    pub undershoot: f64,
    pub ratio: f64,
}

impl Default for Hrf {
    fn default() -> Self {
        Hrf {
            peak: 6.0,
            undershoot: 16.0,
            ratio: 1.0 / 6.0,
        }
    }
}

impl Hrf {
    fn lobes(&self) -> (Gamma, Gamma) {
        (
            Gamma::new(self.peak, 1.0).expect("positive shape"),
            Gamma::new(self.undershoot, 1.0).expect("positive shape"),
        )
    }

    /// Response to a unit impulse at `t = 0`.
    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (a, b) = self.lobes();
        a.pdf(t) - self.ratio * b.pdf(t)
    }

    /// `int_0^t h(s) ds`
    pub fn integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (a, b) = self.lobes();
        a.cdf(t) - self.ratio * b.cdf(t)
    }

    /// Response at time `t` to a unit boxcar starting at 0 lasting `duration`
    /// seconds; a zero duration is an impulse.
    pub fn boxcar_response(&self, t: f64, duration: f64) -> f64 {
        if duration <= 0.0 {
            self.value(t)
        } else {
            self.integral(t) - self.integral(t - duration)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Onset {
    pub image_id: String,
    /// Seconds from the first scan.
    pub time: f64,
}

/// Time courses, one row per scan and one column per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct Bold {
    pub voxel_ids: Vec<String>,
    pub scans: DMatrix<f64>,
}

/// Design matrix with one column per distinct image (first-appearance order)
/// plus a trailing intercept column.
pub fn design_matrix(
    n_scans: usize,
    onsets: &[Onset],
    tr: f64,
    duration: f64,
    hrf: &Hrf,
) -> (Vec<String>, DMatrix<f64>) {
    let mut images: Vec<String> = Vec::new();
    for o in onsets {
        if !images.contains(&o.image_id) {
            images.push(o.image_id.clone());
        }
    }
    let mut x = DMatrix::zeros(n_scans, images.len() + 1);
    for o in onsets {
        let col = images.iter().position(|id| *id == o.image_id).unwrap();
        for k in 0..n_scans {
            x[(k, col)] += hrf.boxcar_response(k as f64 * tr - o.time, duration);
        }
    }
    x.column_mut(images.len()).fill(1.0);
    (images, x)
}

/// Relative singular-value floor for declaring the design rank-deficient.
const RANK_TOL: f64 = 1e-10;

/// OLS betas per image and voxel. Repeated presentations of an image share
/// one regressor.
pub fn fit_glm_betas(
    bold: &Bold,
    onsets: &[Onset],
    tr: f64,
    duration: f64,
    hrf: &Hrf,
) -> Result<VoxelResponses> {
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::InvalidParameter(format!("tr must be positive, got {tr}")));
    }
    if bold.scans.ncols() != bold.voxel_ids.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} voxel columns, {} voxel ids",
            bold.scans.ncols(),
            bold.voxel_ids.len()
        )));
    }
    if bold.scans.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("BOLD time course".into()));
    }
    let n_scans = bold.scans.nrows();
    let span = n_scans as f64 * tr;
    if let Some(o) = onsets
        .iter()
        .find(|o| !(o.time.is_finite() && o.time >= 0.0 && o.time < span))
    {
        return Err(Error::InvalidParameter(format!(
            "onset {} of image '{}' outside scan duration {span}",
            o.time, o.image_id
        )));
    }
    let (images, x) = design_matrix(n_scans, onsets, tr, duration, hrf);
    let mut names = images.clone();
    names.push("intercept".into());

    let svd = x.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let v = svd.v_t.as_ref().expect("v requested").transpose();
    let deficient: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= RANK_TOL * s_max)
        .collect();
    if x.nrows() < x.ncols() || !deficient.is_empty() {
        let mut involved: Vec<String> = Vec::new();
        if deficient.is_empty() {
            involved = names.clone();
        }
        for &k in &deficient {
            for (i, name) in names.iter().enumerate() {
                if v[(i, k)].abs() > 1e-6 && !involved.contains(name) {
                    involved.push(name.clone());
                }
            }
        }
        return Err(Error::RankDeficient(involved));
    }
    let betas = svd
        .solve(&bold.scans, 0.0)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let n_images = images.len();
    let mut values = Vec::with_capacity(n_images * bold.voxel_ids.len());
    for i in 0..n_images {
        values.extend(betas.row(i).iter().copied());
    }
    VoxelResponses::new(images, bold.voxel_ids.clone(), values)
}
