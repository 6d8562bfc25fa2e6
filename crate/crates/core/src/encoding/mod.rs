//! Voxelwise linear encoding models.
//!
//! Activity per image comes either from a GLM fit on BOLD time courses
//! ([`glm`]) or directly from a generator. Each voxel is regressed on the
//! scattering features with ridge ([`ridge`]) under nested
//! leave-one-session-out cross-validation ([`cv`]), and two feature sets are
//! compared voxel by voxel ([`compare`], [`wilcoxon`]).

pub mod compare;
pub mod cv;
pub mod glm;
pub mod ridge;
pub mod wilcoxon;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use compare::{compare_models, ComparisonMap, Label, ScatterPoint, VoxelScores};
pub use cv::{
    default_lambda_grid, loso_cv, nested_cv_encode, fit_on_rows, CvResult, CvOptions,
    FoldModel, LambdaSelection, Standardizer,
};
pub use glm::{fit_glm_betas, Bold, Hrf, Onset};
pub use ridge::{r2_score, ridge_fit, RidgeFit};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

/// Activity per image (rows) and voxel (columns), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelResponses {
    image_ids: Vec<String>,
    voxel_ids: Vec<String>,
    values: Vec<f64>,
}

impl VoxelResponses {
    pub fn new(image_ids: Vec<String>, voxel_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != image_ids.len() * voxel_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} images x {} voxels",
                values.len(),
                image_ids.len(),
                voxel_ids.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let n = voxel_ids.len();
            return Err(Error::NonFinite(format!(
                "response for image {} voxel {}",
                image_ids[i / n],
                voxel_ids[i % n]
            )));
        }
        Ok(VoxelResponses {
            image_ids,
            voxel_ids,
            values,
        })
    }

    pub fn n_images(&self) -> usize {
        self.image_ids.len()
    }

    pub fn n_voxels(&self) -> usize {
        self.voxel_ids.len()
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn voxel_ids(&self) -> &[String] {
        &self.voxel_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, image: usize, voxel: usize) -> f64 {
        self.values[image * self.n_voxels() + voxel]
    }

    pub fn voxel(&self, v: usize) -> Vec<f64> {
        (0..self.n_images()).map(|i| self.get(i, v)).collect()
    }

    /// Keeps the listed voxel columns in the given order.
    pub fn select_voxels(&self, columns: &[usize]) -> VoxelResponses {
        let mut values = Vec::with_capacity(columns.len() * self.n_images());
        for i in 0..self.n_images() {
            values.extend(columns.iter().map(|&v| self.get(i, v)));
        }
        VoxelResponses {
            image_ids: self.image_ids.clone(),
            voxel_ids: columns.iter().map(|&v| self.voxel_ids[v].clone()).collect(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub image_id: String,
    pub session: u32,
    pub block: u32,
}

/// Acquisition session and block per image.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionLabels {
    entries: Vec<SessionEntry>,
}

impl SessionLabels {
    pub fn new(entries: Vec<SessionEntry>) -> Result<Self> {
        let mut seen = HashMap::new();
        for e in &entries {
            if seen.insert(e.image_id.as_str(), ()).is_some() {
                return Err(Error::MisalignedIds(format!(
                    "image '{}' has more than one session label",
                    e.image_id
                )));
            }
        }
        Ok(SessionLabels { entries })
    }

    pub fn entries(&self) -> &[SessionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct session ids, ascending.
    pub fn sessions(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.entries.iter().map(|e| e.session).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn lookup(&self) -> HashMap<&str, &SessionEntry> {
        self.entries
            .iter()
            .map(|e| (e.image_id.as_str(), e))
            .collect()
    }
}

/// Row positions in `target` for each id in `order`.
pub(crate) fn align(order: &[String], target: &[String], what: &str) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = target
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    order
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::MisalignedIds(format!("image '{id}' missing from {what}")))
        })
        .collect()
}
