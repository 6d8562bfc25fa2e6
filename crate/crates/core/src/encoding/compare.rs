//! Voxelwise comparison of two encoding models.

use serde::{Deserialize, Serialize};

use super::cv::CvResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    /// Gain above the threshold.
    Red,
    /// No gain or a loss.
    Blue,
    Unlabeled,
}

impl Label {
    pub fn classify(delta: f64, threshold: f64) -> Label {
        if delta > threshold {
            Label::Red
        } else if delta <= 0.0 {
            Label::Blue
        } else {
            Label::Unlabeled
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Red => "red",
            Label::Blue => "blue",
            Label::Unlabeled => "unlabeled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelScores {
    pub voxel_ids: Vec<String>,
    pub r2: Vec<f64>,
}

impl From<&CvResult> for VoxelScores {
    fn from(cv: &CvResult) -> Self {
        VoxelScores {
            voxel_ids: cv.voxel_ids.clone(),
            r2: cv.mean_r2.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub voxel_id: String,
    pub r2_a: f64,
    pub r2_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMap {
    pub voxel_ids: Vec<String>,
    /// `r2_b - r2_a`
    pub delta: Vec<f64>,
    pub labels: Vec<Label>,
    pub threshold: f64,
    /// Best `top_k` voxels by model A's score, descending.
    pub scatter: Vec<ScatterPoint>,
}

impl ComparisonMap {
    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Labels each voxel by the gain of model B over model A and collects the
/// scatterplot table of the `top_k` voxels best explained by model A.
pub fn compare_models(
    a: &VoxelScores,
    b: &VoxelScores,
    threshold: f64,
    top_k: usize,
) -> Result<ComparisonMap> {
    if a.voxel_ids != b.voxel_ids {
        return Err(Error::MisalignedIds(
            "the two score sets list different voxels".into(),
        ));
    }
    if a.r2.len() != a.voxel_ids.len() || b.r2.len() != b.voxel_ids.len() {
        return Err(Error::ShapeMismatch("score and id counts differ".into()));
    }
    let delta: Vec<f64> = a.r2.iter().zip(&b.r2).map(|(x, y)| y - x).collect();
    let labels = delta.iter().map(|&d| Label::classify(d, threshold)).collect();

    let mut order: Vec<usize> = (0..a.r2.len()).collect();
    // descending, NaN last, stable on ties
    order.sort_by(|&i, &j| match (a.r2[i].is_nan(), a.r2[j].is_nan()) {
        (false, false) => a.r2[j].total_cmp(&a.r2[i]),
        (x, y) => x.cmp(&y),
    });
    let scatter = order
        .into_iter()
        .take(top_k)
        .map(|i| ScatterPoint {
            voxel_id: a.voxel_ids[i].clone(),
            r2_a: a.r2[i],
            r2_b: b.r2[i],
        })
        .collect();
    Ok(ComparisonMap {
        voxel_ids: a.voxel_ids.clone(),
        delta,
        labels,
        threshold,
        scatter,
    })
}
