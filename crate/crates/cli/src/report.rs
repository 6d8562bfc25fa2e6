//! Run summary assembled from whatever artifacts a run produced.

use std::collections::HashMap;

use scatvox::decoding::DecodeResult;
use scatvox::encoding::{wilcoxon_signed_rank, ComparisonMap, CvResult, Label, WilcoxonResult};
use scatvox::synth::GroundTruth;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default)]
pub struct ReportInputs<'a> {
    pub seed: Option<u64>,
    /// Baseline model (M=1 in the study) and its name.
    pub model_a: Option<(&'a str, &'a CvResult)>,
    pub model_b: Option<(&'a str, &'a CvResult)>,
    pub comparison: Option<&'a ComparisonMap>,
    pub decode: Option<&'a DecodeResult>,
    pub truth: Option<&'a GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub n_voxels: usize,
    pub mean_r2: f64,
}

/// A test outcome or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub n_voxels: usize,
    pub result: Option<WilcoxonResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub red: usize,
    pub blue: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: String,
    pub counts: Counts,
    pub mean_delta: f64,
    /// Model B against model A over this kind's voxels.
    pub wilcoxon: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeSummary {
    pub held_out: Vec<u32>,
    pub fold_accuracy: Vec<Option<f64>>,
    pub mean_accuracy: f64,
    pub chance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    pub timestamp: u64,
    pub seed: Option<u64>,
    pub models: Vec<ModelSummary>,
    pub threshold: Option<f64>,
    pub counts: Option<Counts>,
    /// Model B against model A on the scatterplot (top-k) voxels.
    pub wilcoxon_top_k: Option<TestOutcome>,
    pub plant_kinds: Option<Vec<KindSummary>>,
    pub decode: Option<DecodeSummary>,
    /// Sections left empty because their artifacts were not produced.
    pub missing: Vec<String>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn test(b: &[f64], a: &[f64]) -> TestOutcome {
    match wilcoxon_signed_rank(b, a) {
        Ok(r) => TestOutcome { n_voxels: a.len(), result: Some(r), error: None },
        Err(e) => TestOutcome { n_voxels: a.len(), result: None, error: Some(e.to_string()) },
    }
}

fn counts(labels: impl Iterator<Item = Label>) -> Counts {
    let mut c = Counts { red: 0, blue: 0, unlabeled: 0 };
    for l in labels {
        match l {
            Label::Red => c.red += 1,
            Label::Blue => c.blue += 1,
            Label::Unlabeled => c.unlabeled += 1,
        }
    }
    c
}

pub fn write_report(inputs: &ReportInputs, timestamp: u64) -> Summary {
    let mut missing = Vec::new();
    let models: Vec<ModelSummary> = [inputs.model_a, inputs.model_b]
        .into_iter()
        .flatten()
        .map(|(name, cv)| ModelSummary {
            name: name.to_string(),
            n_voxels: cv.voxel_ids.len(),
            mean_r2: mean(&cv.mean_r2),
        })
        .collect();
    if models.len() < 2 {
        missing.push("models".to_string());
    }

    let paired = match (inputs.comparison, inputs.model_a, inputs.model_b) {
        (Some(m), Some((_, a)), Some((_, b))) if a.voxel_ids == m.voxel_ids && b.voxel_ids == m.voxel_ids => Some((m, a, b)),
        _ => None,
    };
    let (threshold, counts_all, top_k) = match paired {
        Some((m, _, _)) => {
            let (a, b): (Vec<f64>, Vec<f64>) = m.scatter.iter().map(|p| (p.r2_a, p.r2_b)).unzip();
            (Some(m.threshold), Some(counts(m.labels.iter().copied())), Some(test(&b, &a)))
        }
        None => {
            missing.push("comparison".to_string());
            (None, None, None)
        }
    };

    let plant_kinds = match (paired, inputs.truth) {
        (Some((m, a, b)), Some(truth)) => {
            let index: HashMap<&str, usize> = m.voxel_ids.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
            let mut kinds = Vec::new();
            for kind in scatvox::synth::PlantKind::ALL {
                let idx: Vec<usize> = truth
                    .voxels
                    .iter()
                    .filter(|v| v.kind == kind)
                    .filter_map(|v| index.get(v.voxel_id.as_str()).copied())
                    .collect();
                if idx.is_empty() {
                    continue;
                }
                let ra: Vec<f64> = idx.iter().map(|&i| a.mean_r2[i]).collect();
                let rb: Vec<f64> = idx.iter().map(|&i| b.mean_r2[i]).collect();
                kinds.push(KindSummary {
                    kind: kind.as_str().to_string(),
                    counts: counts(idx.iter().map(|&i| m.labels[i])),
                    mean_delta: mean(&idx.iter().map(|&i| m.delta[i]).collect::<Vec<_>>()),
                    wilcoxon: test(&rb, &ra),
                });
            }
            Some(kinds)
        }
        _ => {
            missing.push("plant_kinds".to_string());
            None
        }
    };

    let decode = match inputs.decode {
        Some(d) => Some(DecodeSummary {
            held_out: d.folds.iter().map(|f| f.held_out).collect(),
            fold_accuracy: d.folds.iter().map(|f| f.accuracy).collect(),
            mean_accuracy: d.mean_accuracy,
            chance: d.chance,
        }),
        None => {
            missing.push("decode".to_string());
            None
        }
    };

    Summary {
        timestamp,
        seed: inputs.seed,
        models,
        threshold,
        counts: counts_all,
        wilcoxon_top_k: top_k,
        plant_kinds,
        decode,
        missing,
    }
}
