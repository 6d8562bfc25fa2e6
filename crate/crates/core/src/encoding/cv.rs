//! Nested leave-one-session-out cross-validation for voxelwise ridge.
//!
//! The outer loop holds out one session at a time. On the remaining sessions
//! an inner leave-one-session-out loop scores every penalty in the grid; the
//! best one (highest mean inner r², ties to the smaller penalty) is refit on
//! all outer-training sessions and scored on the held-out session. Features
//! are z-scored with statistics of whichever rows a model is fit on.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ridge::{center_columns, r2_score, RidgeSolver};
use super::{align, SessionLabels, VoxelResponses};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Scope of the penalty choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSelection {
    /// Each voxel gets its own penalty.
    #[default]
    PerVoxel,
    /// One penalty per fold, maximizing the inner score averaged over voxels.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub lambda_grid: Vec<f64>,
    pub selection: LambdaSelection,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            lambda_grid: default_lambda_grid(),
            selection: LambdaSelection::PerVoxel,
        }
    }
}

/// Ten penalties log-spaced from 1e-3 to 1e5.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..10)
        .map(|k| 10f64.powf(-3.0 + 8.0 * k as f64 / 9.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub voxel_ids: Vec<String>,
    /// Held-out session of each outer fold, in fold order.
    pub sessions: Vec<u32>,
    pub lambda_grid: Vec<f64>,
    pub selection: LambdaSelection,
    /// `fold_r2[fold][voxel]`
    pub fold_r2: Vec<Vec<f64>>,
    /// `fold_lambda[fold][voxel]`
    pub fold_lambda: Vec<Vec<f64>>,
    /// Arithmetic mean of the outer-fold scores per voxel.
    pub mean_r2: Vec<f64>,
}

/// Z-scoring statistics. Constant columns get scale 0 and drop out.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub inv_scale: Vec<f64>,
}

/// Columns whose spread is below this (relative to their magnitude) are treated as constant.
const CONSTANT_COLUMN_TOL: f64 = 1e-12;

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>, rows: &[usize]) -> Standardizer {
        let n = rows.len() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut inv_scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (col[i] - m).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(m);
            inv_scale.push(if sd <= CONSTANT_COLUMN_TOL * m.abs().max(1.0) {
                0.0
            } else {
                1.0 / sd
            });
        }
        Standardizer { mean, inv_scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), x.ncols(), |r, c| {
            (x[(rows[r], c)] - self.mean[c]) * self.inv_scale[c]
        })
    }
}

/// A ridge model fit on one set of rows, in standardized feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModel {
    pub standardizer: Standardizer,
    /// `n_features x n_voxels`
    pub weights: DMatrix<f64>,
    /// Training mean of each voxel; also the r² baseline.
    pub y_mean: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl FoldModel {
    pub fn predict(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        let mut pred = self.standardizer.apply(x, rows) * &self.weights;
        for (v, mut col) in pred.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.y_mean[v]);
        }
        pred
    }
}

fn gather_rows(y: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), y.ncols(), |r, c| y[(rows[r], c)])
}

struct FoldSetup {
    standardizer: Standardizer,
    solver: RidgeSolver,
    projected: DMatrix<f64>,
    y_mean: Vec<f64>,
}

fn setup(x: &DMatrix<f64>, y: &DMatrix<f64>, rows: &[usize]) -> FoldSetup {
    let standardizer = Standardizer::fit(x, rows);
    let xs = standardizer.apply(x, rows);
    let (yc, y_mean) = center_columns(&gather_rows(y, rows));
    let solver = RidgeSolver::new(xs);
    let projected = solver.project(&yc);
    FoldSetup {
        standardizer,
        solver,
        projected,
        y_mean: y_mean.iter().copied().collect(),
    }
}

/// Fits every voxel on `rows` with its own fixed penalty.
fn fit_fixed(x: &DMatrix<f64>, y: &DMatrix<f64>, rows: &[usize], lambdas: &[f64]) -> FoldModel {
    let s = setup(x, y, rows);
    let mut weights = DMatrix::zeros(x.ncols(), y.ncols());
    let mut distinct: Vec<f64> = lambdas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    for &lambda in &distinct {
        let w = s.solver.weights(&s.projected, lambda);
        for (v, &l) in lambdas.iter().enumerate() {
            if l == lambda {
                weights.set_column(v, &w.column(v));
            }
        }
    }
    FoldModel {
        standardizer: s.standardizer,
        weights,
        y_mean: s.y_mean,
        lambdas: lambdas.to_vec(),
    }
}

fn r2_columns(truth: &DMatrix<f64>, pred: &DMatrix<f64>, baseline: &[f64]) -> Result<Vec<f64>> {
    (0..truth.ncols())
        .map(|v| {
            let t: Vec<f64> = truth.column(v).iter().copied().collect();
            let p: Vec<f64> = pred.column(v).iter().copied().collect();
            r2_score(&t, &p, baseline[v])
        })
        .collect()
}

/// Mean inner-fold r² per `(lambda, voxel)`, holding out one group at a time.
fn inner_scores(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    rows: &[usize],
    groups: &[u32],
    grid: &[f64],
) -> Result<DMatrix<f64>> {
    let mut distinct: Vec<u32> = rows.iter().map(|&r| groups[r]).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let mut total = DMatrix::zeros(grid.len(), y.ncols());
    for &held in &distinct {
        let (test, fit): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| groups[r] == held);
        let s = setup(x, y, &fit);
        let xv = s.standardizer.apply(x, &test) * s.solver.v();
        let truth = gather_rows(y, &test);
        for (li, &lambda) in grid.iter().enumerate() {
            let mut pred = &xv * s.solver.shrink(&s.projected, lambda);
            for (v, mut col) in pred.column_iter_mut().enumerate() {
                col.add_scalar_mut(s.y_mean[v]);
            }
            for (v, r2) in r2_columns(&truth, &pred, &s.y_mean)?.into_iter().enumerate() {
                total[(li, v)] += r2;
            }
        }
    }
    Ok(total / distinct.len() as f64)
}

/// Index of the largest score; ties keep the earliest (smallest penalty).
fn argmax_first(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in scores.enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Selects penalties on `rows` by inner cross-validation over `groups`, then
/// refits on all of `rows`. Rows outside `rows` are never read.
pub fn fit_on_rows(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    rows: &[usize],
    groups: &[u32],
    options: &CvOptions,
) -> Result<FoldModel> {
    let mut grid = options.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);
    let lambdas = if grid.len() == 1 {
        vec![grid[0]; y.ncols()]
    } else {
        let scores = inner_scores(x, y, rows, groups, &grid)?;
        match options.selection {
            LambdaSelection::PerVoxel => (0..y.ncols())
                .map(|v| grid[argmax_first(scores.column(v).iter().copied())])
                .collect(),
            LambdaSelection::Shared => {
                let best = argmax_first(scores.row_iter().map(|r| r.mean()));
                vec![grid[best]; y.ncols()]
            }
        }
    };
    Ok(fit_fixed(x, y, rows, &lambdas))
}

/// Row-aligned design and targets with the session of each row.
struct Design {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    sessions: Vec<u32>,
}

fn build_design(x: &FeatureMatrix, y: &VoxelResponses, labels: &SessionLabels) -> Result<Design> {
    let y_rows = align(x.image_ids(), y.image_ids(), "responses")?;
    let lookup = labels.lookup();
    let sessions = x
        .image_ids()
        .iter()
        .map(|id| {
            lookup
                .get(id.as_str())
                .map(|e| e.session)
                .ok_or_else(|| Error::MisalignedIds(format!("image '{id}' has no session label")))
        })
        .collect::<Result<Vec<u32>>>()?;
    if x.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    let design = DMatrix::from_row_slice(x.n_images(), x.n_features(), x.values());
    let targets = DMatrix::from_fn(x.n_images(), y.n_voxels(), |r, c| y.get(y_rows[r], c));

    let mut distinct = sessions.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "cross-validation needs at least 3 sessions, got {}",
            distinct.len()
        )));
    }
    for &s in &distinct {
        let count = sessions.iter().filter(|&&t| t == s).count();
        if count < 2 {
            return Err(Error::SmallSession { session: s, count });
        }
    }
    Ok(Design {
        x: design,
        y: targets,
        sessions,
    })
}

struct FoldOutcome {
    r2: Vec<f64>,
    lambdas: Vec<f64>,
}

fn run_outer(
    design: &Design,
    fit: impl Fn(&[usize]) -> Result<FoldModel> + Sync,
) -> Result<(Vec<u32>, Vec<FoldOutcome>)> {
    let mut held_out = design.sessions.clone();
    held_out.sort_unstable();
    held_out.dedup();
    let outcomes = held_out
        .par_iter()
        .map(|&s| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..design.sessions.len()).partition(|&r| design.sessions[r] == s);
            let model = fit(&train)?;
            let pred = model.predict(&design.x, &test);
            let truth = gather_rows(&design.y, &test);
            Ok(FoldOutcome {
                r2: r2_columns(&truth, &pred, &model.y_mean)?,
                lambdas: model.lambdas,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((held_out, outcomes))
}

fn assemble(
    voxel_ids: &[String],
    sessions: Vec<u32>,
    outcomes: Vec<FoldOutcome>,
    lambda_grid: Vec<f64>,
    selection: LambdaSelection,
) -> CvResult {
    let folds = outcomes.len() as f64;
    let mean_r2 = (0..voxel_ids.len())
        .map(|v| outcomes.iter().map(|o| o.r2[v]).sum::<f64>() / folds)
        .collect();
    let (fold_r2, fold_lambda) = outcomes.into_iter().map(|o| (o.r2, o.lambdas)).unzip();
    CvResult {
        voxel_ids: voxel_ids.to_vec(),
        sessions,
        lambda_grid,
        selection,
        fold_r2,
        fold_lambda,
        mean_r2,
    }
}

pub fn nested_cv_encode(
    x: &FeatureMatrix,
    y: &VoxelResponses,
    sessions: &SessionLabels,
    options: &CvOptions,
) -> Result<CvResult> {
    if options.lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    if let Some(l) = options
        .lambda_grid
        .iter()
        .find(|l| !(l.is_finite() && **l > 0.0))
    {
        return Err(Error::InvalidParameter(format!(
            "lambda values must be positive, got {l}"
        )));
    }
    let design = build_design(x, y, sessions)?;
    let (held_out, outcomes) = run_outer(&design, |train| {
        fit_on_rows(&design.x, &design.y, train, &design.sessions, options)
    })?;
    let mut grid = options.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);
    Ok(assemble(
        y.voxel_ids(),
        held_out,
        outcomes,
        grid,
        options.selection,
    ))
}

/// Plain leave-one-session-out ridge with a fixed penalty.
pub fn loso_cv(
    x: &FeatureMatrix,
    y: &VoxelResponses,
    sessions: &SessionLabels,
    lambda: f64,
) -> Result<CvResult> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let design = build_design(x, y, sessions)?;
    let lambdas = vec![lambda; design.y.ncols()];
    let (held_out, outcomes) = run_outer(&design, |train| {
        Ok(fit_fixed(&design.x, &design.y, train, &lambdas))
    })?;
    Ok(assemble(
        y.voxel_ids(),
        held_out,
        outcomes,
        vec![lambda],
        LambdaSelection::PerVoxel,
    ))
}
