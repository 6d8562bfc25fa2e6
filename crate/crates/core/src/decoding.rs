//! One-vs-rest ℓ2 logistic regression decoder with block-wise cross-validation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::Standardizer;
use crate::error::{Error, Result};

/// Activity per image with a class label and a cross-validation unit
/// (acquisition block) per image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledActivity {
    /// `n_images x n_voxels`
    pub activity: DMatrix<f64>,
    pub labels: Vec<u32>,
    pub blocks: Vec<u32>,
}

impl LabeledActivity {
    pub fn new(activity: DMatrix<f64>, labels: Vec<u32>, blocks: Vec<u32>) -> Result<Self> {
        if labels.len() != activity.nrows() || blocks.len() != activity.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows, {} labels, {} blocks",
                activity.nrows(),
                labels.len(),
                blocks.len()
            )));
        }
        if activity.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("activity".into()));
        }
        let data = LabeledActivity {
            activity,
            labels,
            blocks,
        };
        if data.classes().len() < 2 {
            return Err(Error::InvalidParameter("need at least 2 classes".into()));
        }
        Ok(data)
    }

    pub fn classes(&self) -> Vec<u32> {
        sorted_distinct(self.labels.iter().copied())
    }
}

fn sorted_distinct(it: impl Iterator<Item = u32>) -> Vec<u32> {
    let mut v: Vec<u32> = it.collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub const MAX_ITERATIONS: usize = 1000;
pub const GRADIENT_TOL: f64 = 1e-6;

/// Binary ℓ2-penalized logistic fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting from the zero model.
    pub objective_trace: Vec<f64>,
}

#[inline]
fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `sum log(1 + exp(-z (x'w + b))) + lambda |w|^2`, with `theta = (w, b)`.
pub fn logistic_objective(x: &DMatrix<f64>, z: &[f64], theta: &DVector<f64>, lambda: f64) -> f64 {
    let p = x.ncols();
    let w = theta.rows(0, p);
    let b = theta[p];
    let margins = x * w;
    let loss: f64 = margins
        .iter()
        .zip(z)
        .map(|(m, zi)| log1p_exp(-zi * (m + b)))
        .sum();
    loss + lambda * w.norm_squared()
}

/// Gradient of [`logistic_objective`] with respect to `(w, b)`.
pub fn logistic_gradient(
    x: &DMatrix<f64>,
    z: &[f64],
    theta: &DVector<f64>,
    lambda: f64,
) -> DVector<f64> {
    let p = x.ncols();
    let w = theta.rows(0, p).into_owned();
    let b = theta[p];
    let margins = x * &w;
    let r = DVector::from_iterator(
        z.len(),
        margins
            .iter()
            .zip(z)
            .map(|(m, zi)| -zi * sigmoid(-zi * (m + b))),
    );
    let mut g = DVector::zeros(p + 1);
    g.rows_mut(0, p).copy_from(&(x.tr_mul(&r) + 2.0 * lambda * &w));
    g[p] = r.sum();
    g
}

/// Damped Newton descent from the zero model with step halving, so the
/// objective never increases between accepted steps.
pub fn logistic_binary_fit(x: &DMatrix<f64>, z: &[f64], lambda: f64) -> BinaryFit {
    let (n, p) = (x.nrows(), x.ncols());
    let mut theta = DVector::zeros(p + 1);
    let mut f = logistic_objective(x, z, &theta, lambda);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let mut augmented = DMatrix::from_element(n, p + 1, 1.0);
    augmented.columns_mut(0, p).copy_from(x);

    while iterations < MAX_ITERATIONS {
        let g = logistic_gradient(x, z, &theta, lambda);
        if g.amax() <= GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let eta = &augmented * &theta;
        let mut weighted = augmented.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            let s = sigmoid(eta[i]);
            row *= (s * (1.0 - s)).sqrt();
        }
        let mut h = weighted.tr_mul(&weighted);
        for k in 0..p {
            h[(k, k)] += 2.0 * lambda;
        }
        // keeps the unpenalized intercept direction invertible when saturated
        h[(p, p)] += 1e-12 * (1.0 + h[(p, p)]);
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&(-&g)),
            None => -&g,
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let candidate = &theta + t * &step;
            let fc = logistic_objective(x, z, &candidate, lambda);
            if fc <= f + 1e-4 * t * slope {
                theta = candidate;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(f);
    }
    if !converged {
        converged = logistic_gradient(x, z, &theta, lambda).amax() <= GRADIENT_TOL;
    }
    BinaryFit {
        weights: theta.rows(0, p).iter().copied().collect(),
        intercept: theta[p],
        iterations,
        converged,
        objective_trace: trace,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrModel {
    /// Class ids, ascending; one binary model each.
    pub classes: Vec<u32>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub lambda: f64,
    pub converged: Vec<bool>,
}

impl OvrModel {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    /// Class with the largest score; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> u32 {
        let scores = self.scores(x);
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        self.classes[best]
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

fn fit_ovr_matrix(x: &DMatrix<f64>, labels: &[u32], lambda: f64) -> OvrModel {
    let classes = sorted_distinct(labels.iter().copied());
    let fits: Vec<BinaryFit> = classes
        .par_iter()
        .map(|&c| {
            let z: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            logistic_binary_fit(x, &z, lambda)
        })
        .collect();
    OvrModel {
        classes,
        converged: fits.iter().map(|f| f.converged).collect(),
        intercepts: fits.iter().map(|f| f.intercept).collect(),
        weights: fits.into_iter().map(|f| f.weights).collect(),
        lambda,
    }
}

/// Fits one binary classifier per class on the raw activity.
pub fn logistic_ovr_fit(data: &LabeledActivity, lambda: f64) -> Result<OvrModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(fit_ovr_matrix(&data.activity, &data.labels, lambda))
}

/// Default decoding penalties: five values log-spaced from 1e-2 to 1e2.
pub fn default_decode_grid() -> Vec<f64> {
    (0..5).map(|k| 10f64.powi(k - 2)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub lambda_grid: Vec<f64>,
    /// Inner folds built from the outer-training blocks (round-robin by block id).
    pub inner_folds: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            lambda_grid: default_decode_grid(),
            inner_folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeFold {
    pub held_out: u32,
    /// Accuracy over test images whose class was seen in training;
    /// `None` when there are none.
    pub accuracy: Option<f64>,
    pub n_scored: usize,
    pub n_test: usize,
    pub lambda: f64,
    /// Some test class never appeared in this fold's training rows.
    pub unseen_class: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub folds: Vec<DecodeFold>,
    /// Mean of the fold accuracies that are defined.
    pub mean_accuracy: f64,
    pub chance: f64,
}

/// Fit on `train` (standardized with its own statistics) and score `test`
/// restricted to classes present in training.
fn fit_and_score(
    data: &LabeledActivity,
    train: &[usize],
    test: &[usize],
    lambda: f64,
) -> (Option<f64>, usize, bool, bool) {
    let standardizer = Standardizer::fit(&data.activity, train);
    let xt = standardizer.apply(&data.activity, train);
    let labels: Vec<u32> = train.iter().map(|&i| data.labels[i]).collect();
    let model = fit_ovr_matrix(&xt, &labels, lambda);
    let xs = standardizer.apply(&data.activity, test);
    let mut correct = 0;
    let mut scored = 0;
    let mut unseen = false;
    for (r, &i) in test.iter().enumerate() {
        let truth = data.labels[i];
        if model.classes.binary_search(&truth).is_err() {
            unseen = true;
            continue;
        }
        scored += 1;
        let row: Vec<f64> = xs.row(r).iter().copied().collect();
        if model.predict(&row) == truth {
            correct += 1;
        }
    }
    let acc = (scored > 0).then(|| correct as f64 / scored as f64);
    (acc, scored, unseen, model.all_converged())
}

/// Picks the penalty with the best mean inner accuracy (ties to the smaller).
fn select_lambda(data: &LabeledActivity, train: &[usize], options: &DecodeOptions, grid: &[f64]) -> f64 {
    if grid.len() == 1 {
        return grid[0];
    }
    let blocks = sorted_distinct(train.iter().map(|&i| data.blocks[i]));
    let k = options.inner_folds.max(2).min(blocks.len());
    let fold_of = |block: u32| blocks.binary_search(&block).unwrap() % k;
    let mut best = grid[0];
    let mut best_score = f64::NEG_INFINITY;
    for &lambda in grid {
        let mut total = 0.0;
        let mut counted = 0;
        for f in 0..k {
            let (test, fit): (Vec<usize>, Vec<usize>) =
                train.iter().partition(|&&i| fold_of(data.blocks[i]) == f);
            if fit.is_empty() || test.is_empty() {
                continue;
            }
            if let (Some(acc), ..) = fit_and_score(data, &fit, &test, lambda) {
                total += acc;
                counted += 1;
            }
        }
        let score = if counted > 0 { total / counted as f64 } else { f64::NEG_INFINITY };
        if score > best_score {
            best_score = score;
            best = lambda;
        }
    }
    best
}

/// Leave-one-block-out decoding with the penalty chosen by inner block-wise CV.
pub fn block_cv_decode(data: &LabeledActivity, options: &DecodeOptions) -> Result<DecodeResult> {
    if options.lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    if let Some(l) = options.lambda_grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "lambda values must be positive, got {l}"
        )));
    }
    let blocks = sorted_distinct(data.blocks.iter().copied());
    if blocks.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "block cross-validation needs at least 3 blocks, got {}",
            blocks.len()
        )));
    }
    let mut grid = options.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);
    let folds: Vec<DecodeFold> = blocks
        .par_iter()
        .map(|&held| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..data.labels.len()).partition(|&i| data.blocks[i] == held);
            let lambda = select_lambda(data, &train, options, &grid);
            let (accuracy, n_scored, unseen_class, converged) =
                fit_and_score(data, &train, &test, lambda);
            DecodeFold {
                held_out: held,
                accuracy,
                n_scored,
                n_test: test.len(),
                lambda,
                unseen_class,
                converged,
            }
        })
        .collect();
    let defined: Vec<f64> = folds.iter().filter_map(|f| f.accuracy).collect();
    let mean_accuracy = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(DecodeResult {
        folds,
        mean_accuracy,
        chance: 1.0 / data.classes().len() as f64,
    })
}

/// Held-out rows never enter a fit: this returns the model `block_cv_decode`
/// uses for fold `held` (exposed for isolation checks).
pub fn fold_model(data: &LabeledActivity, held: u32, options: &DecodeOptions) -> OvrModel {
    let train: Vec<usize> = (0..data.labels.len())
        .filter(|&i| data.blocks[i] != held)
        .collect();
    let mut grid = options.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);
    let lambda = select_lambda(data, &train, options, &grid);
    let standardizer = Standardizer::fit(&data.activity, &train);
    let xt = standardizer.apply(&data.activity, &train);
    let labels: Vec<u32> = train.iter().map(|&i| data.labels[i]).collect();
    fit_ovr_matrix(&xt, &labels, lambda)
}
