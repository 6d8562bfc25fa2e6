//! Synthetic textures and voxel responses with planted ground truth.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{SessionEntry, SessionLabels, VoxelResponses};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Path};
use crate::fft::Fft2d;
use crate::raster::{bin_frequency, Raster};

/// A texture parameter, either fixed or drawn uniformly per texture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Fixed(f64),
    Range([f64; 2]),
}

impl Param {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Param::Fixed(v) => v.is_finite(),
            Param::Range([lo, hi]) => lo.is_finite() && hi.is_finite() && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{name}: bad value {self:?}")))
        }
    }

    fn min(&self) -> f64 {
        match *self {
            Param::Fixed(v) => v,
            Param::Range([lo, _]) => lo,
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Param::Fixed(v) => v,
            Param::Range([lo, hi]) => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param::Fixed(v)
    }
}

fn zero_param() -> Param {
    Param::Fixed(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureKind {
    /// White noise shaped by `|omega|^(-alpha/2)`.
    GaussianField { alpha: Param },
    /// Randomly placed oriented segments on the torus. `density` is the
    /// expected covered fraction of the image; orientations are in degrees and
    /// the whole set is rotated by `rotation` per texture.
    Bars {
        length: Param,
        width: Param,
        density: Param,
        orientations: Vec<f64>,
        #[serde(default = "zero_param")]
        rotation: Param,
    },
    PhaseScrambledOf { source: Box<TextureKind> },
}

impl TextureKind {
    fn validate(&self) -> Result<()> {
        match self {
            TextureKind::GaussianField { alpha } => alpha.validate("alpha"),
            TextureKind::Bars {
                length,
                width,
                density,
                orientations,
                rotation,
            } => {
                for (p, name) in [(length, "length"), (width, "width"), (density, "density")] {
                    p.validate(name)?;
                    if p.min() <= 0.0 {
                        return Err(Error::InvalidParameter(format!("{name} must be positive")));
                    }
                }
                rotation.validate("rotation")?;
                if orientations.is_empty() || orientations.iter().any(|o| !o.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "bars need a non-empty set of finite orientations".into(),
                    ));
                }
                Ok(())
            }
            TextureKind::PhaseScrambledOf { source } => source.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub kind: TextureKind,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl TextureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidParameter(format!(
                "texture size {}x{} too small",
                self.width, self.height
            )));
        }
        self.kind.validate()
    }
}

/// Generates a zero-mean, unit-variance texture.
pub fn gen_texture(spec: &TextureSpec) -> Result<Raster<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let raw = render(&spec.kind, spec.width, spec.height, &mut rng);
    normalize(raw)
}

fn render(kind: &TextureKind, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Raster<f64> {
    match kind {
        TextureKind::GaussianField { alpha } => {
            let alpha = alpha.draw(rng);
            gaussian_field(w, h, alpha, rng)
        }
        TextureKind::Bars {
            length,
            width,
            density,
            orientations,
            rotation,
        } => {
            let length = length.draw(rng);
            let width = width.draw(rng);
            let density = density.draw(rng);
            let rotation = rotation.draw(rng);
            bars(w, h, length, width, density, orientations, rotation, rng)
        }
        TextureKind::PhaseScrambledOf { source } => {
            let src = render(source, w, h, rng);
            let seed = rng.next_u64();
            phase_scramble(&src, seed).expect("rendered textures are finite")
        }
    }
}

fn normalize(mut u: Raster<f64>) -> Result<Raster<f64>> {
    let mean = u.mean();
    let sd = u.variance().sqrt();
    if !(sd > 0.0) {
        return Err(Error::InvalidParameter("texture came out constant".into()));
    }
    for v in u.data_mut() {
        *v = (*v - mean) / sd;
    }
    Ok(u)
}

fn gaussian_field(w: usize, h: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Raster<f64> {
    let noise = Raster::from_fn(w, h, |_, _| rng.sample::<f64, _>(StandardNormal));
    let fft = Fft2d::new(w, h);
    let mut spec = fft.forward_real(&noise);
    for y in 0..h {
        let wy = bin_frequency(y, h);
        for x in 0..w {
            let wx = bin_frequency(x, w);
            let r = wx.hypot(wy);
            let gain = if r == 0.0 { 0.0 } else { r.powf(-alpha / 2.0) };
            let v = spec.get(x, y) * gain;
            spec.set(x, y, v);
        }
    }
    fft.inverse(&mut spec);
    spec.map(|c| c.re)
}

#[allow(clippy::too_many_arguments)]
fn bars(
    w: usize,
    h: usize,
    length: f64,
    width: f64,
    density: f64,
    orientations: &[f64],
    rotation: f64,
    rng: &mut ChaCha8Rng,
) -> Raster<f64> {
    let mut out = Raster::zeros(w, h);
    let count = ((density * (w * h) as f64 / (length * width)).round() as usize).max(1);
    let reach = (0.5 * length.hypot(width)).ceil() as i64 + 1;
    for _ in 0..count {
        let cx = rng.random::<f64>() * w as f64;
        let cy = rng.random::<f64>() * h as f64;
        let pick = rng.random_range(0..orientations.len());
        let theta = (orientations[pick] + rotation).to_radians();
        let (s, c) = theta.sin_cos();
        let (bx, by) = (cx.floor() as i64, cy.floor() as i64);
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (px, py) = (bx + dx, by + dy);
                let (rx, ry) = (px as f64 + 0.5 - cx, py as f64 + 0.5 - cy);
                let along = rx * c + ry * s;
                let across = -rx * s + ry * c;
                // one-pixel linear ramp at the edges
                let a = (0.5 * length - along.abs() + 0.5).clamp(0.0, 1.0);
                let b = (0.5 * width - across.abs() + 0.5).clamp(0.0, 1.0);
                if a * b > 0.0 {
                    let x = px.rem_euclid(w as i64) as usize;
                    let y = py.rem_euclid(h as i64) as usize;
                    let v = out.get(x, y) + a * b;
                    out.set(x, y, v);
                }
            }
        }
    }
    out
}

/// Replaces every Fourier phase by a uniform random one, keeping the
/// amplitude spectrum and Hermitian symmetry. The DC term is kept as is;
/// other self-conjugate bins get a random sign.
pub fn phase_scramble(u: &Raster<f64>, seed: u64) -> Result<Raster<f64>> {
    if !u.is_finite() {
        return Err(Error::NonFiniteImage);
    }
    let (w, h) = (u.width(), u.height());
    let fft = Fft2d::new(w, h);
    let spec = fft.forward_real(u);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Raster::<Complex64>::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (mx, my) = ((w - x) % w, (h - y) % h);
            let (k, mirror) = (y * w + x, my * w + mx);
            if k > mirror {
                continue;
            }
            let amp = spec.get(x, y).norm();
            if k == 0 {
                out.set(x, y, spec.get(x, y));
            } else if k == mirror {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                out.set(x, y, Complex64::new(sign * amp, 0.0));
            } else {
                let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                let v = Complex64::from_polar(amp, phi);
                out.set(x, y, v);
                out.set(mx, my, v.conj());
            }
        }
    }
    fft.inverse(&mut out);
    Ok(out.map(|c| c.re))
}

/// A labelled set of textures: image `i` belongs to class `i % classes.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureCorpus {
    pub width: usize,
    pub height: usize,
    pub images_per_class: usize,
    pub seed: u64,
    pub classes: Vec<TextureKind>,
}

impl TextureCorpus {
    /// Six classes at 128x128, 36 images each: three bar families (long
    /// single-orientation, medium crossed, short three-way) and their
    /// phase-scrambled twins. Bar geometry and rotation vary per image.
    pub fn default_study(seed: u64) -> Self {
        let bars = |orientations: Vec<f64>, length: [f64; 2]| TextureKind::Bars {
            length: Param::Range(length),
            width: Param::Range([1.5, 5.0]),
            density: Param::Range([0.08, 0.35]),
            orientations,
            rotation: Param::Range([0.0, 180.0]),
        };
        let families = [
            bars(vec![0.0], [20.0, 40.0]),
            bars(vec![0.0, 90.0], [8.0, 20.0]),
            bars(vec![0.0, 60.0, 120.0], [3.0, 8.0]),
        ];
        let twins = families.iter().map(|k| TextureKind::PhaseScrambledOf {
            source: Box::new(k.clone()),
        });
        TextureCorpus {
            width: 128,
            height: 128,
            images_per_class: 36,
            seed,
            classes: families.iter().cloned().chain(twins).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.images_per_class * self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Class id in `1..=C`.
    pub fn class_of(&self, i: usize) -> u32 {
        (i % self.classes.len()) as u32 + 1
    }

    pub fn spec(&self, i: usize) -> TextureSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        TextureSpec {
            kind: self.classes[i % self.classes.len()].clone(),
            width: self.width,
            height: self.height,
            seed: rng.next_u64(),
        }
    }

    pub fn generate(&self) -> Result<Vec<Raster<f64>>> {
        if self.classes.is_empty() {
            return Err(Error::InvalidParameter("corpus has no classes".into()));
        }
        (0..self.len())
            .into_par_iter()
            .map(|i| gen_texture(&self.spec(i)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    Layer1Only,
    Layer2Only,
    Mixed,
    Null,
}

impl PlantKind {
    pub const ALL: [PlantKind; 4] = [
        PlantKind::Layer1Only,
        PlantKind::Layer2Only,
        PlantKind::Mixed,
        PlantKind::Null,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlantKind::Layer1Only => "layer1_only",
            PlantKind::Layer2Only => "layer2_only",
            PlantKind::Mixed => "mixed",
            PlantKind::Null => "null",
        }
    }

    fn supports(&self, path: &Path) -> bool {
        match (self, path.layer()) {
            (PlantKind::Layer1Only, 1) | (PlantKind::Layer2Only, 2) => true,
            (PlantKind::Mixed, l) => l > 0,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantCounts {
    pub layer1_only: usize,
    pub layer2_only: usize,
    pub mixed: usize,
    pub null: usize,
}

/// Voxels are laid out by kind in the order layer1_only, layer2_only, mixed,
/// null. `snr = None` switches the noise off on planted voxels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub counts: PlantCounts,
    pub snr: Option<f64>,
    pub seed: u64,
}

impl PlantSpec {
    pub fn balanced(per_kind: usize, snr: Option<f64>, seed: u64) -> Self {
        PlantSpec {
            counts: PlantCounts {
                layer1_only: per_kind,
                layer2_only: per_kind,
                mixed: per_kind,
                null: per_kind,
            },
            snr,
            seed,
        }
    }

    pub fn kinds(&self) -> Vec<PlantKind> {
        let c = &self.counts;
        PlantKind::ALL
            .iter()
            .zip([c.layer1_only, c.layer2_only, c.mixed, c.null])
            .flat_map(|(&k, n)| std::iter::repeat_n(k, n))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelTruth {
    pub voxel_id: String,
    pub kind: PlantKind,
    /// Feature labels carrying weight, aligned with `beta`.
    pub support: Vec<String>,
    pub beta: Vec<f64>,
    pub signal_variance: f64,
    pub noise_sd: f64,
}

/// Everything needed to rebuild the responses: the column standardization,
/// the weights, and the noise streams (stream `2v + 1` of `seed` for voxel `v`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub snr: Option<f64>,
    pub feature_labels: Vec<String>,
    pub column_mean: Vec<f64>,
    /// Reciprocal standard deviation; 0 for constant columns.
    pub column_inv_scale: Vec<f64>,
    pub voxels: Vec<VoxelTruth>,
}

impl GroundTruth {
    /// Rebuilds the responses from the record and the features.
    pub fn recompute(&self, features: &FeatureMatrix) -> Result<VoxelResponses> {
        let labels: Vec<String> = features.paths().iter().map(Path::label).collect();
        if labels != self.feature_labels {
            return Err(Error::MisalignedIds(
                "features do not match the ground-truth record".into(),
            ));
        }
        let n = features.n_images();
        let columns: Vec<Vec<f64>> = self
            .voxels
            .iter()
            .enumerate()
            .map(|(v, truth)| {
                let idx = support_indices(&labels, &truth.support);
                let signal = planted_signal(features, &self.column_mean, &self.column_inv_scale, &idx, &truth.beta);
                let noise = noise_draws(self.seed, v, n);
                signal
                    .iter()
                    .zip(noise)
                    .map(|(s, e)| s + truth.noise_sd * e)
                    .collect()
            })
            .collect();
        responses_from_columns(features.image_ids().to_vec(), &self.voxels, columns)
    }
}

fn support_indices(labels: &[String], support: &[String]) -> Vec<usize> {
    support
        .iter()
        .map(|s| labels.iter().position(|l| l == s).expect("support label present"))
        .collect()
}

fn planted_signal(
    features: &FeatureMatrix,
    mean: &[f64],
    inv_scale: &[f64],
    idx: &[usize],
    beta: &[f64],
) -> Vec<f64> {
    (0..features.n_images())
        .map(|i| {
            idx.iter()
                .zip(beta)
                .map(|(&j, b)| b * (features.get(i, j) - mean[j]) * inv_scale[j])
                .sum()
        })
        .collect()
}

fn noise_draws(seed: u64, voxel: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * voxel as u64 + 1);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn responses_from_columns(
    image_ids: Vec<String>,
    truth: &[VoxelTruth],
    columns: Vec<Vec<f64>>,
) -> Result<VoxelResponses> {
    let n = image_ids.len();
    let mut values = Vec::with_capacity(n * columns.len());
    for i in 0..n {
        values.extend(columns.iter().map(|c| c[i]));
    }
    VoxelResponses::new(
        image_ids,
        truth.iter().map(|t| t.voxel_id.clone()).collect(),
        values,
    )
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// Plants `y_v = Z_support beta_v + noise` per voxel, where `Z` holds the
/// features standardized over all images and `beta_v ~ N(0, 1)`. Noise
/// variance is `var(signal) / snr`; null voxels get unit-variance noise.
pub fn gen_voxels(
    features: &FeatureMatrix,
    plant: &PlantSpec,
    sessions: &SessionLabels,
) -> Result<(VoxelResponses, GroundTruth)> {
    if features.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features".into()));
    }
    if let Some(snr) = plant.snr {
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "snr must be positive (use null for no noise), got {snr}"
            )));
        }
    }
    let lookup = sessions.lookup();
    if let Some(id) = features.image_ids().iter().find(|id| !lookup.contains_key(id.as_str())) {
        return Err(Error::MisalignedIds(format!("image '{id}' has no session label")));
    }
    let n = features.n_images();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least 2 images".into()));
    }
    let p = features.n_features();
    let mut column_mean = vec![0.0; p];
    let mut column_inv_scale = vec![0.0; p];
    for j in 0..p {
        let col = features.column(j);
        let m = col.iter().sum::<f64>() / n as f64;
        let sd = population_variance(&col).sqrt();
        column_mean[j] = m;
        column_inv_scale[j] = if sd > 1e-12 * m.abs().max(1.0) { 1.0 / sd } else { 0.0 };
    }
    let labels: Vec<String> = features.paths().iter().map(Path::label).collect();
    let kinds = plant.kinds();
    let width = (kinds.len().max(1) - 1).to_string().len();

    let planted: Vec<(VoxelTruth, Vec<f64>)> = kinds
        .par_iter()
        .enumerate()
        .map(|(v, &kind)| {
            let voxel_id = format!("v{v:0width$}");
            let idx: Vec<usize> = (0..p)
                .filter(|&j| kind.supports(&features.paths()[j]) && column_inv_scale[j] > 0.0)
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(plant.seed);
            rng.set_stream(2 * v as u64);
            let beta: Vec<f64> = idx.iter().map(|_| rng.sample(StandardNormal)).collect();
            let signal = planted_signal(features, &column_mean, &column_inv_scale, &idx, &beta);
            let signal_variance = population_variance(&signal);
            let noise_sd = match (kind, plant.snr) {
                (PlantKind::Null, _) => 1.0,
                (_, None) => 0.0,
                (_, Some(snr)) => {
                    if signal_variance <= 0.0 {
                        return Err(Error::ZeroSignalVariance(voxel_id));
                    }
                    (signal_variance / snr).sqrt()
                }
            };
            let noise = noise_draws(plant.seed, v, n);
            let y = signal
                .iter()
                .zip(noise)
                .map(|(s, e)| s + noise_sd * e)
                .collect();
            Ok((
                VoxelTruth {
                    voxel_id,
                    kind,
                    support: idx.iter().map(|&j| labels[j].clone()).collect(),
                    beta,
                    signal_variance,
                    noise_sd,
                },
                y,
            ))
        })
        .collect::<Result<_>>()?;

    let (voxels, columns): (Vec<VoxelTruth>, Vec<Vec<f64>>) = planted.into_iter().unzip();
    let responses = responses_from_columns(features.image_ids().to_vec(), &voxels, columns)?;
    Ok((
        responses,
        GroundTruth {
            seed: plant.seed,
            snr: plant.snr,
            feature_labels: labels,
            column_mean,
            column_inv_scale,
            voxels,
        },
    ))
}

/// Splits `n_images` consecutive images into equal sessions, and each
/// session into `blocks_per_session` consecutive blocks numbered from 1.
/// Image ids are `"0"`, `"1"`, ...
pub fn gen_session_labels(
    n_images: usize,
    n_sessions: usize,
    blocks_per_session: usize,
) -> Result<SessionLabels> {
    if n_sessions == 0 || n_images % n_sessions != 0 {
        return Err(Error::InvalidParameter(format!(
            "{n_images} images cannot be split into {n_sessions} equal sessions"
        )));
    }
    let per_session = n_images / n_sessions;
    if blocks_per_session == 0 || blocks_per_session > per_session {
        return Err(Error::InvalidParameter(format!(
            "{blocks_per_session} blocks for {per_session} images per session"
        )));
    }
    let entries = (0..n_images)
        .map(|i| {
            let within = i % per_session;
            SessionEntry {
                image_id: i.to_string(),
                session: (i / per_session) as u32 + 1,
                block: (within * blocks_per_session / per_session) as u32 + 1,
            }
        })
        .collect();
    SessionLabels::new(entries)
}
