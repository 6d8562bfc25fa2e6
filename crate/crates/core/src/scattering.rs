//! Translation-invariant scattering: global means of cascaded wavelet moduli.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Path};
use crate::fft::Fft2d;
use crate::filterbank::{build_filter_bank, Filter, FilterBank, FilterParams};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    /// Number of wavelet-modulus layers `M`, 1 or 2.
    #[serde(rename = "M")]
    pub depth: usize,
    #[serde(rename = "J")]
    pub scales: usize,
    #[serde(rename = "L")]
    pub orientations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slant: Option<f64>,
}

impl ScatteringConfig {
    pub fn new(depth: usize, scales: usize, orientations: usize) -> Self {
        ScatteringConfig {
            depth,
            scales,
            orientations,
            sigma0: None,
            xi0: None,
            slant: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.depth) {
            return Err(Error::InvalidParameter(format!(
                "M must be 1 or 2, got {}",
                self.depth
            )));
        }
        Ok(())
    }

    pub fn filter_params(&self, width: usize, height: usize) -> FilterParams {
        let mut p = FilterParams::new(self.scales, self.orientations, width, height);
        if let Some(s) = self.sigma0 {
            p.sigma0 = s;
        }
        if let Some(x) = self.xi0 {
            p.xi0 = x;
        }
        if let Some(s) = self.slant {
            p.slant = s;
        }
        p
    }

    /// Number of coefficients: `1 + J L` plus `L^2 J (J - 1) / 2` when `M = 2`.
    pub fn n_features(&self) -> usize {
        let (j, l) = (self.scales, self.orientations);
        let mut n = 1 + j * l;
        if self.depth >= 2 {
            n += l * l * j * j.saturating_sub(1) / 2;
        }
        n
    }
}

/// Coefficient paths in output order: layer 0, then layer 1 by `(j1, g1)`,
/// then layer 2 by `(j1, g1, j2, g2)` keeping only `j2 > j1`.
pub fn feature_paths(config: &ScatteringConfig) -> Vec<Path> {
    let (scales, orients) = (config.scales, config.orientations);
    let mut paths = vec![Path::Zeroth];
    for j1 in 0..scales {
        for g1 in 0..orients {
            paths.push(Path::First { j1, g1 });
        }
    }
    if config.depth >= 2 {
        for j1 in 0..scales {
            for g1 in 0..orients {
                for j2 in j1 + 1..scales {
                    for g2 in 0..orients {
                        paths.push(Path::Second { j1, g1, j2, g2 });
                    }
                }
            }
        }
    }
    paths
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringFeatures {
    pub config: ScatteringConfig,
    pub paths: Vec<Path>,
    pub values: Vec<f64>,
}

/// Squared-coefficient totals per layer, with the pruned `j2 <= j1` branch
/// evaluated for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    pub layer0: f64,
    pub layer1: f64,
    /// Paths with `j2 > j1` (the ones `scatter` outputs).
    pub layer2_kept: f64,
    /// Paths with `j2 <= j1`.
    pub layer2_pruned: f64,
    /// `layer2_pruned / (layer2_kept + layer2_pruned)`, 0 when both vanish.
    pub e_leq: f64,
}

/// `|psi * u|` for a real field `u`, by spectral multiplication.
pub fn wavelet_modulus(u: &Raster<f64>, filter: &Filter) -> Result<Raster<f64>> {
    if !u.same_shape(&filter.spectrum) {
        return Err(Error::ShapeMismatch(format!(
            "image is {}x{}, filter is {}x{}",
            u.width(),
            u.height(),
            filter.spectrum.width(),
            filter.spectrum.height()
        )));
    }
    let fft = Fft2d::new(u.width(), u.height());
    let spec = fft.forward_real(u);
    Ok(modulus_of_product(&fft, &spec, &filter.spectrum))
}

fn modulus_of_product(
    fft: &Fft2d,
    spectrum: &Raster<Complex64>,
    filter: &Raster<Complex64>,
) -> Raster<f64> {
    let mut prod = spectrum.clone();
    for (p, f) in prod.data_mut().iter_mut().zip(filter.data()) {
        *p *= f;
    }
    fft.inverse(&mut prod);
    prod.map(|c| c.norm())
}

fn mean_modulus_of_product(
    fft: &Fft2d,
    spectrum: &Raster<Complex64>,
    filter: &Raster<Complex64>,
) -> f64 {
    modulus_of_product(fft, spectrum, filter).mean()
}

/// A filter bank bound to one image shape, reusable across images and threads.
#[derive(Debug, Clone)]
pub struct Scatterer {
    config: ScatteringConfig,
    bank: FilterBank,
    fft: Fft2d,
    paths: Vec<Path>,
}

impl Scatterer {
    pub fn new(config: &ScatteringConfig, width: usize, height: usize) -> Result<Self> {
        config.validate()?;
        let bank = build_filter_bank(&config.filter_params(width, height))?;
        Ok(Scatterer {
            config: *config,
            bank,
            fft: Fft2d::new(width, height),
            paths: feature_paths(config),
        })
    }

    pub fn config(&self) -> &ScatteringConfig {
        &self.config
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    fn check_input(&self, u: &Raster<f64>) -> Result<()> {
        if u.width() != self.fft.width() || u.height() != self.fft.height() {
            return Err(Error::ShapeMismatch(format!(
                "image is {}x{}, scatterer built for {}x{}",
                u.width(),
                u.height(),
                self.fft.width(),
                self.fft.height()
            )));
        }
        if !u.is_finite() {
            return Err(Error::NonFiniteImage);
        }
        Ok(())
    }

    /// Coefficient values in `paths()` order.
    pub fn coefficients(&self, u: &Raster<f64>) -> Result<Vec<f64>> {
        self.check_input(u)?;
        let orients = self.config.orientations;
        let scales = self.config.scales;
        let spec0 = self.fft.forward_real(u);

        let mut layer1 = Vec::with_capacity(scales * orients);
        let mut layer2 = Vec::new();
        for f1 in self.bank.filters() {
            let m1 = modulus_of_product(&self.fft, &spec0, &f1.spectrum);
            layer1.push(m1.mean());
            if self.config.depth >= 2 && f1.j + 1 < scales {
                let spec1 = self.fft.forward_real(&m1);
                for f2 in &self.bank.filters()[(f1.j + 1) * orients..] {
                    layer2.push(mean_modulus_of_product(&self.fft, &spec1, &f2.spectrum));
                }
            }
        }
        let mut values = Vec::with_capacity(self.paths.len());
        values.push(u.mean());
        values.extend(layer1);
        values.extend(layer2);
        debug_assert_eq!(values.len(), self.paths.len());
        Ok(values)
    }

    pub fn scatter(&self, u: &Raster<f64>) -> Result<ScatteringFeatures> {
        Ok(ScatteringFeatures {
            config: self.config,
            paths: self.paths.clone(),
            values: self.coefficients(u)?,
        })
    }

    /// Evaluates every `(j1, g1, j2, g2)` pair, including the pruned ones.
    pub fn energy_profile(&self, u: &Raster<f64>) -> Result<EnergyProfile> {
        self.check_input(u)?;
        if self.config.depth < 2 {
            return Err(Error::InvalidParameter(
                "energy profile needs M = 2".into(),
            ));
        }
        let spec0 = self.fft.forward_real(u);
        let layer0 = u.mean().powi(2);
        let mut layer1 = 0.0;
        let mut kept = 0.0;
        let mut pruned = 0.0;
        for f1 in self.bank.filters() {
            let m1 = modulus_of_product(&self.fft, &spec0, &f1.spectrum);
            layer1 += m1.mean().powi(2);
            let spec1 = self.fft.forward_real(&m1);
            for f2 in self.bank.filters() {
                let c = mean_modulus_of_product(&self.fft, &spec1, &f2.spectrum);
                if f2.j > f1.j {
                    kept += c * c;
                } else {
                    pruned += c * c;
                }
            }
        }
        let total = kept + pruned;
        // below this the layer-2 energy is rounding noise
        let floor = (1e-12 * u.data().iter().map(|v| v * v).sum::<f64>().sqrt()
            / (u.len() as f64).sqrt())
        .powi(2);
        let e_leq = if total <= floor { 0.0 } else { pruned / total };
        Ok(EnergyProfile {
            layer0,
            layer1,
            layer2_kept: kept,
            layer2_pruned: pruned,
            e_leq,
        })
    }
}

/// One-shot scattering of a single image; builds the filter bank internally.
pub fn scatter(u: &Raster<f64>, config: &ScatteringConfig) -> Result<ScatteringFeatures> {
    if !u.is_finite() {
        return Err(Error::NonFiniteImage);
    }
    Scatterer::new(config, u.width(), u.height())?.scatter(u)
}

pub fn energy_profile(u: &Raster<f64>, config: &ScatteringConfig) -> Result<EnergyProfile> {
    Scatterer::new(config, u.width(), u.height())?.energy_profile(u)
}

/// Scatters every image into one row. Rows are computed in parallel on the
/// current rayon pool; the result does not depend on the number of workers.
/// Row ids default to the image index.
pub fn batch_scatter(images: &[Raster<f64>], config: &ScatteringConfig) -> Result<FeatureMatrix> {
    config.validate()?;
    let paths = feature_paths(config);
    let Some(first) = images.first() else {
        return FeatureMatrix::new(paths, Vec::new(), Vec::new());
    };
    if let Some((i, img)) = images
        .iter()
        .enumerate()
        .find(|(_, img)| !img.same_shape(first))
    {
        return Err(Error::ShapeMismatch(format!(
            "image {i} is {}x{}, image 0 is {}x{}",
            img.width(),
            img.height(),
            first.width(),
            first.height()
        )));
    }
    let scatterer = Scatterer::new(config, first.width(), first.height())?;
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| scatterer.coefficients(img))
        .collect::<Result<_>>()?;
    let ids = (0..images.len()).map(|i| i.to_string()).collect();
    FeatureMatrix::new(paths, ids, rows.concat())
}
