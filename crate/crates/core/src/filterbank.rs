//! Periodized frequency-domain Morlet filter banks.
//!
//! A mother wavelet at orientation `gamma` is the zero-sum Morlet
//!
//! ```text
//! psi(x) = C * (exp(i xi.x) - beta) * exp(-x' S^-1 x / 2)
//! ```
//!
//! with `xi = xi0 (cos gamma, sin gamma)` and `S` the envelope covariance whose
//! standard deviations are `sigma0` along `xi` and `sigma0 / slant` across it.
//! Its spectrum is a pair of Gaussians; the filter at scale `j` samples the
//! dilated spectrum `psi_hat(2^j w)` on the FFT grid, summed over all `2 pi`
//! aliases (periodization). `beta` is solved per scale on the periodized sums
//! so the sampled filter has exactly zero mean, and `C` puts the peak of the
//! continuous mother spectrum at 1.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{bin_frequency, Raster};

/// Scale counts evaluated in the reference grid.
pub const REFERENCE_SCALES: [usize; 3] = [4, 5, 6];
/// Orientation counts evaluated in the reference grid.
pub const REFERENCE_ORIENTATIONS: [usize; 4] = [2, 4, 6, 8];

/// Log-magnitude below which Gaussian alias terms are dropped.
const ALIAS_CUTOFF_EXPONENT: f64 = 46.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Number of dyadic scales `J`; scale indices run over `0..J`.
    #[serde(rename = "J")]
    pub scales: usize,
    /// Number of orientations `L` spread over `[0, 180)` degrees.
    #[serde(rename = "L")]
    pub orientations: usize,
    pub width: usize,
    pub height: usize,
    /// Envelope standard deviation of the mother wavelet along its wave vector, in pixels.
    pub sigma0: f64,
    /// Center frequency magnitude of the mother wavelet, radians/pixel.
    pub xi0: f64,
    /// Envelope anisotropy: the cross-wave standard deviation is `sigma0 / slant`.
    pub slant: f64,
}

impl FilterParams {
    pub const DEFAULT_SIGMA0: f64 = 0.8;
    pub const DEFAULT_XI0: f64 = 3.0 * PI / 4.0;

    pub fn new(scales: usize, orientations: usize, width: usize, height: usize) -> Self {
        FilterParams {
            scales,
            orientations,
            width,
            height,
            sigma0: Self::DEFAULT_SIGMA0,
            xi0: Self::DEFAULT_XI0,
            slant: Self::default_slant(orientations),
        }
    }

    pub fn default_slant(orientations: usize) -> f64 {
        4.0 / orientations.max(1) as f64
    }

    /// Checks hard constraints and returns diagnostic notes for settings outside
    /// the reference grid.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.scales == 0 {
            return Err(Error::InvalidParameter("J must be at least 1".into()));
        }
        if self.orientations == 0 {
            return Err(Error::InvalidParameter("L must be at least 1".into()));
        }
        if !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma0 must be positive, got {}",
                self.sigma0
            )));
        }
        if !(self.slant.is_finite() && self.slant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "slant must be positive, got {}",
                self.slant
            )));
        }
        if !(self.xi0.is_finite() && self.xi0 > 0.0 && self.xi0 < PI) {
            return Err(Error::InvalidParameter(format!(
                "xi0 must lie in (0, pi), got {}",
                self.xi0
            )));
        }
        let mut notes = Vec::new();
        if !REFERENCE_SCALES.contains(&self.scales) {
            notes.push(format!(
                "J={} is outside the reference grid {:?}",
                self.scales, REFERENCE_SCALES
            ));
        }
        if !REFERENCE_ORIENTATIONS.contains(&self.orientations) {
            notes.push(format!(
                "L={} is outside the reference grid {:?}",
                self.orientations, REFERENCE_ORIENTATIONS
            ));
        }
        Ok(notes)
    }

    /// Orientation angles in degrees: `k * 180 / L` for `k = 0..L`.
    pub fn angles(&self) -> Vec<f64> {
        (0..self.orientations)
            .map(|k| k as f64 * 180.0 / self.orientations as f64)
            .collect()
    }
}

/// One oriented, dilated wavelet sampled on the FFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    /// Orientation in degrees, in `[0, 180)`.
    pub gamma: f64,
    /// Position of `gamma` in the bank's angle list.
    pub orientation: usize,
    /// Scale index, 0 = finest.
    pub j: usize,
    pub spectrum: Raster<Complex64>,
}

impl Filter {
    pub fn dc_ratio(&self) -> f64 {
        let max = self.spectrum.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        self.spectrum.get(0, 0).norm() / max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    params: FilterParams,
    filters: Vec<Filter>,
}

impl FilterBank {
    /// Wraps an explicit filter list; no structural checks beyond shape agreement.
    pub fn from_filters(params: FilterParams, filters: Vec<Filter>) -> Result<Self> {
        for f in &filters {
            if f.spectrum.width() != params.width || f.spectrum.height() != params.height {
                return Err(Error::ShapeMismatch(format!(
                    "filter (j={}, gamma={}) is {}x{}, bank is {}x{}",
                    f.j,
                    f.gamma,
                    f.spectrum.width(),
                    f.spectrum.height(),
                    params.width,
                    params.height
                )));
            }
        }
        Ok(FilterBank { params, filters })
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Filter at scale `j` and orientation index `k`, using the j-major layout.
    pub fn get(&self, j: usize, k: usize) -> &Filter {
        &self.filters[j * self.params.orientations + k]
    }

    /// Copy of the bank with every spectrum multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        FilterBank {
            params: self.params,
            filters: self
                .filters
                .iter()
                .map(|f| Filter {
                    spectrum: f.spectrum.scaled(factor),
                    ..f.clone()
                })
                .collect(),
        }
    }
}

/// Envelope geometry shared by every scale of one orientation.
struct Envelope {
    axis: (f64, f64),
    sigma_along: f64,
    sigma_across: f64,
    xi0: f64,
}

impl Envelope {
    fn new(params: &FilterParams, gamma_deg: f64) -> Self {
        let theta = gamma_deg.to_radians();
        Envelope {
            axis: (theta.cos(), theta.sin()),
            sigma_along: params.sigma0,
            sigma_across: params.sigma0 / params.slant,
            xi0: params.xi0,
        }
    }

    /// `exp(-w' S w / 2)` for the spatial covariance `S`.
    #[inline]
    fn gaussian(&self, wx: f64, wy: f64) -> f64 {
        let (c, s) = self.axis;
        let along = wx * c + wy * s;
        let across = -wx * s + wy * c;
        let q = (self.sigma_along * along).powi(2) + (self.sigma_across * across).powi(2);
        (-0.5 * q).exp()
    }

    fn center(&self) -> (f64, f64) {
        (self.xi0 * self.axis.0, self.xi0 * self.axis.1)
    }

    /// Peak of the continuous, unperiodized mother spectrum. Both Gaussians sit
    /// on the wave axis, so the maximum lies on it too.
    fn continuous_peak(&self) -> f64 {
        let s2 = self.sigma_along * self.sigma_along;
        let beta = (-0.5 * s2 * self.xi0 * self.xi0).exp();
        let h = |t: f64| (-0.5 * s2 * (t - self.xi0).powi(2)).exp() - beta * (-0.5 * s2 * t * t).exp();
        // golden-section search; h is unimodal on [0, 2 xi0]
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, 2.0 * self.xi0 + 4.0 / self.sigma_along);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        for _ in 0..200 {
            if h(c) > h(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - ratio * (b - a);
            d = a + ratio * (b - a);
        }
        h(0.5 * (a + b))
    }

    /// Number of `2 pi` aliases per axis needed at dilation `scale`.
    fn alias_range(&self, scale: f64) -> i64 {
        let sigma_min = self.sigma_along.min(self.sigma_across);
        let reach = (2.0 * ALIAS_CUTOFF_EXPONENT).sqrt() / sigma_min + self.xi0;
        ((reach / scale + PI * 2f64.sqrt()) / (2.0 * PI)).ceil() as i64
    }
}

fn sample_spectrum(params: &FilterParams, gamma_deg: f64, j: usize) -> Raster<Complex64> {
    let env = Envelope::new(params, gamma_deg);
    let scale = (1u64 << j) as f64;
    let (cx, cy) = env.center();
    let range = env.alias_range(scale);
    let tau = 2.0 * PI;

    let mut wave_dc = 0.0;
    let mut envelope_dc = 0.0;
    for ky in -range..=range {
        for kx in -range..=range {
            let (ax, ay) = (scale * tau * kx as f64, scale * tau * ky as f64);
            wave_dc += env.gaussian(ax - cx, ay - cy);
            envelope_dc += env.gaussian(ax, ay);
        }
    }
    let beta = wave_dc / envelope_dc;
    let norm = 1.0 / env.continuous_peak();

    let (w, h) = (params.width, params.height);
    let fx: Vec<f64> = (0..w).map(|k| bin_frequency(k, w)).collect();
    let fy: Vec<f64> = (0..h).map(|k| bin_frequency(k, h)).collect();
    Raster::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for ky in -range..=range {
            let wy = scale * (fy[y] + tau * ky as f64);
            for kx in -range..=range {
                let wx = scale * (fx[x] + tau * kx as f64);
                acc += env.gaussian(wx - cx, wy - cy) - beta * env.gaussian(wx, wy);
            }
        }
        Complex64::new(norm * acc, 0.0)
    })
}

fn check_min_size(params: &FilterParams) -> Result<()> {
    if params.width < 8 || params.height < 8 {
        return Err(Error::RasterTooSmall {
            width: params.width,
            height: params.height,
        });
    }
    Ok(())
}

/// The finest-scale (`j = 0`) wavelet at orientation `gamma` (degrees).
pub fn make_mother_morlet(params: &FilterParams, gamma: f64) -> Result<Filter> {
    check_min_size(params)?;
    params.validate()?;
    let orientation = params
        .angles()
        .iter()
        .position(|a| (a - gamma).abs() < 1e-9)
        .unwrap_or(0);
    Ok(Filter {
        gamma,
        orientation,
        j: 0,
        spectrum: sample_spectrum(params, gamma, 0),
    })
}

/// Builds all `J * L` filters, ordered by scale then orientation.
pub fn build_filter_bank(params: &FilterParams) -> Result<FilterBank> {
    check_min_size(params)?;
    params.validate()?;
    let extent = (1u64 << (params.scales - 1)) as f64 * params.sigma0;
    let limit = params.width.min(params.height) as f64 / 2.0;
    if extent > limit {
        return Err(Error::ScaleTooLarge { extent, limit });
    }
    let angles = params.angles();
    let mut filters = Vec::with_capacity(params.scales * params.orientations);
    for j in 0..params.scales {
        for (k, &gamma) in angles.iter().enumerate() {
            filters.push(Filter {
                gamma,
                orientation: k,
                j,
                spectrum: sample_spectrum(params, gamma, j),
            });
        }
    }
    Ok(FilterBank { params: *params, filters })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub a_min: f64,
    pub a_max: f64,
    pub annulus: (f64, f64),
    /// Number of grid frequencies inside the annulus.
    pub points: usize,
}

/// Min and max of `A(w) = sum |psi_hat(w)|^2 + |psi_hat(-w)|^2` over grid
/// frequencies with radius in `[r_lo, r_hi]`.
pub fn littlewood_paley(bank: &FilterBank, annulus: (f64, f64)) -> Result<LpReport> {
    let (lo, hi) = annulus;
    if !(lo > 0.0 && lo < hi && hi <= PI) {
        return Err(Error::InvalidParameter(format!(
            "annulus must satisfy 0 < r_lo < r_hi <= pi, got ({lo}, {hi})"
        )));
    }
    let (w, h) = (bank.params.width, bank.params.height);
    let mut energy = vec![0.0; w * h];
    for f in &bank.filters {
        for (e, v) in energy.iter_mut().zip(f.spectrum.data()) {
            *e += v.norm_sqr();
        }
    }
    let mut a_min = f64::INFINITY;
    let mut a_max = f64::NEG_INFINITY;
    let mut points = 0;
    for y in 0..h {
        let wy = bin_frequency(y, h);
        for x in 0..w {
            let wx = bin_frequency(x, w);
            let r = wx.hypot(wy);
            if r < lo || r > hi {
                continue;
            }
            let mirror = ((h - y) % h) * w + (w - x) % w;
            let a = energy[y * w + x] + energy[mirror];
            a_min = a_min.min(a);
            a_max = a_max.max(a);
            points += 1;
        }
    }
    if points == 0 {
        return Err(Error::EmptyAnnulus { lo, hi });
    }
    Ok(LpReport {
        a_min,
        a_max,
        annulus,
        points,
    })
}
