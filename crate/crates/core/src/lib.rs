//! Translation-invariant 2D scattering features and the voxelwise
//! encoding/decoding statistics built on top of them.

pub mod decoding;
pub mod encoding;
pub mod error;
pub mod features;
pub mod fft;
pub mod filterbank;
pub mod raster;
pub mod scattering;
pub mod synth;

pub use error::{Error, Result};
pub use features::{FeatureMatrix, Path};
pub use filterbank::{build_filter_bank, littlewood_paley, make_mother_morlet, Filter, FilterBank, FilterParams, LpReport};
pub use raster::Raster;
pub use scattering::{batch_scatter, energy_profile, feature_paths, scatter, wavelet_modulus, EnergyProfile, Scatterer, ScatteringConfig, ScatteringFeatures};
pub use encoding::{SessionEntry, SessionLabels, VoxelResponses};
pub use decoding::{block_cv_decode, logistic_ovr_fit, DecodeOptions, DecodeResult, LabeledActivity, OvrModel};
pub use synth::{gen_session_labels, gen_texture, gen_voxels, phase_scramble, GroundTruth, Param, PlantCounts, PlantKind, PlantSpec, TextureCorpus, TextureKind, TextureSpec};
