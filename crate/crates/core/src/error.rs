use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("raster too small for mother wavelet: {width}x{height} (need at least 8x8)")]
    RasterTooSmall { width: usize, height: usize },

    #[error("J too large for image size: 2^(J-1)*sigma0 = {extent} exceeds {limit}")]
    ScaleTooLarge { extent: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite image")]
    NonFiniteImage,

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("annulus ({lo}, {hi}) contains no grid points")]
    EmptyAnnulus { lo: f64, hi: f64 },

    #[error("degenerate target: baseline sum of squares is zero")]
    DegenerateTarget,

    #[error("degenerate: identical samples")]
    IdenticalSamples,

    #[error("too few non-zero differences: {0} (need at least 5)")]
    TooFewDifferences(usize),

    #[error("rank-deficient design: collinear regressors {0:?}")]
    RankDeficient(Vec<String>),

    #[error("misaligned ids: {0}")]
    MisalignedIds(String),

    #[error("session {session} has {count} images (need at least 2)")]
    SmallSession { session: u32, count: usize },

    #[error("planted signal has zero variance for voxel {0}")]
    ZeroSignalVariance(String),
}

pub type Result<T> = std::result::Result<T, Error>;
