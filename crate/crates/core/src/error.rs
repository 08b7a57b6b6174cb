use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("pauli string has no sites")]
    EmptyString,
    #[error("non-finite coefficient or matrix entry")]
    NonFinite,
    #[error("invalid pauli letter {0:?}")]
    BadLetter(char),
    #[error("site {site} outside chain of {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },
    #[error("SiteCountMismatch: expected {expected} sites, found {found}")]
    SiteCountMismatch { expected: usize, found: usize },
    #[error("matrix of shape {0}x{1} is not a 2^N square operator")]
    BadDimension(usize, usize),
    #[error("unsupported chain length {0}")]
    UnsupportedSize(usize),
    #[error("SingularMetric: pseudo-metric is numerically singular")]
    SingularMetric,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("OddChain: staggered gain/loss on {0} sites breaks the mirror constraint")]
    OddChain(usize),
    #[error("PT constraint violated for gamma_{component} at site {site}")]
    PtViolation { component: char, site: usize },
    #[error("gain/loss pattern does not match arrangement {0}")]
    KindMismatch(String),
    #[error("expected {expected} per-site values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("ZeroScale: delta = coupling = 0")]
    ZeroScale,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("metric {label} failed the pseudo-Hermiticity check (residual {residual:e})")]
    MetricCheckFailed { label: String, residual: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("PairingFailure: eigenvalue {eigenvalue} of H has no partner in the adjoint spectrum (distance {distance:e})")]
    PairingFailure { eigenvalue: String, distance: f64 },
    #[error("DefectiveMatrix: {0}")]
    DefectiveMatrix(String),
    #[error("GramSingular: pseudo-metric Gram matrix of a degenerate cluster is singular (rcond {0:e})")]
    GramSingular(f64),
    #[error("ComplexEigenvalue: level {level} has Im = {imag:e}")]
    ComplexEigenvalue { level: usize, imag: f64 },
    #[error("NearException: level {level} has quality {quality:e}")]
    NearException { level: usize, quality: f64 },
    #[error("level {0} out of range")]
    LevelOutOfRange(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite matrix")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
    #[error("AmbiguousTracking: level {level} overlap ratio {ratio:.3}")]
    AmbiguousTracking { level: usize, ratio: f64 },
    #[error("nothing to export")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DegeneracyError {
    #[error("UnresolvedClassification: {0}")]
    UnresolvedClassification(String),
    #[error("PrecisionLoss: finite-difference estimates disagree by {0:e}")]
    PrecisionLoss(f64),
    #[error("CorrectorDivergence: {0}")]
    CorrectorDivergence(String),
    #[error("NoTransition: both bracket ends agree on reality")]
    NoTransition,
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("level pair could not be identified: {0}")]
    LostPair(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

/// Variant name without payload, for diagnostics and exit reporting.
pub trait ErrorName {
    fn name(&self) -> &'static str;
}

impl ErrorName for SpectralError {
    fn name(&self) -> &'static str {
        match self {
            SpectralError::PairingFailure { .. } => "PairingFailure",
            SpectralError::DefectiveMatrix(_) => "DefectiveMatrix",
            SpectralError::GramSingular(_) => "GramSingular",
            SpectralError::ComplexEigenvalue { .. } => "ComplexEigenvalue",
            SpectralError::NearException { .. } => "NearException",
            SpectralError::LevelOutOfRange(_) => "LevelOutOfRange",
            SpectralError::DimensionMismatch(..) => "DimensionMismatch",
            SpectralError::NonFinite => "NonFinite",
        }
    }
}

impl ErrorName for OperatorError {
    fn name(&self) -> &'static str {
        match self {
            OperatorError::SiteCountMismatch { .. } => "SiteCountMismatch",
            OperatorError::SingularMetric => "SingularMetric",
            _ => "OperatorError",
        }
    }
}

impl ErrorName for ModelError {
    fn name(&self) -> &'static str {
        match self {
            ModelError::OddChain(_) => "OddChain",
            ModelError::ZeroScale => "ZeroScale",
            ModelError::Operator(e) => e.name(),
            _ => "ModelError",
        }
    }
}

impl ErrorName for SweepError {
    fn name(&self) -> &'static str {
        match self {
            SweepError::AmbiguousTracking { .. } => "AmbiguousTracking",
            SweepError::Model(e) => e.name(),
            SweepError::Spectral(e) => e.name(),
            _ => "SweepError",
        }
    }
}

impl ErrorName for DegeneracyError {
    fn name(&self) -> &'static str {
        match self {
            DegeneracyError::UnresolvedClassification(_) => "UnresolvedClassification",
            DegeneracyError::PrecisionLoss(_) => "PrecisionLoss",
            DegeneracyError::CorrectorDivergence(_) => "CorrectorDivergence",
            DegeneracyError::NoTransition => "NoTransition",
            DegeneracyError::InvalidSeed(_) => "InvalidSeed",
            DegeneracyError::LostPair(_) => "LostPair",
            DegeneracyError::Model(e) => e.name(),
            DegeneracyError::Spectral(e) => e.name(),
            DegeneracyError::Sweep(e) => e.name(),
        }
    }
}
