//! Biorthogonal spectra, per-metric topological indices and degeneracy
//! classification for pseudo-Hermitian spin chains.

pub mod degeneracy;
pub mod error;
pub mod model;
pub mod operator_algebra;
pub mod oracle;
pub mod spectral;
pub mod sweep;
pub mod tolerances;

pub use degeneracy::{
    check_zero_condition, classify_crossing, detect_events, locate_ep_1d, project_hamiltonian, trace_dp_manifold,
    Classification, CrossingEvent, EpLocation, ManifoldTrace, ParamPoint, ParametricFamily, ProjectedHamiltonian,
    Termination,
};
pub use num_complex::Complex64;

pub use error::{DegeneracyError, ErrorName, ModelError, OperatorError, SpectralError, SweepError};
pub use model::{Arrangement, GainLossConfig, MetricDescriptor, MetricLabel, ModelConfig, ModelFamily};
pub use operator_algebra::{DenseOperator, OperatorExpr, Pauli, PauliString};
pub use spectral::{analyze_point, biorthogonal_eig, BiorthogonalEigensystem, LevelIndex, PointSpectrum};
pub use sweep::{run_sweep, GammaSweep, SweepPlan, TrackedBand};
pub use tolerances::Tolerances;
