use serde::{Deserialize, Serialize};

/// Numerical thresholds shared by the spectral, sweep and degeneracy stages.
///
/// Energies are in normalized units (scale `sqrt(J^2 + Delta^2) = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `|Im eps| <= reality` counts as a real level.
    pub reality: f64,
    /// Eigenvalues closer than this form a degenerate cluster.
    pub cluster: f64,
    /// Index assignment is refused at or below this quality.
    pub quality: f64,
    /// Maximal eigenvalue mismatch between the spectra of `H` and `H^dagger`.
    pub pairing: f64,
    /// Rescaling fails when the normalized `<L|R>` drops below this.
    pub rescaling: f64,
    /// Degeneracy gap threshold.
    pub gap: f64,
    /// An EP requires eigenvector overlap above `1 - ep_overlap`.
    pub ep_overlap: f64,
    /// Target parameter accuracy of EP bisection.
    pub ep_parameter: f64,
    /// Initial central-difference step.
    pub fd_step: f64,
    /// Allowed relative disagreement of the Richardson estimate.
    pub fd_relative: f64,
    /// Second-best to best tracking overlap ratio above which a step is ambiguous.
    pub tracking_ratio: f64,
    /// Local gap minima below this are refined as candidate avoided crossings.
    pub avoided_window: f64,
    /// Angle below which `u_-` and `w` are flagged as collinear.
    pub collinear_angle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            reality: 1e-9,
            cluster: 1e-8,
            quality: 1e-6,
            pairing: 1e-4,
            rescaling: 1e-10,
            gap: 1e-8,
            ep_overlap: 1e-4,
            ep_parameter: 1e-8,
            fd_step: 1e-5,
            fd_relative: 1e-5,
            tracking_ratio: 0.5,
            avoided_window: 5e-2,
            collinear_angle: 1e-3,
        }
    }
}

impl Tolerances {
    /// Names of non-positive or non-finite fields.
    pub fn invalid_fields(&self) -> Vec<&'static str> {
        let fields = [
            ("reality", self.reality),
            ("cluster", self.cluster),
            ("quality", self.quality),
            ("pairing", self.pairing),
            ("rescaling", self.rescaling),
            ("gap", self.gap),
            ("ep_overlap", self.ep_overlap),
            ("ep_parameter", self.ep_parameter),
            ("fd_step", self.fd_step),
            ("fd_relative", self.fd_relative),
            ("tracking_ratio", self.tracking_ratio),
            ("avoided_window", self.avoided_window),
            ("collinear_angle", self.collinear_angle),
        ];
        fields.iter().filter(|(_, v)| !(v.is_finite() && *v > 0.0)).map(|(n, _)| *n).collect()
    }
}
