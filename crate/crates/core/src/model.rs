//! Non-Hermitian transverse-field Ising chain with PT-symmetric gain and loss.
//!
//! `H = sum_j Delta X_j - J sum_j Z_j Z_{j+1} + i sum_j (gz_j Z_j + gx_j X_j)`
//! on an open chain.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::operator_algebra::{
    parity_operator, pseudo_hermiticity_residual, to_dense, u_operator, DenseOperator, OperatorExpr,
    Pauli, PauliString,
};

/// Residual bound a cataloged pseudo-metric must meet.
pub const METRIC_RESIDUAL_TOL: f64 = 1e-12;

/// Default share of the staggered amplitude placed on each component in the mixed arrangement.
pub const DEFAULT_MIXED_SPLIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arrangement {
    Longitudinal,
    Transversal,
    Mixed,
}

impl fmt::Display for Arrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arrangement::Longitudinal => "longitudinal",
            Arrangement::Transversal => "transversal",
            Arrangement::Mixed => "mixed",
        })
    }
}

impl FromStr for Arrangement {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "longitudinal" | "z" => Ok(Arrangement::Longitudinal),
            "transversal" | "transverse" | "x" => Ok(Arrangement::Transversal),
            "mixed" | "xz" => Ok(Arrangement::Mixed),
            other => Err(ModelError::InvalidParameter(format!("unknown arrangement {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricLabel {
    P,
    U,
    PU,
}

impl MetricLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricLabel::P => "P",
            MetricLabel::U => "U",
            MetricLabel::PU => "PU",
        }
    }
}

impl fmt::Display for MetricLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A parameter-independent pseudo-metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricDescriptor {
    pub label: MetricLabel,
    pub operator: DenseOperator,
}

impl MetricDescriptor {
    pub fn new(label: MetricLabel, n_sites: usize) -> Result<Self, ModelError> {
        let operator = match label {
            MetricLabel::P => parity_operator(n_sites)?,
            MetricLabel::U => u_operator(n_sites)?,
            MetricLabel::PU => &parity_operator(n_sites)? * &u_operator(n_sites)?,
        };
        Ok(Self { label, operator })
    }
}

/// Per-site gain/loss coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainLossConfig {
    n_sites: usize,
    gamma_z: Vec<f64>,
    gamma_x: Vec<f64>,
    kind: Arrangement,
}

impl GainLossConfig {
    /// Validates the PT mirror constraint and consistency with `kind`.
    ///
    /// A mixed arrangement with both components identically zero is accepted
    /// as its Hermitian limit.
    pub fn new(kind: Arrangement, gamma_z: Vec<f64>, gamma_x: Vec<f64>) -> Result<Self, ModelError> {
        let n_sites = gamma_z.len();
        if n_sites == 0 {
            return Err(ModelError::InvalidParameter("chain needs at least one site".into()));
        }
        if gamma_x.len() != n_sites {
            return Err(ModelError::LengthMismatch { expected: n_sites, found: gamma_x.len() });
        }
        for (component, g) in [('z', &gamma_z), ('x', &gamma_x)] {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::InvalidParameter(format!("non-finite gamma_{component}")));
            }
            for j in 0..n_sites {
                let mirror = g[n_sites - 1 - j];
                if (g[j] + mirror).abs() > 1e-14 * (1.0 + g[j].abs()) {
                    return Err(ModelError::PtViolation { component, site: j + 1 });
                }
            }
        }
        let z_zero = gamma_z.iter().all(|v| *v == 0.0);
        let x_zero = gamma_x.iter().all(|v| *v == 0.0);
        let ok = match kind {
            Arrangement::Longitudinal => x_zero,
            Arrangement::Transversal => z_zero,
            Arrangement::Mixed => z_zero == x_zero,
        };
        if !ok {
            return Err(ModelError::KindMismatch(kind.to_string()));
        }
        Ok(Self { n_sites, gamma_z, gamma_x, kind })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn gamma_z(&self) -> &[f64] {
        &self.gamma_z
    }

    pub fn gamma_x(&self) -> &[f64] {
        &self.gamma_x
    }

    pub fn kind(&self) -> Arrangement {
        self.kind
    }

    /// `max_j (|gz_j| + |gx_j|)`; equals the staggering amplitude for staggered configs.
    pub fn amplitude(&self) -> f64 {
        self.gamma_z
            .iter()
            .zip(&self.gamma_x)
            .map(|(z, x)| z.abs() + x.abs())
            .fold(0.0, f64::max)
    }

    /// Same pattern with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n_sites: self.n_sites,
            gamma_z: self.gamma_z.iter().map(|v| v * factor).collect(),
            gamma_x: self.gamma_x.iter().map(|v| v * factor).collect(),
            kind: self.kind,
        }
    }
}

/// Staggered pattern `gamma * (-1)^(j-1)` with the default mixed split.
pub fn staggered_config(kind: Arrangement, n_sites: usize, gamma: f64) -> Result<GainLossConfig, ModelError> {
    staggered_config_with_split(kind, n_sites, gamma, DEFAULT_MIXED_SPLIT)
}

pub fn staggered_config_with_split(
    kind: Arrangement,
    n_sites: usize,
    gamma: f64,
    mixed_split: f64,
) -> Result<GainLossConfig, ModelError> {
    if n_sites == 0 || n_sites % 2 == 1 {
        return Err(ModelError::OddChain(n_sites));
    }
    if !gamma.is_finite() || !mixed_split.is_finite() {
        return Err(ModelError::InvalidParameter("non-finite gamma".into()));
    }
    let stagger: Vec<f64> = (0..n_sites).map(|j| if j % 2 == 0 { gamma } else { -gamma }).collect();
    let zeros = vec![0.0; n_sites];
    let (gz, gx) = match kind {
        Arrangement::Longitudinal => (stagger, zeros),
        Arrangement::Transversal => (zeros, stagger),
        Arrangement::Mixed => {
            let s: Vec<f64> = stagger.iter().map(|v| v * mixed_split).collect();
            (s.clone(), s)
        }
    };
    GainLossConfig::new(kind, gz, gx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub gain_loss: GainLossConfig,
    /// Transverse field.
    pub delta: f64,
    /// Ising coupling.
    pub coupling: f64,
}

impl ModelConfig {
    pub fn new(gain_loss: GainLossConfig, delta: f64, coupling: f64) -> Result<Self, ModelError> {
        if !delta.is_finite() || !coupling.is_finite() || delta < 0.0 {
            return Err(ModelError::InvalidParameter(format!("delta={delta}, coupling={coupling}")));
        }
        if delta * delta + coupling * coupling == 0.0 {
            return Err(ModelError::ZeroScale);
        }
        Ok(Self { gain_loss, delta, coupling })
    }

    /// Fixed-scale point: `Delta = sqrt(1 - J~^2)`, `J = J~`, staggered amplitude `gamma~`.
    pub fn at_normalized(
        kind: Arrangement,
        n_sites: usize,
        j_tilde: f64,
        gamma_tilde: f64,
        mixed_split: f64,
    ) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&j_tilde) {
            return Err(ModelError::InvalidParameter(format!("j_tilde {j_tilde} outside [0, 1]")));
        }
        let gl = staggered_config_with_split(kind, n_sites, gamma_tilde, mixed_split)?;
        Self::new(gl, (1.0 - j_tilde * j_tilde).max(0.0).sqrt(), j_tilde)
    }

    pub fn n_sites(&self) -> usize {
        self.gain_loss.n_sites()
    }

    pub fn kind(&self) -> Arrangement {
        self.gain_loss.kind()
    }

    pub fn scale(&self) -> f64 {
        self.delta.hypot(self.coupling)
    }
}

/// Normalized coordinates of a model point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalized {
    pub j_tilde: f64,
    pub gamma_tilde: f64,
    pub scale: f64,
}

pub fn normalize(cfg: &ModelConfig) -> Result<Normalized, ModelError> {
    let scale = cfg.scale();
    if scale == 0.0 {
        return Err(ModelError::ZeroScale);
    }
    Ok(Normalized {
        j_tilde: cfg.coupling / scale,
        gamma_tilde: cfg.gain_loss.amplitude() / scale,
        scale,
    })
}

fn one() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

fn field_expr(n_sites: usize, letter: Pauli, coeffs: &[f64]) -> Result<OperatorExpr, ModelError> {
    let mut expr = OperatorExpr::new();
    for (j, &k) in coeffs.iter().enumerate() {
        if k != 0.0 {
            expr.push(PauliString::single_site(Complex64::new(k, 0.0), letter, j + 1, n_sites)?)?;
        }
    }
    Ok(expr)
}

fn bond_expr(n_sites: usize) -> Result<OperatorExpr, ModelError> {
    let mut expr = OperatorExpr::new();
    for j in 0..n_sites.saturating_sub(1) {
        let mut letters = vec![Pauli::I; n_sites];
        letters[j] = Pauli::Z;
        letters[j + 1] = Pauli::Z;
        expr.push(PauliString::new(one(), letters)?)?;
    }
    Ok(expr)
}

/// Dense matrix of `H0 + H_nh` with open boundaries.
pub fn build_hamiltonian(cfg: &ModelConfig) -> Result<DenseOperator, ModelError> {
    let n = cfg.n_sites();
    let parts = HamiltonianParts::new(n, cfg.gain_loss.gamma_z(), cfg.gain_loss.gamma_x())?;
    Ok(parts.assemble(cfg.delta, cfg.coupling, 1.0))
}

/// `Delta * fields - J * bonds + i * g * gain_loss`, with the pieces held dense.
#[derive(Debug, Clone)]
pub(crate) struct HamiltonianParts {
    fields: DenseOperator,
    bonds: DenseOperator,
    gain_loss: DenseOperator,
}

impl HamiltonianParts {
    pub(crate) fn new(n_sites: usize, gamma_z: &[f64], gamma_x: &[f64]) -> Result<Self, ModelError> {
        let fields = to_dense(&field_expr(n_sites, Pauli::X, &vec![1.0; n_sites])?, n_sites)?;
        let bonds = to_dense(&bond_expr(n_sites)?, n_sites)?;
        let nh = field_expr(n_sites, Pauli::Z, gamma_z)?.sum(&field_expr(n_sites, Pauli::X, gamma_x)?)?;
        let gain_loss = to_dense(&nh, n_sites)?;
        Ok(Self { fields, bonds, gain_loss })
    }

    pub(crate) fn assemble(&self, delta: f64, coupling: f64, gain: f64) -> DenseOperator {
        let m = self.fields.matrix() * Complex64::new(delta, 0.0)
            - self.bonds.matrix() * Complex64::new(coupling, 0.0)
            + self.gain_loss.matrix() * Complex64::new(0.0, gain);
        DenseOperator::from_matrix(m).expect("finite 2^N operator")
    }
}

/// Hermitian part `H0` alone.
pub fn build_hermitian_part(n_sites: usize, delta: f64, coupling: f64) -> Result<DenseOperator, ModelError> {
    let zeros = vec![0.0; n_sites];
    Ok(HamiltonianParts::new(n_sites, &zeros, &zeros)?.assemble(delta, coupling, 0.0))
}

fn catalog_labels(kind: Arrangement) -> &'static [MetricLabel] {
    match kind {
        Arrangement::Longitudinal => &[MetricLabel::P, MetricLabel::U],
        Arrangement::Transversal => &[MetricLabel::P, MetricLabel::PU],
        Arrangement::Mixed => &[MetricLabel::P],
    }
}

/// Parameter-independent pseudo-metrics of the arrangement, each checked against `H(cfg)`.
pub fn pseudo_metric_catalog(cfg: &ModelConfig) -> Result<Vec<MetricDescriptor>, ModelError> {
    let h = build_hamiltonian(cfg)?;
    catalog_labels(cfg.kind())
        .iter()
        .map(|&label| {
            let metric = MetricDescriptor::new(label, cfg.n_sites())?;
            let residual = pseudo_hermiticity_residual(&h, &metric.operator)?;
            if residual > METRIC_RESIDUAL_TOL {
                return Err(ModelError::MetricCheckFailed { label: label.to_string(), residual });
            }
            Ok(metric)
        })
        .collect()
}

/// Staggered model on the fixed-scale slice `sqrt(J^2 + Delta^2) = 1`, as a
/// function of `(J~, gamma~)`.
#[derive(Debug, Clone)]
pub struct ModelFamily {
    kind: Arrangement,
    n_sites: usize,
    mixed_split: f64,
    parts: HamiltonianParts,
    catalog: Vec<MetricDescriptor>,
}

impl ModelFamily {
    pub fn new(kind: Arrangement, n_sites: usize) -> Result<Self, ModelError> {
        Self::with_split(kind, n_sites, DEFAULT_MIXED_SPLIT)
    }

    pub fn with_split(kind: Arrangement, n_sites: usize, mixed_split: f64) -> Result<Self, ModelError> {
        let unit = staggered_config_with_split(kind, n_sites, 1.0, mixed_split)?;
        let parts = HamiltonianParts::new(n_sites, unit.gamma_z(), unit.gamma_x())?;
        // validate the catalog away from any special point
        let probe = ModelConfig::at_normalized(kind, n_sites, 0.437, 0.291, mixed_split)?;
        let catalog = pseudo_metric_catalog(&probe)?;
        Ok(Self { kind, n_sites, mixed_split, parts, catalog })
    }

    pub fn kind(&self) -> Arrangement {
        self.kind
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn mixed_split(&self) -> f64 {
        self.mixed_split
    }

    pub fn catalog(&self) -> &[MetricDescriptor] {
        &self.catalog
    }

    pub fn config_at(&self, j_tilde: f64, gamma_tilde: f64) -> Result<ModelConfig, ModelError> {
        ModelConfig::at_normalized(self.kind, self.n_sites, j_tilde, gamma_tilde, self.mixed_split)
    }

    /// `H(J~, gamma~)`; `J~` outside `[0, 1]` is clamped for the field term.
    pub fn hamiltonian(&self, j_tilde: f64, gamma_tilde: f64) -> DenseOperator {
        let delta = (1.0 - j_tilde * j_tilde).max(0.0).sqrt();
        self.parts.assemble(delta, j_tilde, gamma_tilde)
    }
}
