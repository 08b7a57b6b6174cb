use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pseudospec::model::{Arrangement, GainLossConfig, ModelConfig, DEFAULT_MIXED_SPLIT};
use pseudospec::sweep::SweepPlan;
use pseudospec::Tolerances;

/// Everything a run needs; every field has a default so an empty file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub point: PointSection,
    pub sweep: SweepSection,
    pub trace: TraceSection,
    pub oracle: OracleSection,
    pub tolerances: Tolerances,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            point: PointSection::default(),
            sweep: SweepSection::default(),
            trace: TraceSection::default(),
            oracle: OracleSection::default(),
            tolerances: Tolerances::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub arrangement: Arrangement,
    pub n_sites: usize,
    /// Fraction of the staggered amplitude carried by each component in the mixed arrangement.
    pub mixed_split: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { arrangement: Arrangement::Longitudinal, n_sites: 4, mixed_split: DEFAULT_MIXED_SPLIT }
    }
}

/// A single parameter point, either on the fixed-scale slice (`j_tilde`,
/// `gamma_tilde`) or in physical units (`delta`, `coupling` plus a staggered
/// `gamma` or explicit per-site `gamma_z`, `gamma_x`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointSection {
    pub j_tilde: Option<f64>,
    pub gamma_tilde: Option<f64>,
    pub delta: Option<f64>,
    pub coupling: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_z: Option<Vec<f64>>,
    pub gamma_x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub j_start: f64,
    pub j_stop: f64,
    pub j_points: usize,
    pub gamma_tilde: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { j_start: 0.0005, j_stop: 0.9995, j_points: 1000, gamma_tilde: vec![0.0, 0.2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    /// Diabolical crossings of the sweep at this `gamma~` seed the traces.
    pub seed_gamma_tilde: f64,
    /// Keep only seeds within 1e-2 of one of these `J~` values; empty keeps all.
    pub seed_j_tilde: Vec<f64>,
    pub step: f64,
    pub max_points: usize,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self { seed_gamma_tilde: 0.0, seed_j_tilde: Vec::new(), step: 0.01, max_points: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub samples: usize,
    pub n_sites: usize,
    pub seed: u64,
    /// Allowed spectrum mismatch relative to `sqrt(Delta^2 + J^2)`.
    pub spectrum_tolerance: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { samples: 10, n_sites: 4, seed: 0, spectrum_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("pseudospec-out") }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = self.tolerances.invalid_fields();
        if !bad.is_empty() {
            return Err(ConfigError(format!("tolerances must be positive and finite: {}", bad.join(", "))));
        }
        if self.model.n_sites == 0 || self.model.n_sites > 6 {
            return Err(ConfigError(format!("model.n_sites must be in 1..=6, got {}", self.model.n_sites)));
        }
        if !(self.model.mixed_split.is_finite() && self.model.mixed_split > 0.0 && self.model.mixed_split < 1.0) {
            return Err(ConfigError(format!("model.mixed_split must lie in (0, 1), got {}", self.model.mixed_split)));
        }
        if !(self.trace.step > 0.0 && self.trace.step.is_finite()) || self.trace.max_points == 0 {
            return Err(ConfigError("trace.step must be positive and trace.max_points non-zero".into()));
        }
        if self.oracle.n_sites < 2 || self.oracle.n_sites > 6 {
            return Err(ConfigError(format!("oracle.n_sites must be in 2..=6, got {}", self.oracle.n_sites)));
        }
        if !(self.oracle.spectrum_tolerance > 0.0 && self.oracle.spectrum_tolerance.is_finite()) {
            return Err(ConfigError("oracle.spectrum_tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn sweep_plan(&self) -> SweepPlan {
        let mut plan = SweepPlan::uniform(
            self.model.arrangement,
            self.model.n_sites,
            self.sweep.j_start,
            self.sweep.j_stop,
            self.sweep.j_points,
            self.sweep.gamma_tilde.clone(),
        );
        plan.mixed_split = self.model.mixed_split;
        plan
    }

    /// Model configuration of the `[point]` section.
    pub fn point_model(&self) -> Result<ModelConfig, ConfigError> {
        let p = &self.point;
        let m = &self.model;
        let physical = p.delta.is_some() || p.coupling.is_some() || p.gamma.is_some() || p.gamma_z.is_some() || p.gamma_x.is_some();
        let err = |e: pseudospec::ModelError| ConfigError(format!("point: {e}"));
        if !physical {
            return ModelConfig::at_normalized(
                m.arrangement,
                m.n_sites,
                p.j_tilde.unwrap_or(0.0),
                p.gamma_tilde.unwrap_or(0.0),
                m.mixed_split,
            )
            .map_err(err);
        }
        if p.j_tilde.is_some() || p.gamma_tilde.is_some() {
            return Err(ConfigError("point: give either j_tilde/gamma_tilde or physical parameters, not both".into()));
        }
        let (Some(delta), Some(coupling)) = (p.delta, p.coupling) else {
            return Err(ConfigError("point: physical parameters need both delta and coupling".into()));
        };
        let gain_loss = match (&p.gamma_z, &p.gamma_x, p.gamma) {
            (None, None, gamma) => {
                pseudospec::model::staggered_config_with_split(m.arrangement, m.n_sites, gamma.unwrap_or(0.0), m.mixed_split)
                    .map_err(err)?
            }
            (gz, gx, None) => {
                let zeros = vec![0.0; m.n_sites];
                let gz = gz.clone().unwrap_or_else(|| zeros.clone());
                let gx = gx.clone().unwrap_or(zeros);
                if gz.len() != m.n_sites {
                    return Err(ConfigError(format!("point.gamma_z has {} entries, model.n_sites is {}", gz.len(), m.n_sites)));
                }
                GainLossConfig::new(m.arrangement, gz, gx).map_err(err)?
            }
            _ => return Err(ConfigError("point: gamma conflicts with explicit gamma_z/gamma_x".into())),
        };
        ModelConfig::new(gain_loss, delta, coupling).map_err(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_field_is_named() {
        let e = RunConfig::parse("[model]\nsites = 4\n").unwrap_err();
        assert!(e.0.contains("sites"), "{}", e.0);
        assert!(e.0.contains("line 2"), "{}", e.0);
    }

    #[test]
    fn negative_tolerance_rejected() {
        let e = RunConfig::parse("[tolerances]\ngap = -1.0\n").unwrap_err();
        assert!(e.0.contains("gap"), "{}", e.0);
    }

    #[test]
    fn point_modes() {
        let cfg = RunConfig::parse("[point]\nj_tilde = 0.6\ngamma_tilde = 0.1\n").unwrap();
        let m = cfg.point_model().unwrap();
        assert!((m.coupling - 0.6).abs() < 1e-15 && (m.delta - 0.8).abs() < 1e-15);

        let cfg = RunConfig::parse("[model]\nn_sites = 2\n[point]\ndelta = 1.0\ncoupling = 0.0\ngamma_z = [1.0, -1.0]\n").unwrap();
        assert_eq!(cfg.point_model().unwrap().gain_loss.gamma_z(), &[1.0, -1.0]);

        let cfg = RunConfig::parse("[point]\nj_tilde = 0.5\ndelta = 1.0\n").unwrap();
        assert!(cfg.point_model().is_err());
    }
}
