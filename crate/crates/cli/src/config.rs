//! Experiment configuration: a TOML file with a `[model]` table and one
//! optional table per command. Unknown keys are rejected everywhere.

use std::path::Path;

use cylscat::geometry::Bumps;
use cylscat::{End, ModelSpec, PotentialSpec, Profile, ProfileKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub kappa: KappaConfig,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub smatrix: SmatrixConfig,
    #[serde(default)]
    pub propagator: PropagatorSection,
    #[serde(default)]
    pub coherent: CoherentConfig,
    #[serde(default)]
    pub equidist: EquidistConfig,
    #[serde(default)]
    pub resolvent: ResolventConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Sweep list for commands that run at several `h`; defaults to `model.h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ProfileKind,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub half_width: f64,
    /// Bump half-width; the whole of `[-a, a]` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default)]
    pub center: f64,
    pub h: f64,
    #[serde(default)]
    pub origin_offset: f64,
    #[serde(default = "default_guard")]
    pub threshold_guard: f64,
    #[serde(default)]
    pub potential: PotentialConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default)]
    pub v0: Bumps,
    #[serde(default)]
    pub v2: Bumps,
    #[serde(default)]
    pub w: Bumps,
}

fn one() -> f64 {
    1.0
}

fn default_guard() -> f64 {
    cylscat::geometry::DEFAULT_THRESHOLD_GUARD
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec, CliError> {
        let width = self.width.unwrap_or(self.half_width);
        let profile = Profile::new(self.kind, self.amplitude, self.half_width, width, self.center)?;
        let potential =
            PotentialSpec { v0: self.potential.v0.clone(), v2: self.potential.v2.clone(), w: self.potential.w.clone() };
        let mut m = ModelSpec::new(profile, potential, self.h)?;
        m.origin_offset = self.origin_offset;
        m.threshold_guard = self.threshold_guard;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaConfig {
    pub end: End,
    pub theta: f64,
    pub eta: f64,
    pub t_max: f64,
}

impl Default for KappaConfig {
    fn default() -> Self {
        Self { end: End::Left, theta: 1.0, eta: 0.5, t_max: 1e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub end: End,
    pub n_theta: usize,
    pub n_eta: usize,
    pub eta_max: f64,
    pub t_max: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { end: End::Left, n_theta: 32, n_eta: 41, eta_max: 0.95, t_max: 1e3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchingChoice {
    Core,
    Sections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmatrixConfig {
    pub points_per_wavelength: f64,
    pub matching: MatchingChoice,
    /// Report the flux-normalized matrix.
    pub normalized: bool,
    /// Also write the dense matrix.
    pub dense: bool,
}

impl Default for SmatrixConfig {
    fn default() -> Self {
        Self { points_per_wavelength: 60.0, matching: MatchingChoice::Core, normalized: true, dense: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorSection {
    /// Multiplier `psi2` is 1 on `[0, plateau]` and 0 from `top`.
    pub plateau: f64,
    pub top: f64,
    pub b_psi: f64,
    pub spectral_width: f64,
    pub dt_over_h: f64,
}

impl Default for PropagatorSection {
    fn default() -> Self {
        let d = cylscat::propagator::PropagatorConfig::default();
        Self { plateau: 0.35, top: 0.7, b_psi: d.b_psi, spectral_width: d.spectral_width, dt_over_h: d.dt_over_h }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherentConfig {
    pub end: End,
    pub thetas: usize,
    pub etas: Vec<f64>,
}

impl Default for CoherentConfig {
    fn default() -> Self {
        Self { end: End::Left, thetas: 6, etas: vec![-0.4, -0.15, 0.15, 0.4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquidistConfig {
    pub bins: usize,
    /// Monomials `z^1 .. z^max_power` are always evaluated.
    pub max_power: i32,
}

impl Default for EquidistConfig {
    fn default() -> Self {
        Self { bins: 32, max_power: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventConfig {
    pub tau_points: usize,
    pub epsilon: f64,
    pub alpha: f64,
    /// Grid extends this far past `a` on each side.
    pub margin: f64,
    pub layer_width: f64,
    pub strength: f64,
    pub points_per_wavelength: f64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self {
            tau_points: 21,
            epsilon: 0.1,
            alpha: 1.0,
            margin: 40.0,
            layer_width: 18.0,
            strength: 0.5,
            points_per_wavelength: 20.0,
        }
    }
}

/// Pass/fail thresholds; each can be overridden with `--tol name=value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub kappa: f64,
    pub time_reversal: f64,
    pub unitarity: f64,
    pub route: f64,
    pub dichotomy: f64,
    /// Husimi center distance in units of `sqrt(h)`.
    pub fio: f64,
    pub cdf: f64,
    pub absorber: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            kappa: 1e-8,
            time_reversal: 1e-6,
            unitarity: 1e-8,
            route: 1e-2,
            dichotomy: 1e-2,
            fio: 1.5,
            cdf: 0.05,
            absorber: 0.05,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), CliError> {
        let slot = match name {
            "kappa" => &mut self.kappa,
            "time_reversal" => &mut self.time_reversal,
            "unitarity" => &mut self.unitarity,
            "route" => &mut self.route,
            "dichotomy" => &mut self.dichotomy,
            "fio" => &mut self.fio,
            "cdf" => &mut self.cdf,
            "absorber" => &mut self.absorber,
            _ => return Err(CliError::Config(format!("unknown tolerance '{name}'"))),
        };
        if !(value.is_finite() && value > 0.0) {
            return Err(CliError::Config(format!("tolerance {name} must be positive, got {value}")));
        }
        *slot = value;
        Ok(())
    }

    /// Apply a `name=value` override.
    pub fn apply_override(&mut self, text: &str) -> Result<(), CliError> {
        let (name, value) =
            text.split_once('=').ok_or_else(|| CliError::Config(format!("expected name=value, got '{text}'")))?;
        let value: f64 =
            value.trim().parse().map_err(|_| CliError::Config(format!("bad tolerance value in '{text}'")))?;
        self.set(name.trim(), value)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.model.build()?;
        if let Some(hs) = &cfg.h_list {
            check_h_list(hs)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Defaults for a named model, used when no config file is given.
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let model = match name {
            "free" => ModelConfig::new(ProfileKind::Constant, 0.0, 0.1),
            "bulge" => ModelConfig::new(ProfileKind::Bulge, 0.3, 0.05),
            "hourglass" => ModelConfig::new(ProfileKind::Hourglass, -0.2, 0.02),
            _ => return Err(CliError::Config(format!("unknown preset '{name}'"))),
        };
        Ok(Self {
            model,
            kappa: Default::default(),
            domain: Default::default(),
            smatrix: Default::default(),
            propagator: Default::default(),
            coherent: Default::default(),
            equidist: Default::default(),
            resolvent: Default::default(),
            tolerances: Default::default(),
            h_list: None,
        })
    }

    pub fn h_values(&self) -> Vec<f64> {
        self.h_list.clone().unwrap_or_else(|| vec![self.model.h])
    }

    /// SHA-256 of the canonical TOML form of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl ModelConfig {
    fn new(kind: ProfileKind, amplitude: f64, h: f64) -> Self {
        Self {
            kind,
            amplitude,
            half_width: 1.0,
            width: None,
            center: 0.0,
            h,
            origin_offset: 0.0,
            threshold_guard: default_guard(),
            potential: PotentialConfig::default(),
        }
    }
}

pub fn check_h_list(hs: &[f64]) -> Result<(), CliError> {
    if hs.is_empty() {
        return Err(CliError::Config("empty h list".into()));
    }
    if let Some(h) = hs.iter().find(|h| !(h.is_finite() && **h > 0.0 && **h < 1.0)) {
        return Err(CliError::Config(format!("h must lie in (0, 1), got {h}")));
    }
    Ok(())
}

/// Comma-separated list of `h` values.
pub fn parse_h_list(text: &str) -> Result<Vec<f64>, CliError> {
    let hs = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad h value '{t}'"))))
        .collect::<Result<Vec<_>, _>>()?;
    check_h_list(&hs)?;
    Ok(hs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BULGE: &str = r#"
[model]
kind = "bulge"
amplitude = 0.3
half_width = 1.0
h = 0.05
"#;

    #[test]
    fn parses_minimal() {
        let cfg = ExperimentConfig::parse(BULGE).unwrap();
        assert_eq!(cfg.model.kind, ProfileKind::Bulge);
        assert_eq!(cfg.resolvent.tau_points, 21);
        assert_eq!(cfg.h_values(), vec![0.05]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{BULGE}colour = 3\n");
        assert!(matches!(ExperimentConfig::parse(&text), Err(CliError::Config(_))));
        let text = format!("{BULGE}[domain]\nn_thetas = 3\n");
        assert!(matches!(ExperimentConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_model_rejected() {
        let text = BULGE.replace("0.3", "-0.3");
        assert!(matches!(ExperimentConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::parse(BULGE).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.tolerances.apply_override("route=0.02").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert!(b.tolerances.apply_override("nope=1").is_err());
    }

    #[test]
    fn h_list_parsing() {
        assert_eq!(parse_h_list("0.1, 0.05").unwrap(), vec![0.1, 0.05]);
        assert!(parse_h_list("0.1,x").is_err());
        assert!(parse_h_list("2").is_err());
    }
}
