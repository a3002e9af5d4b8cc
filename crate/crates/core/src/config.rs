//! TOML experiment configuration.
//!
//! Unknown keys are rejected. Every value is validated at parse time and
//! errors carry the key path (and the source line when it can be found).

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::breather::{Density, MeasureSpec, Model, PotentialKind, SingleSiteShape};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, MagneticKind, MagneticSpec};
use crate::ucp::UcpConstants;
use crate::wegner::epsilon_max;

pub const DEFAULT_MESH_PER_UNIT: usize = 16;
pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Spectrum,
    Ucp,
    Lifting,
    Ssf,
    Wegner,
    Ids,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Ucp => "ucp",
            ExperimentKind::Lifting => "lifting",
            ExperimentKind::Ssf => "ssf",
            ExperimentKind::Wegner => "wegner",
            ExperimentKind::Ids => "ids",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [Self::Spectrum, Self::Ucp, Self::Lifting, Self::Ssf, Self::Wegner, Self::Ids]
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config { key: "experiment.kind".into(), message: format!("unknown experiment `{name}`") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityName {
    #[default]
    Uniform,
    TruncatedLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dim: usize,
    #[serde(default)]
    pub shape: SingleSiteShape,
    pub omega_minus: f64,
    pub omega_plus: f64,
    #[serde(default)]
    pub density: DensityName,
    /// Slope of the truncated-linear density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default)]
    pub potential: PotentialKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub box_side: Option<usize>,
    #[serde(rename = "L_list", default, skip_serializing_if = "Option::is_none")]
    pub box_sides: Option<Vec<usize>>,
    #[serde(default = "default_mesh")]
    pub mesh_per_unit: usize,
}

fn default_mesh() -> usize {
    DEFAULT_MESH_PER_UNIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MagneticSection {
    #[serde(default)]
    pub kind: MagneticKind,
    #[serde(default)]
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// Energies for `ids`.
    #[serde(rename = "E_list", default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "default_out")]
    pub out_dir: String,
}

fn default_out() -> String {
    DEFAULT_OUT_DIR.into()
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { master_seed: 0, threads: None, out_dir: default_out() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default)]
    pub magnetic: MagneticSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub run: RunSection,
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.into(), message: message.into() }
}

fn from_invalid(key: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => config_err(key, m),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let key = e.span().map(|s| location(text, s.start)).unwrap_or_else(|| "<toml>".into());
            config_err(&key, e.message().to_string())
        })?;
        cfg.validate().map_err(|e| match e {
            Error::Config { key, message } => match find_line(text, &key) {
                Some(line) => Error::Config { key: format!("{key} (line {line})"), message },
                None => Error::Config { key, message },
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(&path.display().to_string(), format!("cannot read config: {e}")))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { key, message } => Error::Config { key: format!("{}: {key}", path.display()), message },
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<serialize>", e.to_string()))
    }

    pub fn measure(&self) -> Result<MeasureSpec> {
        let m = &self.model;
        let density = match (m.density, m.slope) {
            (DensityName::Uniform, None) => Density::Uniform,
            (DensityName::Uniform, Some(_)) => return Err(config_err("model.slope", "slope only applies to density = \"truncated_linear\"")),
            (DensityName::TruncatedLinear, Some(slope)) => Density::TruncatedLinear { slope },
            (DensityName::TruncatedLinear, None) => return Err(config_err("model.slope", "truncated_linear density needs a slope")),
        };
        MeasureSpec::new(m.omega_minus, m.omega_plus, density).map_err(|e| from_invalid("model.omega_plus", e))
    }

    pub fn magnetic_spec(&self) -> MagneticSpec {
        MagneticSpec { kind: self.magnetic.kind, strength: self.magnetic.strength }
    }

    /// Box sizes: `L_list` if given, else `[L]`.
    pub fn box_sides(&self) -> Vec<usize> {
        match (&self.grid.box_sides, self.grid.box_side) {
            (Some(list), _) => list.clone(),
            (None, Some(l)) => vec![l],
            (None, None) => Vec::new(),
        }
    }

    pub fn model_for(&self, box_side: usize) -> Result<Model> {
        let grid = GridSpec::new(self.model.dim, box_side, self.grid.mesh_per_unit).map_err(|e| from_invalid("grid", e))?;
        Ok(Model { grid, shape: self.model.shape, magnetic: self.magnetic_spec(), potential: self.model.potential })
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.experiment.kind.ok_or_else(|| config_err("experiment.kind", "no experiment kind given"))
    }

    /// `ε` values: `eps_list` if given, else `[eps]`.
    pub fn eps_values(&self) -> Vec<f64> {
        match (&self.experiment.eps_list, self.experiment.eps) {
            (Some(list), _) => list.clone(),
            (None, Some(e)) => vec![e],
            (None, None) => Vec::new(),
        }
    }

    pub fn constants(&self) -> Result<Option<UcpConstants>> {
        match (self.experiment.kappa, self.experiment.m) {
            (None, None) => Ok(None),
            (Some(k), Some(m)) => {
                let b = self.experiment.b.unwrap_or(f64::NAN);
                UcpConstants::given(k, m, b).map(Some).map_err(|e| from_invalid("experiment.kappa", e))
            }
            _ => Err(config_err("experiment.M", "kappa and M must be given together")),
        }
    }

    pub fn require_b(&self) -> Result<f64> {
        self.experiment.b.ok_or_else(|| config_err("experiment.b", "this experiment needs an energy cutoff b"))
    }

    pub fn require_energy(&self) -> Result<f64> {
        self.experiment.energy.ok_or_else(|| config_err("experiment.E", "this experiment needs an energy E"))
    }

    pub fn require_samples(&self) -> Result<usize> {
        match self.experiment.n_samples {
            Some(0) => Err(config_err("experiment.n_samples", "must be positive")),
            Some(n) => Ok(n),
            None => Err(config_err("experiment.n_samples", "this experiment needs n_samples")),
        }
    }

    pub fn require_deltas(&self) -> Result<Vec<f64>> {
        let d = self.experiment.delta_list.clone().unwrap_or_default();
        if d.is_empty() {
            return Err(config_err("experiment.delta_list", "this experiment needs delta_list"));
        }
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.model.dim) {
            return Err(config_err("model.dim", format!("d must be 1, 2 or 3, got {}", self.model.dim)));
        }
        let measure = self.measure()?;
        if self.grid.box_side.is_some() && self.grid.box_sides.is_some() {
            return Err(config_err("grid.L_list", "give either L or L_list, not both"));
        }
        let sides = self.box_sides();
        if sides.is_empty() {
            return Err(config_err("grid.L", "missing box size L (or L_list)"));
        }
        for &l in &sides {
            if l % 2 == 0 || l == 0 {
                return Err(config_err("grid.L", format!("L must be odd and positive, got {l}")));
            }
            self.model_for(l)?;
        }
        if self.run.master_seed > i64::MAX as u64 {
            return Err(config_err("run.master_seed", "TOML integers are signed 64-bit; seed must be ≤ 2^63 − 1"));
        }
        if self.grid.mesh_per_unit == 0 {
            return Err(config_err("grid.mesh_per_unit", "must be positive"));
        }
        if !self.magnetic.strength.is_finite() {
            return Err(config_err("magnetic.strength", "must be finite"));
        }
        if self.magnetic.kind == MagneticKind::None && self.magnetic.strength != 0.0 {
            return Err(config_err("magnetic.strength", "strength needs kind = \"constant_field\""));
        }
        if self.run.threads == Some(0) {
            return Err(config_err("run.threads", "must be positive"));
        }
        let x = &self.experiment;
        for &e in &self.eps_values() {
            if !(e > 0.0 && e < 1.0) {
                return Err(config_err("experiment.eps", format!("need 0 < ε < 1, got {e}")));
            }
        }
        for &d in x.delta_list.iter().flatten() {
            if !(d >= 0.0 && measure.omega_plus + d <= 0.5) {
                return Err(config_err("experiment.delta_list", format!("need 0 ≤ δ ≤ 1/2 − ω₊, got {d}")));
            }
        }
        if let Some(n) = x.n_samples {
            if n == 0 {
                return Err(config_err("experiment.n_samples", "must be positive"));
            }
        }
        let constants = self.constants()?;
        if let (Some(b), Some(e)) = (x.b, x.energy) {
            for &eps in &self.eps_values() {
                if e + eps > b - 1.0 {
                    return Err(config_err("experiment.E", format!("[E−ε, E+ε] must lie in (−∞, b−1]; E + ε = {} > b − 1 = {}", e + eps, b - 1.0)));
                }
            }
        }
        if let Some(c) = &constants {
            let emax = epsilon_max(c, measure.omega_plus)?;
            for &eps in &self.eps_values() {
                if eps > emax {
                    return Err(config_err("experiment.eps", format!("ε = {eps} exceeds ε_max = {emax} for the given κ, M")));
                }
            }
        }
        Ok(())
    }
}

fn location(text: &str, offset: usize) -> String {
    let line = text[..offset.min(text.len())].lines().count().max(1);
    format!("line {line}")
}

fn find_line(text: &str, key: &str) -> Option<usize> {
    let (section, name) = key.split_once('.')?;
    let mut current = "";
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(s) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = s.trim();
        } else if current == section && line.split('=').next().map(str::trim) == Some(name) {
            return Some(i + 1);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
dim = 1
omega_minus = 0.1
omega_plus = 0.4

[grid]
L = 3

[experiment]
kind = "spectrum"
b = 40.0
"#;

    #[test]
    fn minimal_config_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.grid.mesh_per_unit, 16);
        assert_eq!(c.run.master_seed, 0);
        assert_eq!(c.model.shape, SingleSiteShape::Ball);
        assert_eq!(c.box_sides(), vec![3]);
        assert_eq!(c.kind().unwrap(), ExperimentKind::Spectrum);
        assert_eq!(c.magnetic_spec(), MagneticSpec::none());
    }

    #[test]
    fn omega_plus_too_large() {
        let text = MINIMAL.replace("omega_plus = 0.4", "omega_plus = 0.6");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.is_config_error());
        assert!(err.to_string().contains("ω₊ < 1/2"), "{err}");
        assert!(err.to_string().contains("line 5"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("b = 40.0", "b = 40.0\nepsilonn = 0.1");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("epsilonn"), "{err}");
        assert!(err.is_config_error());
    }

    #[test]
    fn round_trip() {
        let text = r#"
[model]
dim = 2
shape = "cube"
omega_minus = 0.05
omega_plus = 0.3
density = "truncated_linear"
slope = 0.5

[grid]
L_list = [3, 5]
mesh_per_unit = 8

[magnetic]
kind = "constant_field"
strength = 1.5

[experiment]
kind = "wegner"
E = 4.0
eps_list = [0.001, 0.002]
b = 20.0
n_samples = 10
kappa = 0.5
M = 1.0

[run]
master_seed = 7
threads = 2
out_dir = "results"
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, again);
        let minimal = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(minimal, ExperimentConfig::from_toml(&minimal.to_toml().unwrap()).unwrap());
    }

    #[test]
    fn cross_field_validation() {
        let bad_window = MINIMAL.replace("b = 40.0", "b = 10.0\nE = 9.5\neps = 0.1");
        assert!(ExperimentConfig::from_toml(&bad_window).is_err());
        let eps_too_big = MINIMAL.replace("b = 40.0", "b = 20.0\nE = 4.0\neps = 0.05\nkappa = 1.0\nM = 1.0");
        let err = ExperimentConfig::from_toml(&eps_too_big).unwrap_err();
        assert!(err.to_string().contains("ε_max"), "{err}");
        let even = MINIMAL.replace("L = 3", "L = 4");
        assert!(ExperimentConfig::from_toml(&even).is_err());
        let both = MINIMAL.replace("L = 3", "L = 3\nL_list = [3]");
        assert!(ExperimentConfig::from_toml(&both).is_err());
        let half = MINIMAL.replace("b = 40.0", "b = 40.0\nkappa = 0.5");
        assert!(ExperimentConfig::from_toml(&half).is_err());
        let syntax = MINIMAL.replace("dim = 1", "dim = ");
        assert!(ExperimentConfig::from_toml(&syntax).unwrap_err().is_config_error());
    }
}
