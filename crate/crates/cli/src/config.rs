use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("unsupported schema version {found}, expected {SCHEMA_VERSION}")]
    Version { found: u32 },
    #[error("kind {0} needs a seed")]
    MissingSeed(&'static str),
    #[error("parameter {name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("parameter {name}: {msg}")]
    Invalid { name: &'static str, msg: String },
    #[error("missing input file {0}")]
    MissingInput(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    KamRun,
    GevreyLadder,
    RenormRun,
    DcScan,
    BracketEstimate,
    HomologicalBench,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::KamRun => "kam-run",
            Kind::GevreyLadder => "gevrey-ladder",
            Kind::RenormRun => "renorm-run",
            Kind::DcScan => "dc-scan",
            Kind::BracketEstimate => "bracket-estimate",
            Kind::HomologicalBench => "homological-bench",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(self, Kind::BracketEstimate | Kind::HomologicalBench)
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Io {
    /// Coefficient file, resolved against the config's directory.
    pub input: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub kind: Kind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub io: Io,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, Option<PathBuf>), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::parse(&text)?;
        let input = match &cfg.io.input {
            Some(p) => {
                let full = if p.is_absolute() {
                    p.clone()
                } else {
                    path.parent().unwrap_or(Path::new(".")).join(p)
                };
                if !full.is_file() {
                    return Err(ConfigError::MissingInput(full));
                }
                Some(full)
            }
            None => None,
        };
        Ok((cfg, input))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(ConfigError::Version { found: cfg.schema });
        }
        if cfg.kind.stochastic() && cfg.seed.is_none() {
            return Err(ConfigError::MissingSeed(cfg.kind.name()));
        }
        if !(cfg.params.is_null() || cfg.params.is_object()) {
            return Err(ConfigError::Schema("params must be an object".into()));
        }
        Ok(cfg)
    }

    pub fn params<T: DeserializeOwned + Default>(&self) -> Result<T, ConfigError> {
        if self.params.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.params.clone()).map_err(|e| ConfigError::Schema(format!("params: {e}")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

pub fn positive(name: &'static str, value: f64) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::NotPositive { name, value })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    Scalar,
    Su2,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KamRunParams {
    pub alpha: String,
    pub reference: Reference,
    /// Defaults to 2 for the scalar reference and 10 for SU(2).
    pub rho: Option<f64>,
    pub h0: f64,
    pub eps0: f64,
    /// |G|_{h_0} as a fraction of ε_0.
    pub eps_fraction: f64,
    pub eps_stop: f64,
    pub max_steps: usize,
    /// Eigenphases of A; required with an input coefficient file.
    pub phases: Option<Vec<f64>>,
}

impl Default for KamRunParams {
    fn default() -> Self {
        KamRunParams {
            alpha: "golden".into(),
            reference: Reference::Scalar,
            rho: None,
            h0: 0.5,
            eps0: 1e-12,
            eps_fraction: 0.9,
            eps_stop: 1e-14,
            max_steps: 400,
            phases: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GevreyParams {
    pub rho: f64,
    pub l: f64,
    pub k_cap: i64,
    pub pattern: Vec<f64>,
    pub h0: f64,
    pub delta: f64,
    pub levels: usize,
    /// Inverse-ladder constant; defaults to 2L.
    pub l_inverse: Option<f64>,
    pub max_r: usize,
    pub min_r2: f64,
    pub min_ratio: f64,
    pub adversarial: bool,
}

impl Default for GevreyParams {
    fn default() -> Self {
        GevreyParams {
            rho: 2.0,
            l: 8.0 * std::f64::consts::PI,
            k_cap: 512,
            pattern: vec![1.0, -1.0],
            h0: 0.005,
            delta: 0.8,
            levels: 6,
            l_inverse: None,
            max_r: 6,
            min_r2: 0.98,
            min_ratio: 1.5,
            adversarial: true,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormParams {
    pub alpha: String,
    /// Amplitude of the cos cocycle exp(2πε cos(2πx) X).
    pub eps: f64,
    pub m_max: usize,
    pub path_tol: f64,
}

impl Default for RenormParams {
    fn default() -> Self {
        RenormParams {
            alpha: "golden".into(),
            eps: 0.05,
            m_max: 4,
            path_tol: qpcocycle::renormalization::PATH_TOL,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcParams {
    pub alpha: String,
    pub tau: f64,
    pub k_cut: i64,
}

impl Default for DcParams {
    fn default() -> Self {
        DcParams {
            alpha: "golden".into(),
            tau: 1.0,
            k_cut: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BracketMap {
    HaarConstant,
    Character,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BracketParams {
    pub map: BracketMap,
    pub n: usize,
    pub samples: usize,
    /// Relative tolerance against 1/√2 for constant U(2) maps.
    pub rel_tol: f64,
}

impl Default for BracketParams {
    fn default() -> Self {
        BracketParams {
            map: BracketMap::HaarConstant,
            n: 2,
            samples: 1000,
            rel_tol: 0.05,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomologicalParams {
    pub alpha: String,
    pub count: usize,
    pub n_max: usize,
    pub modes: i64,
    pub kappa: f64,
    pub tol: f64,
}

impl Default for HomologicalParams {
    fn default() -> Self {
        HomologicalParams {
            alpha: "golden".into(),
            count: 200,
            n_max: 4,
            modes: 64,
            kappa: 0.5,
            tol: 1e-11,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_without_seed_is_rejected() {
        let e = ExperimentConfig::parse(r#"{"schema": 1, "kind": "bracket-estimate"}"#).unwrap_err();
        assert!(matches!(e, ConfigError::MissingSeed("bracket-estimate")));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let e = ExperimentConfig::parse(r#"{"schema": 2, "kind": "dc-scan"}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Version { found: 2 }));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::parse(r#"{"schema": 1, "kind": "dc-scan", "extra": 1}"#).is_err());
        let cfg = ExperimentConfig::parse(r#"{"schema": 1, "kind": "dc-scan", "params": {"taux": 1}}"#).unwrap();
        assert!(cfg.params::<DcParams>().is_err());
    }

    #[test]
    fn defaults_fill_missing_params() {
        let cfg = ExperimentConfig::parse(r#"{"schema": 1, "kind": "dc-scan", "params": {"alpha": "1/2"}}"#).unwrap();
        let p: DcParams = cfg.params().unwrap();
        assert_eq!((p.alpha.as_str(), p.tau, p.k_cut), ("1/2", 1.0, 1000));
    }

    #[test]
    fn positive_rejects_zero_and_nan() {
        assert!(positive("tol", 0.0).is_err());
        assert!(positive("tol", f64::NAN).is_err());
        assert_eq!(positive("tol", 1e-3).unwrap(), 1e-3);
    }
}
