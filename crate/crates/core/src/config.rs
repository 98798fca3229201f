//! Run configuration: TOML with fixed sections, canonical re-serialization and a content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolve::{EvolveConfig, InitialSpec};
use crate::picard::PicardConfig;
use crate::state::{TransportModel, ViscosityLaw};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub eps0: f64,
    pub eta0: f64,
    pub a1: f64,
    pub a2: f64,
    /// `"conformal"` (`eta0 theta^3`) or `"power"` with `exponent`.
    pub law: String,
    pub exponent: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            eps0: 1.0,
            eta0: 1.0,
            a1: 6.0,
            a2: 4.0,
            law: "conformal".into(),
            exponent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub dealias: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 16, dealias: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub cfl: f64,
    pub t_end: f64,
    pub cadence: usize,
    pub r: f64,
    pub eps_floor: f64,
    pub drift_limit: f64,
    pub renormalize: bool,
    pub steps: Option<usize>,
    pub a0_diagnostics: bool,
}

impl Default for EvolveSection {
    fn default() -> Self {
        let e = EvolveConfig::default();
        Self {
            cfl: e.cfl,
            t_end: e.t_end,
            cadence: e.cadence,
            r: e.r,
            eps_floor: e.eps_floor,
            drift_limit: e.drift_limit,
            renormalize: e.renormalize,
            steps: e.steps,
            a0_diagnostics: e.a0_diagnostics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSection {
    pub n_max: usize,
    pub tol: f64,
}

impl Default for PicardSection {
    fn default() -> Self {
        let p = PicardConfig::default();
        Self { n_max: p.n_max, tol: p.tol }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub grid: GridSection,
    pub evolve: EvolveSection,
    pub initial: InitialSpec,
    pub picard: PicardSection,
}

impl RunConfig {
    /// Parses and checks types and ranges; model admissibility only produces warnings.
    pub fn parse(text: &str) -> Result<(Self, Vec<String>)> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.evolve_config().validate()?;
        let law = cfg.law()?;
        let mut warnings = Vec::new();
        if let Err(e) = TransportModel::unchecked(cfg.model.eps0, cfg.model.a1, cfg.model.a2, law).validate() {
            warnings.push(e.to_string());
        }
        Ok((cfg, warnings))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn law(&self) -> Result<ViscosityLaw> {
        match (self.model.law.as_str(), self.model.exponent) {
            ("conformal", None) => Ok(ViscosityLaw::conformal(self.model.eta0)),
            ("power", Some(exponent)) => Ok(ViscosityLaw::Power {
                eta0: self.model.eta0,
                exponent,
            }),
            ("power", None) => Err(Error::Config("law = \"power\" needs an exponent".into())),
            ("conformal", Some(_)) => Err(Error::Config("the conformal law takes no exponent".into())),
            (other, _) => Err(Error::Config(format!("unknown viscosity law {other:?}"))),
        }
    }

    /// The model without admissibility checks.
    pub fn model_unchecked(&self) -> TransportModel {
        let law = self.law().unwrap_or(ViscosityLaw::conformal(self.model.eta0));
        TransportModel::unchecked(self.model.eps0, self.model.a1, self.model.a2, law)
    }

    pub fn model(&self) -> Result<TransportModel> {
        TransportModel::new(self.model.eps0, self.model.a1, self.model.a2, self.law()?)
    }

    pub fn evolve_config(&self) -> EvolveConfig {
        let e = &self.evolve;
        EvolveConfig {
            n: self.grid.n,
            cfl: e.cfl,
            t_end: e.t_end,
            dealias: self.grid.dealias,
            cadence: e.cadence,
            r: e.r,
            eps_floor: e.eps_floor,
            drift_limit: e.drift_limit,
            renormalize: e.renormalize,
            steps: e.steps,
            store_snapshots: true,
            a0_diagnostics: e.a0_diagnostics,
        }
    }

    pub fn picard_config(&self) -> PicardConfig {
        PicardConfig {
            n_max: self.picard.n_max,
            t_end: self.evolve.t_end,
            cfl: self.evolve.cfl,
            steps: self.evolve.steps,
            r: self.evolve.r,
            dealias: self.grid.dealias,
            tol: self.picard.tol,
        }
    }
}

/// Run record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub config: String,
    pub seed: u64,
    pub platform: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub status: String,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, wall_time_s: f64, status: &str) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.hash(),
            config: config.canonical(),
            seed: config.seed,
            platform: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            threads: rayon::current_num_threads(),
            wall_time_s,
            status: status.into(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty() {
        let (cfg, warnings) = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(warnings.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[model]\nalpha1 = 5.0\n").is_err());
        assert!(RunConfig::parse("[mesh]\nn = 8\n").is_err());
    }

    #[test]
    fn inadmissible_models_warn() {
        let (_, w) = RunConfig::parse("[model]\na1 = 3.0\na2 = 10.0\n").unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn bad_grid_is_an_error() {
        assert!(RunConfig::parse("[grid]\nn = 12\n").is_err());
    }
}
