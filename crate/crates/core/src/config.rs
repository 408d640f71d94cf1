//! Run configuration shared by every CLI command.
//!
//! A run is described by one TOML file. Every section is optional and falls
//! back to the Uranus defaults; relative paths resolve against the directory
//! holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::VehicleParams;
use crate::env::{PerturbationSpec, PlanetModel, PolyAtmosphere, PolyForm, URANUS_POLY_COEFFICIENTS};
use crate::fnpag::FnpagConfig;
use crate::gmvae::{Normalization, TrainConfig};
use crate::montecarlo::{sub_seed, CampaignSettings, DispersionSpec, Scenario, ScenarioName, SweepGrid};
use crate::pipag::PipagParams;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Built-in scenario by name, or a TOML file holding a full scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: ScenarioName,
    pub file: Option<PathBuf>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self { name: ScenarioName::NearEscape, file: None }
    }
}

/// Mean atmosphere; coefficients default to the Uranus fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtmosphereSection {
    pub form: PolyForm,
    pub coefficients: [f64; 9],
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for AtmosphereSection {
    fn default() -> Self {
        Self { form: PolyForm::OddEven, coefficients: URANUS_POLY_COEFFICIENTS, h_min: 200e3, h_max: 2000e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSection {
    pub trials: u64,
    /// Truth integration step [s].
    pub dt: f64,
    /// Multiplies every truth density.
    pub density_bias: f64,
    /// Bank flown before the recoverability replay switches [deg].
    pub replay_initial_bank_deg: f64,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self { trials: 2000, dt: 1.0, density_bias: 1.0, replay_initial_bank_deg: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmvaeSection {
    /// Rows generated by `gen-data`.
    pub samples: usize,
    pub normalization: Normalization,
    /// Training hyperparameters. The seed is replaced by the `training`
    /// sub-stream of the master seed.
    pub train: TrainConfig,
}

impl Default for GmvaeSection {
    fn default() -> Self {
        Self { samples: 1280, normalization: Normalization::PerSample, train: TrainConfig::default() }
    }
}

/// Artifact locations; unset entries live in the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Dataset whose encodings define the PCA plane of latent traces.
    pub reference_dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sigma_prime_deg: Vec<f64>,
    pub tau: Vec<f64>,
    pub eps_c: Vec<f64>,
    /// Trials per grid point; the campaign count when unset.
    pub trials: Option<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let g = SweepGrid::standard();
        Self {
            sigma_prime_deg: g.sigma_prime.iter().map(|s| s.to_degrees().round()).collect(),
            tau: g.tau,
            eps_c: g.eps_c,
            trials: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub trial: u64,
    /// Fly the nominal entry with the mean atmosphere and no dispersions.
    pub nominal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for campaigns; rayon's default when unset.
    pub threads: Option<usize>,
    pub scenario: ScenarioSection,
    pub planet: PlanetModel,
    pub vehicle: VehicleParams,
    pub atmosphere: AtmosphereSection,
    pub perturbation: PerturbationSpec,
    pub dispersion: DispersionSpec,
    /// The target apoapsis always comes from the scenario.
    pub fnpag: FnpagConfig,
    /// Defaults to the preset for the scenario failure mode.
    pub pipag: Option<PipagParams>,
    pub campaign: CampaignSection,
    pub gmvae: GmvaeSection,
    pub paths: PathsSection,
    pub sweep: SweepSection,
    pub simulate: SimulateSection,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            threads: None,
            scenario: ScenarioSection::default(),
            planet: PlanetModel::uranus(),
            vehicle: VehicleParams::nominal(),
            atmosphere: AtmosphereSection::default(),
            perturbation: PerturbationSpec { sigma_base: 0.25, ..PerturbationSpec::default() },
            dispersion: DispersionSpec::default(),
            fnpag: FnpagConfig::default(),
            pipag: None,
            campaign: CampaignSection::default(),
            gmvae: GmvaeSection::default(),
            paths: PathsSection::default(),
            sweep: SweepSection::default(),
            simulate: SimulateSection::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.into(), reason: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut c = Self::from_toml(&text, &path.display().to_string())?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.paths.dataset.as_ref().map_or_else(|| self.output_dir().join("dataset.csv"), |p| self.resolve(p))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.model.as_ref().map_or_else(|| self.output_dir().join("model.gmvae"), |p| self.resolve(p))
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        match &self.scenario.file {
            None => Ok(Scenario::by_name(self.scenario.name)),
            Some(f) => {
                let path = self.resolve(f);
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
                toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.display().to_string(), reason: e.to_string() })
            }
        }
    }

    pub fn mean_atmosphere(&self) -> PolyAtmosphere {
        let a = &self.atmosphere;
        PolyAtmosphere::with_resolved_unit(a.coefficients, a.h_min, a.h_max, a.form)
    }

    pub fn pipag_params(&self, scenario: &Scenario) -> PipagParams {
        self.pipag.unwrap_or_else(|| PipagParams::for_failure_mode(scenario.failure_mode))
    }

    pub fn campaign_settings(&self) -> Result<CampaignSettings, ConfigError> {
        let scenario = self.scenario()?;
        let s = CampaignSettings {
            scenario,
            dispersion: self.dispersion,
            mean_atmosphere: self.mean_atmosphere(),
            perturbation: self.perturbation.clone(),
            density_bias: self.campaign.density_bias,
            model_matched: false,
            planet: self.planet,
            nominal_vehicle: self.vehicle,
            fnpag: FnpagConfig { r_a_target: scenario.r_a_target, ..self.fnpag.clone() },
            pipag: self.pipag_params(&scenario),
            master_seed: self.seed,
            dt: self.campaign.dt,
            replay_initial_bank: self.campaign.replay_initial_bank_deg.to_radians(),
        };
        s.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(s)
    }

    /// Training hyperparameters with the seed taken from the master seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: sub_seed(self.seed, "training", 0), ..self.gmvae.train.clone() }
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        SweepGrid {
            sigma_prime: self.sweep.sigma_prime_deg.iter().map(|d| d.to_radians()).collect(),
            tau: self.sweep.tau.clone(),
            eps_c: self.sweep.eps_c.clone(),
        }
    }

    /// SHA-256 over the settings that affect results (output location and
    /// thread count excluded), first 16 hex digits.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.threads = None;
        c.paths = PathsSection::default();
        let json = serde_json::to_string(&c).expect("config serializes");
        let d = Sha256::digest(json.as_bytes());
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// One-line provenance stamp written into every artifact.
    pub fn provenance(&self) -> Provenance {
        Provenance { tool_version: TOOL_VERSION.into(), config_hash: self.hash(), master_seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "aerocap {} config={} seed={}", self.tool_version, self.config_hash, self.master_seed)
    }
}
