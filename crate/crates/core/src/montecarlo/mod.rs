//! Dispersed Monte Carlo campaigns, recoverability replays, parameter sweeps
//! and training-set generation.

mod campaign;
mod dataset;
mod sweep;

pub use campaign::{
    recoverability, run_campaign, run_trial, summarize, write_histogram_csv, write_trials_csv, read_trials_csv,
    CampaignSettings, CampaignSummary, GuidanceKind, TrialOutcome, TrialResult, Variant,
};
pub use dataset::{build_dataset, BuiltDataset};
pub use sweep::{sweep, write_sweep_csv, SweepGrid, SweepPoint};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{EntryInterface, TrajectoryMode, VehicleParams};
use crate::env::PlanetModel;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid dispersion spec: {0}")]
    InvalidSpec(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("{0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed trials file: {0}")]
    Parse(String),
}

/// Seed for a named random sub-stream derived from a master seed.
pub fn sub_seed(master: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// 3-sigma Gaussian dispersions on entry state and vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DispersionSpec {
    pub ld: f64,
    /// [kg]
    pub mass: f64,
    /// [m]
    pub h0: f64,
    /// [rad]
    pub theta0: f64,
    /// [rad]
    pub phi0: f64,
    /// Inertial speed [m/s].
    pub v0: f64,
    /// Inertial flight-path angle [rad].
    pub gamma0: f64,
    /// Multiplies every variance.
    pub variance_scale: f64,
}

impl Default for DispersionSpec {
    fn default() -> Self {
        Self {
            ld: 0.075,
            mass: 854.12,
            h0: 100e3,
            theta0: 0.227,
            phi0: 0.116,
            v0: 750.0,
            gamma0: 0.5f64.to_radians(),
            variance_scale: 1.0,
        }
    }
}

impl DispersionSpec {
    pub fn none() -> Self {
        Self { ld: 0.0, mass: 0.0, h0: 0.0, theta0: 0.0, phi0: 0.0, v0: 0.0, gamma0: 0.0, variance_scale: 1.0 }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let all = [self.ld, self.mass, self.h0, self.theta0, self.phi0, self.v0, self.gamma0];
        if !all.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(CampaignError::InvalidSpec("3-sigma values must be finite and non-negative"));
        }
        if !(self.variance_scale > 0.0 && self.variance_scale.is_finite()) {
            return Err(CampaignError::InvalidSpec("variance_scale must be positive"));
        }
        Ok(())
    }

    /// One-sigma value after variance scaling.
    fn std(&self, three_sigma: f64) -> f64 {
        three_sigma / 3.0 * self.variance_scale.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    NearEscape,
    NearImpact,
}

impl ScenarioName {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::NearEscape => "near-escape",
            ScenarioName::NearImpact => "near-impact",
        }
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "near-escape" => Ok(ScenarioName::NearEscape),
            "near-impact" => Ok(ScenarioName::NearImpact),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// Nominal entry conditions, target and the failure mode the scenario probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub entry: EntryInterface,
    /// Target apoapsis radius [m].
    pub r_a_target: f64,
    pub failure_mode: TrajectoryMode,
}

impl Scenario {
    fn uranus(name: ScenarioName, gamma0_deg: f64, h_a_km: f64, failure_mode: TrajectoryMode) -> Self {
        Self {
            name,
            entry: EntryInterface {
                h0: 1000e3,
                theta0: 190.045f64.to_radians(),
                phi0: (-9.764f64).to_radians(),
                v0_inertial: 24_936.0,
                gamma0_inertial: gamma0_deg.to_radians(),
                psi0: 45f64.to_radians(),
            },
            r_a_target: PlanetModel::uranus().re + h_a_km * 1e3,
            failure_mode,
        }
    }

    pub fn near_escape() -> Self {
        Self::uranus(ScenarioName::NearEscape, -10.572, 550_000.0, TrajectoryMode::Escape)
    }

    pub fn near_impact() -> Self {
        Self::uranus(ScenarioName::NearImpact, -11.277, 100_000.0, TrajectoryMode::Impact)
    }

    pub fn by_name(name: ScenarioName) -> Self {
        match name {
            ScenarioName::NearEscape => Self::near_escape(),
            ScenarioName::NearImpact => Self::near_impact(),
        }
    }

    pub fn validate(&self, planet: &PlanetModel) -> Result<(), CampaignError> {
        if !(self.r_a_target > planet.re) {
            return Err(CampaignError::InvalidScenario(format!(
                "target apoapsis radius {} is inside the planet",
                self.r_a_target
            )));
        }
        if self.failure_mode == TrajectoryMode::Capture {
            return Err(CampaignError::InvalidScenario("failure mode cannot be capture".into()));
        }
        Ok(())
    }
}

/// Everything random about one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSample {
    pub entry: EntryInterface,
    pub vehicle: VehicleParams,
    pub atmosphere_seed: u64,
}

/// Draws one dispersed trial. The ballistic coefficient scales with the
/// sampled mass since the drag area and coefficient are fixed.
pub fn sample_trial(spec: &DispersionSpec, scenario: &Scenario, nominal: &VehicleParams, trial_seed: u64) -> TrialSample {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let mut draw = |mean: f64, three_sigma: f64| {
        let std = spec.std(three_sigma);
        let x = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
        if std == 0.0 {
            mean
        } else {
            mean + std * x
        }
    };
    let e = &scenario.entry;
    let ld = draw(nominal.ld, spec.ld);
    let mass = draw(nominal.mass, spec.mass);
    let entry = EntryInterface {
        h0: draw(e.h0, spec.h0),
        theta0: draw(e.theta0, spec.theta0),
        phi0: draw(e.phi0, spec.phi0),
        v0_inertial: draw(e.v0_inertial, spec.v0),
        gamma0_inertial: draw(e.gamma0_inertial, spec.gamma0),
        psi0: e.psi0,
    };
    let vehicle = VehicleParams { ld, mass, beta: nominal.beta * mass / nominal.mass, ..*nominal };
    let atmosphere_seed = Uniform::new_inclusive(1u64, 29_999).expect("valid range").sample(&mut rng);
    TrialSample { entry, vehicle, atmosphere_seed }
}
