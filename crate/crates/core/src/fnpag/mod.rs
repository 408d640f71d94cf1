//! Fully numeric predictor-corrector aerocapture guidance.
//!
//! Phase 1 flies a shallow bank `sigma_0` and solves for the time at which to
//! switch to `sigma_f`; phase 2 re-solves a constant bank magnitude every
//! guidance cycle. Both solves drive the exit energy error to zero with
//! Brent's method on an onboard prediction.

mod filter;
mod guidance;
mod lateral;
mod predict;
mod solve;

pub use filter::FadingFilter;
pub use guidance::{
    write_guidance_csv, Adjustment, CommandAdjuster, CycleContext, Guidance, GuidanceRecord, Passthrough,
};
pub use lateral::{inclination, lateral_logic};
pub use predict::{predict_path, predict_to_exit, BankProfile, Prediction, PredictionEnd, PredictOptions};
pub use solve::{solve_phase1, solve_phase2, Solution};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{inertial_velocity, potential, DynamicsError, SimState, VehicleParams};
use crate::env::{AtmosphereModel, PlanetModel, PolyAtmosphere};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("prediction failed for candidate {candidate}: {source}")]
    Prediction { candidate: f64, source: DynamicsError },
    #[error("invalid guidance configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Lateral channel settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LateralConfig {
    /// Inclination error deadband [rad].
    pub deadband: f64,
    pub max_reversals: u32,
    /// Target inclination [rad]; `None` holds the inclination at the first guidance call.
    pub target_inclination: Option<f64>,
}

impl Default for LateralConfig {
    fn default() -> Self {
        Self { deadband: 0.25f64.to_radians(), max_reversals: 6, target_inclination: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FnpagConfig {
    /// Phase-1 bank magnitude [rad].
    pub sigma_0: f64,
    /// Phase-2 initial bank magnitude [rad].
    pub sigma_f: f64,
    pub t_switch_init: f64,
    /// Guidance enable threshold on sensed aerodynamic acceleration [Earth g].
    pub g_limit: f64,
    /// Target apoapsis radius [m].
    pub r_a_target: f64,
    pub guidance_period: f64,
    /// Brent tolerance on the switching time [s].
    pub time_tol: f64,
    /// Brent tolerance on the bank magnitude [rad].
    pub bank_tol: f64,
    pub max_iter: usize,
    /// Phase-2 bank bracket [rad].
    pub bank_bracket: (f64, f64),
    /// End of the flight and of every prediction [s].
    pub t_f: f64,
    pub prediction_dt: f64,
    /// Step used to extend a recorded prediction from exit to `t_f` [s].
    pub coast_dt: f64,
    /// Altitude at which an ascending trajectory has left the atmosphere [m].
    pub exit_altitude: f64,
    pub fading_filter: bool,
    pub chi: f64,
    pub lateral: LateralConfig,
}

impl Default for FnpagConfig {
    fn default() -> Self {
        Self {
            sigma_0: 10f64.to_radians(),
            sigma_f: 90f64.to_radians(),
            t_switch_init: 300.0,
            g_limit: 0.1,
            r_a_target: PlanetModel::uranus().re + 550_000e3,
            guidance_period: 1.0,
            time_tol: 0.05,
            bank_tol: 1e-3,
            max_iter: 100,
            bank_bracket: (0.0, std::f64::consts::PI),
            t_f: 1500.0,
            prediction_dt: 2.0,
            coast_dt: 10.0,
            exit_altitude: 1000e3,
            fading_filter: true,
            chi: (-1.0f64 / 6.0).exp(),
            lateral: LateralConfig::default(),
        }
    }
}

impl FnpagConfig {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        use std::f64::consts::PI;
        if !(0.0 <= self.sigma_0 && self.sigma_0 < self.sigma_f && self.sigma_f <= PI) {
            return Err(GuidanceError::InvalidConfig("need 0 <= sigma_0 < sigma_f <= pi"));
        }
        if !(self.g_limit > 0.0) {
            return Err(GuidanceError::InvalidConfig("g_limit must be positive"));
        }
        if !(self.r_a_target > 0.0) {
            return Err(GuidanceError::InvalidConfig("target apoapsis must be positive"));
        }
        if !(self.guidance_period > 0.0 && self.prediction_dt > 0.0 && self.coast_dt > 0.0) {
            return Err(GuidanceError::InvalidConfig("periods and steps must be positive"));
        }
        if !(self.time_tol > 0.0 && self.bank_tol > 0.0 && self.max_iter > 0) {
            return Err(GuidanceError::InvalidConfig("solver tolerances must be positive"));
        }
        let (lo, hi) = self.bank_bracket;
        if !(0.0 <= lo && lo < hi && hi <= PI) {
            return Err(GuidanceError::InvalidConfig("bank bracket must lie in [0, pi]"));
        }
        if !(self.chi > 0.0 && self.chi < 1.0) {
            return Err(GuidanceError::InvalidConfig("chi must lie in (0, 1)"));
        }
        if !(self.exit_altitude > 0.0 && self.t_f > 0.0) {
            return Err(GuidanceError::InvalidConfig("exit altitude and final time must be positive"));
        }
        if !(self.lateral.deadband >= 0.0) {
            return Err(GuidanceError::InvalidConfig("lateral deadband must be non-negative"));
        }
        Ok(())
    }
}

/// Models carried onboard for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct OnboardModel {
    pub planet: PlanetModel,
    pub atmosphere: AtmosphereModel,
    pub vehicle: VehicleParams,
}

impl OnboardModel {
    pub fn uranus() -> Self {
        Self {
            planet: PlanetModel::uranus(),
            atmosphere: AtmosphereModel::Polynomial(PolyAtmosphere::uranus()),
            vehicle: VehicleParams::nominal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

/// Mutable guidance state carried between cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnpagState {
    pub phase: Phase,
    pub t_switch: f64,
    /// Latest solved bank magnitude [rad].
    pub sigma_star: f64,
    pub guid_enabled: bool,
    pub bank_sign: f64,
    pub reversals: u32,
    /// Last energy error from a solve.
    pub err: f64,
    /// Time guidance first enabled.
    pub enabled_at: Option<f64>,
    pub last_command: f64,
}

impl FnpagState {
    pub fn new(config: &FnpagConfig) -> Self {
        Self {
            phase: Phase::One,
            t_switch: config.t_switch_init,
            sigma_star: config.sigma_f,
            guid_enabled: false,
            bank_sign: 1.0,
            reversals: 0,
            err: f64::NAN,
            enabled_at: None,
            last_command: config.sigma_0,
        }
    }
}

/// Exit energy error from inertial exit radius, latitude, speed and flight-path angle.
///
/// Lengths are scaled by `Re` and speeds by `sqrt(Re g0)`, so `mu = 1`. The
/// `1/r` term carries the J2 factor so the error vanishes exactly when
/// [`orbital_quantities`](crate::dynamics::orbital_quantities) reports the
/// target apoapsis.
pub fn energy_error_kinematic(r: f64, phi: f64, v: f64, gamma: f64, r_a_target: f64, planet: &PlanetModel) -> f64 {
    let u = -potential(planet, r, phi) / planet.mu * planet.re;
    let r = r / planet.re;
    let ra = r_a_target / planet.re;
    let v = v / planet.velocity_scale();
    let vc = v * gamma.cos();
    (u - 0.5 * v * v) - (1.0 / ra - r * r * vc * vc / (2.0 * ra * ra))
}

/// Exit energy error of a planet-relative state, evaluated with its inertial velocity.
pub fn energy_error(exit: &SimState, r_a_target: f64, planet: &PlanetModel) -> f64 {
    let k = inertial_velocity(exit, planet);
    energy_error_kinematic(exit.r, exit.phi, k.v, k.gamma, r_a_target, planet)
}
