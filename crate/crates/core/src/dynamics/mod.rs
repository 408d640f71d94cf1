//! Three-degree-of-freedom flight over a rotating oblate planet.
//!
//! Heading `psi` is measured from local east toward north, so that
//! `dtheta/dt` is proportional to `cos psi` and `dphi/dt` to `sin psi`.

mod eom;
mod frames;
mod orbit;
mod propagate;

pub use eom::{aero_accels, eom, BankDynamics, ForceModel};
pub use frames::{inertial_to_relative, inertial_velocity, relative_to_inertial, EntryInterface, InertialKinematics};
pub use orbit::{classify_mode, classify_states, orbital_quantities, potential, specific_energy, OrbitalQuantities};
pub use propagate::{propagate, rk4_step, AeroSensing, BankController, ConstantBank, ScheduledBank};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::PlanetModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("equations of motion singular at t = {t}: {what}")]
    Singular { t: f64, what: &'static str },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid propagation settings: {0}")]
    InvalidSettings(&'static str),
    #[error("zero relative velocity in frame conversion")]
    DegenerateVelocity,
}

/// Planet-relative flight state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub v: f64,
    pub gamma: f64,
    pub psi: f64,
    pub sigma: f64,
}

impl SimState {
    pub fn altitude(&self, planet: &PlanetModel) -> f64 {
        self.r - planet.re
    }

    /// Specific energy `V^2/2 - mu/r` with the planet-relative speed.
    pub fn energy(&self, mu: f64) -> f64 {
        0.5 * self.v * self.v - mu / self.r
    }

    #[inline]
    pub(crate) fn to_array(self) -> [f64; 7] {
        [self.r, self.theta, self.phi, self.v, self.gamma, self.psi, self.sigma]
    }

    #[inline]
    pub(crate) fn from_array(t: f64, x: [f64; 7]) -> Self {
        Self { t, r: x[0], theta: x[1], phi: x[2], v: x[3], gamma: x[4], psi: x[5], sigma: x[6] }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = self.r > 0.0
            && self.v > 0.0
            && self.gamma.abs() < std::f64::consts::FRAC_PI_2
            && self.sigma.abs() <= std::f64::consts::PI + 1e-12
            && self.to_array().iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidState(format!("{self:?}")))
        }
    }
}

/// Vehicle aerodynamic and bank-actuation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Ballistic coefficient [kg/m^2].
    pub beta: f64,
    pub ld: f64,
    pub mass: f64,
    /// Bank angle time constant [s].
    pub zeta: f64,
    /// Bank rate limit [rad/s].
    pub sigma_rate_max: f64,
}

impl VehicleParams {
    pub fn nominal() -> Self {
        Self {
            beta: 145.0,
            ld: 0.25,
            mass: 2847.068,
            zeta: 1.0,
            sigma_rate_max: 20f64.to_radians(),
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.beta > 0.0 && self.zeta > 0.0 && self.sigma_rate_max > 0.0 && self.mass > 0.0 {
            Ok(())
        } else {
            Err(DynamicsError::InvalidState(format!("vehicle {self:?}")))
        }
    }
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::nominal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    Capture,
    Escape,
    Impact,
}

impl TrajectoryMode {
    pub const ALL: [TrajectoryMode; 3] = [TrajectoryMode::Capture, TrajectoryMode::Escape, TrajectoryMode::Impact];

    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryMode::Capture => "capture",
            TrajectoryMode::Escape => "escape",
            TrajectoryMode::Impact => "impact",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for TrajectoryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrajectoryMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "capture" => Ok(TrajectoryMode::Capture),
            "escape" => Ok(TrajectoryMode::Escape),
            "impact" => Ok(TrajectoryMode::Impact),
            other => Err(format!("unknown trajectory mode `{other}`")),
        }
    }
}

/// Time history of a propagated flight with its terminal classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SimState>,
    /// Density sampled at each state.
    pub densities: Vec<f64>,
    pub mode: TrajectoryMode,
    pub terminal: OrbitalQuantities,
    /// Inertial specific energy with the J2 potential at each state.
    pub energy_series: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn assemble(
        states: Vec<SimState>,
        densities: Vec<f64>,
        planet: &PlanetModel,
        dt: f64,
    ) -> Result<Self, DynamicsError> {
        let last = *states.last().ok_or(DynamicsError::InvalidSettings("empty trajectory"))?;
        let terminal = orbital_quantities(&last, planet)?;
        let mode = classify_states(&states, &terminal, planet, dt);
        let energy_series = states.iter().map(|s| specific_energy(s, planet)).collect();
        Ok(Self { states, densities, mode, terminal, energy_series })
    }

    pub fn r_a(&self) -> f64 {
        self.terminal.r_a
    }

    pub fn r_p(&self) -> f64 {
        self.terminal.r_p
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.t)
    }

    pub fn final_state(&self) -> &SimState {
        self.states.last().expect("trajectory is never empty")
    }

    /// CSV with columns `t,h,theta,phi,V,gamma,psi,sigma,rho,eps`.
    pub fn write_csv<W: Write>(&self, mut w: W, planet: &PlanetModel) -> std::io::Result<()> {
        writeln!(w, "t,h,theta,phi,V,gamma,psi,sigma,rho,eps")?;
        for ((s, rho), eps) in self.states.iter().zip(&self.densities).zip(&self.energy_series) {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
                s.t,
                s.altitude(planet),
                s.theta,
                s.phi,
                s.v,
                s.gamma,
                s.psi,
                s.sigma,
                rho,
                eps
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> TrajectorySummary {
        TrajectorySummary {
            mode: self.mode,
            r_a: self.terminal.r_a,
            r_p: self.terminal.r_p,
            a: self.terminal.a,
            terminal_state: *self.final_state(),
        }
    }
}

/// JSON summary exported alongside a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub mode: TrajectoryMode,
    pub r_a: f64,
    pub r_p: f64,
    pub a: f64,
    pub terminal_state: SimState,
}
