use serde::{Deserialize, Serialize};

use super::{DynamicsError, SimState};
use crate::env::PlanetModel;

/// Entry interface conditions: inertial speed and flight-path angle with a
/// planet-relative heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryInterface {
    pub h0: f64,
    pub theta0: f64,
    pub phi0: f64,
    pub v0_inertial: f64,
    pub gamma0_inertial: f64,
    pub psi0: f64,
}

/// Inertial speed, flight-path angle and heading at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialKinematics {
    pub v: f64,
    pub gamma: f64,
    pub psi: f64,
}

// (up, east, north) velocity components.
#[inline]
fn components(v: f64, gamma: f64, psi: f64) -> (f64, f64, f64) {
    let (sg, cg) = gamma.sin_cos();
    let (sp, cp) = psi.sin_cos();
    (v * sg, v * cg * cp, v * cg * sp)
}

#[inline]
fn from_components(up: f64, east: f64, north: f64) -> (f64, f64, f64) {
    let horizontal = east.hypot(north);
    let v = up.hypot(horizontal);
    (v, up.atan2(horizontal), north.atan2(east))
}

/// Inertial kinematics of a planet-relative state: adds `Omega x r` (eastward).
#[inline]
pub fn inertial_velocity(state: &SimState, planet: &PlanetModel) -> InertialKinematics {
    let (up, east, north) = components(state.v, state.gamma, state.psi);
    let east = east + planet.omega * state.r * state.phi.cos();
    let (v, gamma, psi) = from_components(up, east, north);
    InertialKinematics { v, gamma, psi }
}

/// Converts the entry interface into a planet-relative state at `t = 0`
/// with zero bank angle.
///
/// The relative horizontal speed `u` along heading `psi0` satisfies
/// `|u e_psi + w e_east| = V_I cos gamma_I` with `w = Omega r cos phi`.
pub fn inertial_to_relative(entry: &EntryInterface, planet: &PlanetModel) -> Result<SimState, DynamicsError> {
    if !(entry.h0 > 0.0) {
        return Err(DynamicsError::InvalidState(format!("entry altitude {} must be positive", entry.h0)));
    }
    let r = planet.re + entry.h0;
    let up = entry.v0_inertial * entry.gamma0_inertial.sin();
    let horizontal = entry.v0_inertial * entry.gamma0_inertial.cos();
    let w = planet.omega * r * entry.phi0.cos();
    let (sp, cp) = entry.psi0.sin_cos();
    let disc = horizontal * horizontal - (w * sp).powi(2);
    if disc < 0.0 {
        return Err(DynamicsError::InvalidState(format!(
            "no relative velocity with heading {} matches the inertial speed",
            entry.psi0
        )));
    }
    let u = -w * cp + disc.sqrt();
    let v = up.hypot(u);
    if !(v > 1e-9) || u < 0.0 {
        return Err(DynamicsError::DegenerateVelocity);
    }
    Ok(SimState { t: 0.0, r, theta: entry.theta0, phi: entry.phi0, v, gamma: up.atan2(u), psi: entry.psi0, sigma: 0.0 })
}

/// Inverse of [`inertial_to_relative`].
pub fn relative_to_inertial(state: &SimState, planet: &PlanetModel) -> EntryInterface {
    let k = inertial_velocity(state, planet);
    EntryInterface {
        h0: state.r - planet.re,
        theta0: state.theta,
        phi0: state.phi,
        v0_inertial: k.v,
        gamma0_inertial: k.gamma,
        psi0: state.psi,
    }
}
