use crate::dynamics::{inertial_velocity, SimState};
use crate::env::PlanetModel;

/// Instantaneous orbital inclination from latitude and inertial heading.
pub fn inclination(state: &SimState, planet: &PlanetModel) -> f64 {
    let k = inertial_velocity(state, planet);
    (state.phi.cos() * k.psi.cos()).clamp(-1.0, 1.0).acos()
}

/// Bank sign for the next cycle from an inclination deadband.
///
/// A positive bank turns the heading toward north, which raises the
/// inclination when `sin psi > 0`. The sign flips only when the error is
/// outside the deadband and the current sign drives it further out.
pub fn lateral_logic(state: &SimState, planet: &PlanetModel, target_inclination: f64, deadband: f64, bank_sign: f64) -> f64 {
    let err = inclination(state, planet) - target_inclination;
    let k = inertial_velocity(state, planet);
    let drive = bank_sign * k.psi.sin().signum();
    if (err > deadband && drive > 0.0) || (err < -deadband && drive < 0.0) {
        -bank_sign
    } else {
        bank_sign
    }
}
