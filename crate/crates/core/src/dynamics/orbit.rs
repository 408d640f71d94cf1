use serde::{Deserialize, Serialize};

use super::{inertial_velocity, DynamicsError, SimState, Trajectory, TrajectoryMode};
use crate::env::PlanetModel;

/// Periapsis altitude below which a capture counts as an impact [m].
pub const PERIAPSIS_FLOOR: f64 = 100e3;

/// Two-body quantities at a state, from the inertial velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalQuantities {
    /// Semimajor axis; negative for hyperbolic orbits.
    pub a: f64,
    /// Apoapsis radius; negative for hyperbolic orbits.
    pub r_a: f64,
    pub r_p: f64,
    /// Inertial specific energy including the J2 potential [m^2/s^2].
    pub eps: f64,
    pub hyperbolic: bool,
}

/// Gravitational potential energy per unit mass with the J2 zonal term.
#[inline]
pub fn potential(planet: &PlanetModel, r: f64, phi: f64) -> f64 {
    let s = phi.sin();
    let p2 = 0.5 * (3.0 * s * s - 1.0);
    -planet.mu / r * (1.0 - planet.j2 * (planet.re / r).powi(2) * p2)
}

/// Inertial specific energy `V_I^2/2 + U(r, phi)`; conserved in vacuum.
pub fn specific_energy(state: &SimState, planet: &PlanetModel) -> f64 {
    let k = inertial_velocity(state, planet);
    0.5 * k.v * k.v + potential(planet, state.r, state.phi)
}

/// Semimajor axis, apoapsis and periapsis at a state.
///
/// The semimajor axis comes from the energy including the J2 potential, so
/// it stays constant along a vacuum arc and the apsides are those the orbit
/// actually reaches far from the planet. With `J2 = 0` this is the plain
/// vis-viva form.
pub fn orbital_quantities(exit: &SimState, planet: &PlanetModel) -> Result<OrbitalQuantities, DynamicsError> {
    if !(exit.v > 0.0) || !(exit.r > 0.0) {
        return Err(DynamicsError::InvalidState(format!("exit state {exit:?}")));
    }
    let k = inertial_velocity(exit, planet);
    let mu = planet.mu;
    let r = exit.r;
    let eps = 0.5 * k.v * k.v + potential(planet, r, exit.phi);
    let h2 = (r * k.v * k.gamma.cos()).powi(2);
    let denom = -2.0 * eps;
    if denom == 0.0 {
        return Ok(OrbitalQuantities {
            a: f64::INFINITY,
            r_a: f64::NEG_INFINITY,
            r_p: h2 / (2.0 * mu),
            eps,
            hyperbolic: true,
        });
    }
    let a = mu / denom;
    let mut radicand = 1.0 - h2 / (mu * a);
    if radicand < 0.0 {
        // Only rounding can push this negative for a real orbit.
        radicand = 0.0;
    }
    let root = radicand.sqrt();
    Ok(OrbitalQuantities {
        a,
        r_a: a * (1.0 + root),
        r_p: a * (1.0 - root),
        eps,
        hyperbolic: a < 0.0,
    })
}

/// Terminal mode from the last two states; `terminal` must belong to the last one.
pub fn classify_states(
    states: &[SimState],
    terminal: &OrbitalQuantities,
    planet: &PlanetModel,
    dt: f64,
) -> TrajectoryMode {
    if terminal.hyperbolic || terminal.r_a < 0.0 {
        return TrajectoryMode::Escape;
    }
    let last = match states.last() {
        Some(s) => s,
        None => return TrajectoryMode::Impact,
    };
    if terminal.r_p - planet.re < PERIAPSIS_FLOOR || last.altitude(planet) <= 0.0 {
        return TrajectoryMode::Impact;
    }
    // Altitude at t_f compared with t_f - dt.
    let t_prev = last.t - dt;
    let prev = states.iter().rev().skip(1).find(|s| s.t <= t_prev + 1e-9);
    if let Some(prev) = prev {
        if last.r < prev.r {
            return TrajectoryMode::Impact;
        }
    }
    TrajectoryMode::Capture
}

pub fn classify_mode(traj: &Trajectory, planet: &PlanetModel, dt: f64) -> TrajectoryMode {
    match orbital_quantities(traj.final_state(), planet) {
        Ok(q) => classify_states(&traj.states, &q, planet, dt),
        Err(_) => TrajectoryMode::Impact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kepler() -> PlanetModel {
        PlanetModel { j2: 0.0, omega: 0.0, ..PlanetModel::uranus() }
    }

    fn at(r: f64, v: f64, gamma: f64) -> SimState {
        SimState { t: 0.0, r, theta: 0.0, phi: 0.1, v, gamma, psi: 0.3, sigma: 0.0 }
    }

    #[test]
    fn circular_orbit() {
        let p = kepler();
        let r = p.re + 2e6;
        let q = orbital_quantities(&at(r, (p.mu / r).sqrt(), 0.0), &p).unwrap();
        assert!((q.r_a - r).abs() < 1e-6 * r);
        assert!((q.r_p - r).abs() < 1e-6 * r);
        assert!((q.eps + p.mu / (2.0 * r)).abs() < 1e-9 * q.eps.abs());
        assert!(!q.hyperbolic);
    }

    #[test]
    fn parabolic_boundary() {
        let p = kepler();
        let r = p.re + 2e6;
        let q = orbital_quantities(&at(r, (2.0 * p.mu / r).sqrt(), 0.2), &p).unwrap();
        assert!(q.eps.abs() < 1e-6);
        assert!(q.hyperbolic || q.a.abs() > 1e15);
        assert!(q.r_a < 0.0 || q.a.abs() > 1e15);
    }

    #[test]
    fn hyperbolic_has_negative_apoapsis() {
        let p = kepler();
        let r = p.re + 2e6;
        let q = orbital_quantities(&at(r, 1.1 * (2.0 * p.mu / r).sqrt(), 0.2), &p).unwrap();
        assert!(q.hyperbolic && q.a < 0.0 && q.r_a < 0.0 && q.r_p > 0.0);
        assert!(q.eps > 0.0);
    }

    #[test]
    fn apsides_bracket_current_radius() {
        let p = PlanetModel::uranus();
        let r = p.re + 1e6;
        let q = orbital_quantities(&at(r, 15_000.0, 0.1), &p).unwrap();
        assert!(q.r_p <= r && r <= q.r_a);
    }

    fn traj_of(states: Vec<SimState>, p: &PlanetModel) -> Trajectory {
        let n = states.len();
        Trajectory::assemble(states, vec![0.0; n], p, 1.0).unwrap()
    }

    #[test]
    fn positive_energy_escapes() {
        let p = kepler();
        let r = p.re + 1e6;
        let t = traj_of(vec![at(r, 30_000.0, 0.1)], &p);
        assert_eq!(t.mode, TrajectoryMode::Escape);
        assert_eq!(classify_mode(&t, &p, 1.0), TrajectoryMode::Escape);
    }

    #[test]
    fn descending_terminal_altitude_impacts() {
        let p = kepler();
        let r = p.re + 1e6;
        let v = 0.9 * (2.0 * p.mu / r).sqrt();
        let s0 = SimState { t: 0.0, ..at(r + 10.0, v, 0.05) };
        let s1 = SimState { t: 1.0, ..at(r, v, 0.05) };
        assert_eq!(traj_of(vec![s0, s1], &p).mode, TrajectoryMode::Impact);
        let s0 = SimState { t: 0.0, ..at(r - 10.0, v, 0.05) };
        assert_eq!(traj_of(vec![s0, s1], &p).mode, TrajectoryMode::Capture);
    }

    #[test]
    fn periapsis_floor_is_strict() {
        let p = kepler();
        let r_p = p.re + PERIAPSIS_FLOOR;
        let r_a = p.re + 5e7;
        let a = 0.5 * (r_a + r_p);
        let v = (p.mu * (2.0 / r_p - 1.0 / a)).sqrt();
        let exact = at(r_p, v, 0.0);
        let q = orbital_quantities(&exact, &p).unwrap();
        assert!((q.r_p - r_p).abs() < 1e-3);
        let states = [exact];
        let pinned = OrbitalQuantities { r_p, ..q };
        assert_eq!(classify_states(&states, &pinned, &p, 1.0), TrajectoryMode::Capture);
        let below = OrbitalQuantities { r_p: r_p - 1e-6, ..q };
        assert_eq!(classify_states(&states, &below, &p, 1.0), TrajectoryMode::Impact);
    }
}
