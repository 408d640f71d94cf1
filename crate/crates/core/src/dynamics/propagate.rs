use std::f64::consts::PI;

use super::eom::derivatives;
use super::{aero_accels, BankDynamics, DynamicsError, ForceModel, SimState, Trajectory, VehicleParams};
use crate::env::{AtmosphereModel, PlanetModel};

/// Truth aerodynamic accelerations at the current state (a perfect IMU).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AeroSensing {
    /// Lift acceleration magnitude [m/s^2].
    pub lift: f64,
    /// Drag acceleration magnitude [m/s^2].
    pub drag: f64,
    pub density: f64,
}

impl AeroSensing {
    pub fn total(&self) -> f64 {
        self.lift.hypot(self.drag)
    }
}

/// Supplies the bank command at the start of every integration step.
pub trait BankController {
    fn command(&mut self, state: &SimState, sensed: &AeroSensing) -> f64;
}

/// Holds one bank angle for the whole flight.
#[derive(Debug, Clone, Copy)]
pub struct ConstantBank(pub f64);

impl BankController for ConstantBank {
    fn command(&mut self, _: &SimState, _: &AeroSensing) -> f64 {
        self.0
    }
}

/// Flies `before` until `switch_time`, then `after`.
#[derive(Debug, Clone, Copy)]
pub struct ScheduledBank {
    pub before: f64,
    pub after: f64,
    pub switch_time: f64,
}

impl BankController for ScheduledBank {
    fn command(&mut self, state: &SimState, _: &AeroSensing) -> f64 {
        if state.t < self.switch_time {
            self.before
        } else {
            self.after
        }
    }
}

/// One classical RK4 step of length `dt` with a fixed bank command.
#[inline]
pub fn rk4_step(
    t: f64,
    x: &[f64; 7],
    dt: f64,
    sigma_cmd: f64,
    model: &ForceModel<'_>,
    bank: BankDynamics,
) -> Result<[f64; 7], DynamicsError> {
    #[inline]
    fn axpy(x: &[f64; 7], k: &[f64; 7], h: f64) -> [f64; 7] {
        let mut out = *x;
        for i in 0..7 {
            out[i] += h * k[i];
        }
        out
    }
    let k1 = derivatives(t, x, sigma_cmd, model, bank)?;
    let k2 = derivatives(t + 0.5 * dt, &axpy(x, &k1, 0.5 * dt), sigma_cmd, model, bank)?;
    let k3 = derivatives(t + 0.5 * dt, &axpy(x, &k2, 0.5 * dt), sigma_cmd, model, bank)?;
    let k4 = derivatives(t + dt, &axpy(x, &k3, dt), sigma_cmd, model, bank)?;
    let mut out = *x;
    for i in 0..7 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

/// Fixed-step RK4 truth propagation with the lagged, rate-limited bank.
///
/// Stops at `t_f` or as soon as the altitude drops to zero.
pub fn propagate<C: BankController + ?Sized>(
    initial: &SimState,
    controller: &mut C,
    planet: &PlanetModel,
    atmosphere: &AtmosphereModel,
    vehicle: &VehicleParams,
    t_f: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::InvalidSettings("dt must be positive"));
    }
    if !(t_f > initial.t) {
        return Err(DynamicsError::InvalidSettings("final time must follow the initial time"));
    }
    initial.validate()?;
    let model = ForceModel::new(planet, atmosphere, vehicle);
    let capacity = ((t_f - initial.t) / dt).ceil() as usize + 1;
    let mut states = Vec::with_capacity(capacity);
    let mut densities = Vec::with_capacity(capacity);
    let mut state = *initial;
    let mut rho = model.density(state.r);
    states.push(state);
    densities.push(rho);

    while state.t < t_f - 1e-9 && state.altitude(planet) > 0.0 {
        let h = dt.min(t_f - state.t);
        let (drag, lift) = aero_accels(rho, state.v, vehicle);
        let sensed = AeroSensing { lift, drag: -drag, density: rho };
        let cmd = controller.command(&state, &sensed).clamp(-PI, PI);
        let mut x = rk4_step(state.t, &state.to_array(), h, cmd, &model, BankDynamics::Lagged)?;
        x[6] = x[6].clamp(-PI, PI);
        let next = SimState::from_array(state.t + h, x);
        if !x.iter().all(|v| v.is_finite()) || !(next.v > 0.0) {
            return Err(DynamicsError::InvalidState(format!("non-finite state after step at t = {}", state.t)));
        }
        state = next;
        rho = model.density(state.r);
        states.push(state);
        densities.push(rho);
    }
    Trajectory::assemble(states, densities, planet, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{inertial_velocity, TrajectoryMode};
    use crate::env::{PolyAtmosphere, TabulatedAtmosphere};

    fn start(planet: &PlanetModel) -> SimState {
        SimState {
            t: 0.0,
            r: planet.re + 1000e3,
            theta: 3.3,
            phi: -0.17,
            v: 22_500.0,
            gamma: (-10.8f64).to_radians(),
            psi: 0.8,
            sigma: 0.0,
        }
    }

    #[test]
    fn constant_command_keeps_bank_constant() {
        let p = PlanetModel::uranus();
        let atm = AtmosphereModel::Polynomial(PolyAtmosphere::uranus());
        let veh = VehicleParams::nominal();
        let s0 = SimState { sigma: 0.7, ..start(&p) };
        let traj = propagate(&s0, &mut ConstantBank(0.7), &p, &atm, &veh, 200.0, 1.0).unwrap();
        assert!(traj.states.iter().all(|s| s.sigma == 0.7));
    }

    #[test]
    fn bank_step_respects_rate_limit() {
        let p = PlanetModel::uranus();
        let atm = AtmosphereModel::Vacuum;
        let veh = VehicleParams::nominal();
        let s0 = SimState { sigma: 0.0, ..start(&p) };
        let traj = propagate(&s0, &mut ConstantBank(PI), &p, &atm, &veh, 30.0, 1.0).unwrap();
        for w in traj.states.windows(2) {
            assert!((w[1].sigma - w[0].sigma).abs() <= veh.sigma_rate_max * 1.0 + 1e-12);
        }
        assert!((traj.final_state().sigma - PI).abs() < 1e-3);
    }

    #[test]
    fn reversal_passes_through_zero() {
        let p = PlanetModel::uranus();
        let veh = VehicleParams::nominal();
        let s0 = SimState { sigma: 170f64.to_radians(), ..start(&p) };
        let traj =
            propagate(&s0, &mut ConstantBank(-170f64.to_radians()), &p, &AtmosphereModel::Vacuum, &veh, 30.0, 1.0)
                .unwrap();
        let min_abs = traj.states.iter().map(|s| s.sigma.abs()).fold(f64::INFINITY, f64::min);
        assert!(min_abs < 0.2);
    }

    #[test]
    fn surface_contact_terminates() {
        let p = PlanetModel::uranus();
        let atm = AtmosphereModel::Tabulated(TabulatedAtmosphere::new(vec![0.0, 1e7], vec![1e-9, 1e-9], 0).unwrap());
        let veh = VehicleParams::nominal();
        let s0 = SimState { r: p.re + 50e3, v: 3_000.0, gamma: -0.5, ..start(&p) };
        let traj = propagate(&s0, &mut ConstantBank(0.0), &p, &atm, &veh, 1500.0, 1.0).unwrap();
        assert!(traj.final_state().altitude(&p) <= 0.0);
        assert!(traj.final_state().t < 1500.0);
        assert_eq!(traj.mode, TrajectoryMode::Impact);
    }

    #[test]
    fn drag_never_adds_energy_without_rotation() {
        let p = PlanetModel { omega: 0.0, ..PlanetModel::uranus() };
        let atm = AtmosphereModel::Polynomial(PolyAtmosphere::uranus());
        let veh = VehicleParams::nominal();
        let traj = propagate(&start(&p), &mut ConstantBank(1.0), &p, &atm, &veh, 1500.0, 1.0).unwrap();
        // Checked on the Kepler planet as well.
        let pk = PlanetModel { j2: 0.0, ..p };
        let traj_k = propagate(&start(&pk), &mut ConstantBank(1.0), &pk, &atm, &veh, 1500.0, 1.0).unwrap();
        for w in traj_k.energy_series.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs());
        }
        assert!(traj.states.len() > 100);
    }

    #[test]
    fn rejects_bad_settings() {
        let p = PlanetModel::uranus();
        let veh = VehicleParams::nominal();
        let s = start(&p);
        assert!(propagate(&s, &mut ConstantBank(0.0), &p, &AtmosphereModel::Vacuum, &veh, 10.0, 0.0).is_err());
        assert!(propagate(&s, &mut ConstantBank(0.0), &p, &AtmosphereModel::Vacuum, &veh, 0.0, 1.0).is_err());
    }

    #[test]
    fn vacuum_kepler_invariants() {
        let p = PlanetModel { j2: 0.0, omega: 0.0, ..PlanetModel::uranus() };
        let veh = VehicleParams::nominal();
        let s0 = start(&p);
        let traj = propagate(&s0, &mut ConstantBank(0.0), &p, &AtmosphereModel::Vacuum, &veh, 1500.0, 1.0).unwrap();
        let e0 = s0.energy(p.mu);
        let h0 = s0.r * s0.v * s0.gamma.cos();
        for s in &traj.states {
            assert!(((s.energy(p.mu) - e0) / e0).abs() < 1e-9);
            assert!(((s.r * s.v * s.gamma.cos() - h0) / h0).abs() < 1e-9);
        }
    }

    #[test]
    fn rotating_vacuum_conserves_jacobi_integral() {
        let p = PlanetModel { j2: 0.0, ..PlanetModel::uranus() };
        let veh = VehicleParams::nominal();
        let s0 = start(&p);
        let jacobi = |s: &SimState| s.energy(p.mu) - 0.5 * (p.omega * s.r * s.phi.cos()).powi(2);
        let traj = propagate(&s0, &mut ConstantBank(0.0), &p, &AtmosphereModel::Vacuum, &veh, 1500.0, 1.0).unwrap();
        let c0 = jacobi(&s0);
        for s in &traj.states {
            assert!(((jacobi(s) - c0) / c0).abs() < 1e-8);
        }
        // Inertial energy and angular momentum are conserved too.
        let k0 = inertial_velocity(&s0, &p);
        let kf = inertial_velocity(traj.final_state(), &p);
        let ef = 0.5 * kf.v * kf.v - p.mu / traj.final_state().r;
        let e0 = 0.5 * k0.v * k0.v - p.mu / s0.r;
        assert!(((ef - e0) / e0).abs() < 1e-8);
    }
}
