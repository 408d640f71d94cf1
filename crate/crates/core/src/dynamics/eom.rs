use super::{DynamicsError, SimState, VehicleParams};
use crate::env::{gravity_unchecked, AtmosphereModel, PlanetModel};

/// How the bank angle state evolves inside the equations of motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankDynamics {
    /// First-order lag toward the command, rate limited.
    Lagged,
    /// Bank held at the commanded value (guidance prediction).
    Frozen,
}

/// Everything the right-hand side needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct ForceModel<'a> {
    pub planet: &'a PlanetModel,
    pub atmosphere: &'a AtmosphereModel,
    pub vehicle: &'a VehicleParams,
    /// Multiplier on the lift acceleration (fading-filter scale).
    pub lift_scale: f64,
    pub drag_scale: f64,
}

impl<'a> ForceModel<'a> {
    pub fn new(planet: &'a PlanetModel, atmosphere: &'a AtmosphereModel, vehicle: &'a VehicleParams) -> Self {
        Self { planet, atmosphere, vehicle, lift_scale: 1.0, drag_scale: 1.0 }
    }

    pub fn with_scales(mut self, lift_scale: f64, drag_scale: f64) -> Self {
        self.lift_scale = lift_scale;
        self.drag_scale = drag_scale;
        self
    }

    #[inline]
    pub fn density(&self, r: f64) -> f64 {
        self.atmosphere.density(r - self.planet.re)
    }
}

/// Tangential (drag, <= 0) and normal (lift) accelerations.
#[inline]
pub fn aero_accels(rho: f64, v: f64, vehicle: &VehicleParams) -> (f64, f64) {
    let q = rho * v * v / (2.0 * vehicle.beta);
    (-q, q * vehicle.ld)
}

/// Time derivative of `[r, theta, phi, V, gamma, psi, sigma]`.
pub fn eom(
    state: &SimState,
    sigma_cmd: f64,
    model: &ForceModel<'_>,
    bank: BankDynamics,
) -> Result<[f64; 7], DynamicsError> {
    derivatives(state.t, &state.to_array(), sigma_cmd, model, bank)
}

#[inline]
pub(crate) fn derivatives(
    t: f64,
    x: &[f64; 7],
    sigma_cmd: f64,
    model: &ForceModel<'_>,
    bank: BankDynamics,
) -> Result<[f64; 7], DynamicsError> {
    let [r, _theta, phi, v, gamma, psi, sigma_state] = *x;
    let planet = model.planet;
    let omega = planet.omega;

    let (sg, cg) = gamma.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (sps, cps) = psi.sin_cos();
    if cg.abs() < 1e-12 {
        return Err(DynamicsError::Singular { t, what: "cos(gamma) = 0" });
    }
    if cp.abs() < 1e-12 {
        return Err(DynamicsError::Singular { t, what: "cos(phi) = 0" });
    }
    if !(r > 0.0) || !(v > 0.0) {
        return Err(DynamicsError::InvalidState(format!("r = {r}, V = {v} at t = {t}")));
    }

    // Lift acts through the current bank angle; with frozen bank that is the command.
    let sigma = match bank {
        BankDynamics::Lagged => sigma_state,
        BankDynamics::Frozen => sigma_cmd,
    };
    let (ss, cs) = sigma.sin_cos();

    let (g_r, g_phi) = gravity_unchecked(planet, r, phi);
    let rho = model.density(r);
    let (f_t, f_n) = aero_accels(rho, v, model.vehicle);
    let f_t = f_t * model.drag_scale;
    let f_n = f_n * model.lift_scale;

    let o2r = omega * omega * r;
    let r_dot = v * sg;
    let theta_dot = v * cg * cps / (r * cp);
    let phi_dot = v * cg * sps / r;
    let v_dot = f_t - g_r * sg - g_phi * cg * sps + o2r * cp * (sg * cp - cg * sp * sps);
    let gamma_dot = (f_n * cs - g_r * cg + v * v / r * cg + g_phi * sg * sps
        + 2.0 * omega * v * cp * cps
        + o2r * cp * (cg * cp + sg * sp * sps))
        / v;
    let psi_dot = (f_n * ss / cg - v * v / r * cg * cps * (sp / cp) - g_phi * cps / cg
        + 2.0 * omega * v * (sg / cg * cp * sps - sp)
        - o2r * sp * cp * cps / cg)
        / v;
    let sigma_dot = match bank {
        BankDynamics::Lagged => {
            let rate = (sigma_cmd - sigma_state) / model.vehicle.zeta;
            rate.clamp(-model.vehicle.sigma_rate_max, model.vehicle.sigma_rate_max)
        }
        BankDynamics::Frozen => 0.0,
    };
    Ok([r_dot, theta_dot, phi_dot, v_dot, gamma_dot, psi_dot, sigma_dot])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kepler_planet() -> PlanetModel {
        PlanetModel { j2: 0.0, omega: 0.0, ..PlanetModel::uranus() }
    }

    fn state(r: f64, v: f64, gamma: f64) -> SimState {
        SimState { t: 0.0, r, theta: 0.3, phi: -0.17, v, gamma, psi: 0.7, sigma: 0.2 }
    }

    #[test]
    fn vacuum_accels() {
        let veh = VehicleParams::nominal();
        assert_eq!(aero_accels(0.0, 2e4, &veh), (-0.0, 0.0));
        let no_lift = VehicleParams { ld: 0.0, ..veh };
        assert_eq!(aero_accels(1e-4, 2e4, &no_lift).1, 0.0);
    }

    #[test]
    fn drag_magnitude() {
        let veh = VehicleParams::nominal();
        let (ft, fn_) = aero_accels(1e-4, 2e4, &veh);
        // 1e-4 * 4e8 / 290 by hand
        assert!((ft + 137.931_034_482_758_6).abs() < 1e-9);
        assert!((fn_ - 0.25 * 137.931_034_482_758_6).abs() < 1e-9);
    }

    #[test]
    fn level_flight_has_no_climb_rate() {
        let p = PlanetModel::uranus();
        let atm = AtmosphereModel::Vacuum;
        let veh = VehicleParams::nominal();
        let m = ForceModel::new(&p, &atm, &veh);
        let d = eom(&state(p.re + 5e5, 2e4, 0.0), 0.0, &m, BankDynamics::Lagged).unwrap();
        assert_eq!(d[0], 0.0);
    }

    #[test]
    fn circular_orbit_equilibrium() {
        let p = kepler_planet();
        let atm = AtmosphereModel::Vacuum;
        let veh = VehicleParams::nominal();
        let m = ForceModel::new(&p, &atm, &veh);
        let r = p.re + 1e6;
        let v = (p.mu / r).sqrt();
        let d = eom(&state(r, v, 0.0), 0.2, &m, BankDynamics::Lagged).unwrap();
        assert!(d[4].abs() < 1e-18, "gamma_dot = {}", d[4]);
        assert_eq!(d[3], 0.0);
    }

    #[test]
    fn bank_lag_is_rate_limited() {
        let p = PlanetModel::uranus();
        let atm = AtmosphereModel::Vacuum;
        let veh = VehicleParams::nominal();
        let m = ForceModel::new(&p, &atm, &veh);
        let s = SimState { sigma: -3.0, ..state(p.re + 5e5, 2e4, -0.1) };
        let d = eom(&s, 3.0, &m, BankDynamics::Lagged).unwrap();
        assert_eq!(d[6], veh.sigma_rate_max);
        let d = eom(&s, -2.9, &m, BankDynamics::Lagged).unwrap();
        assert!((d[6] - 0.1 / veh.zeta).abs() < 1e-15);
        let d = eom(&s, 3.0, &m, BankDynamics::Frozen).unwrap();
        assert_eq!(d[6], 0.0);
    }

    #[test]
    fn singular_geometry_is_rejected() {
        let p = PlanetModel::uranus();
        let atm = AtmosphereModel::Vacuum;
        let veh = VehicleParams::nominal();
        let m = ForceModel::new(&p, &atm, &veh);
        let s = SimState { phi: std::f64::consts::FRAC_PI_2, ..state(p.re + 5e5, 2e4, -0.1) };
        assert!(matches!(eom(&s, 0.0, &m, BankDynamics::Lagged), Err(DynamicsError::Singular { .. })));
        let s = SimState { gamma: std::f64::consts::FRAC_PI_2, ..state(p.re + 5e5, 2e4, 0.0) };
        assert!(matches!(eom(&s, 0.0, &m, BankDynamics::Lagged), Err(DynamicsError::Singular { .. })));
    }

    #[test]
    fn scales_multiply_aero_terms() {
        let p = kepler_planet();
        let atm = AtmosphereModel::Tabulated(
            crate::env::TabulatedAtmosphere::new(vec![0.0, 1e7], vec![1e-5, 1e-5], 0).unwrap(),
        );
        let veh = VehicleParams::nominal();
        let s = state(p.re + 5e5, 2e4, 0.0);
        let base = eom(&s, 0.0, &ForceModel::new(&p, &atm, &veh), BankDynamics::Frozen).unwrap();
        let vac = eom(&s, 0.0, &ForceModel::new(&p, &AtmosphereModel::Vacuum, &veh), BankDynamics::Frozen).unwrap();
        let scaled = eom(&s, 0.0, &ForceModel::new(&p, &atm, &veh).with_scales(2.0, 3.0), BankDynamics::Frozen).unwrap();
        assert!(((scaled[3] - vac[3]) - 3.0 * (base[3] - vac[3])).abs() < 1e-9);
        assert!(((scaled[4] - vac[4]) - 2.0 * (base[4] - vac[4])).abs() < 1e-12);
    }
}
