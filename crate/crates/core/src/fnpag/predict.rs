use super::{FadingFilter, FnpagConfig, OnboardModel};
use crate::dynamics::{rk4_step, BankDynamics, DynamicsError, ForceModel, SimState};

/// Signed bank schedule flown by a prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BankProfile {
    /// `sigma_0` until `t_switch`, `sigma_f` afterwards.
    Switch { sigma_0: f64, sigma_f: f64, t_switch: f64 },
    Constant(f64),
}

impl BankProfile {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            BankProfile::Switch { sigma_0, sigma_f, t_switch } => {
                if t < t_switch {
                    sigma_0
                } else {
                    sigma_f
                }
            }
            BankProfile::Constant(s) => s,
        }
    }

    fn next_break(&self, t: f64) -> Option<f64> {
        match *self {
            BankProfile::Switch { t_switch, .. } if t_switch > t + 1e-9 => Some(t_switch),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub dt: f64,
    pub t_f: f64,
    pub exit_altitude: f64,
    pub coast_dt: f64,
    pub lift_scale: f64,
    pub drag_scale: f64,
}

impl PredictOptions {
    pub fn from_config(config: &FnpagConfig, filter: Option<&FadingFilter>) -> Self {
        let (lift_scale, drag_scale) = filter.map_or((1.0, 1.0), |f| (f.rho_l, f.rho_d));
        Self {
            dt: config.prediction_dt,
            t_f: config.t_f,
            exit_altitude: config.exit_altitude,
            coast_dt: config.coast_dt,
            lift_scale,
            drag_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionEnd {
    Exit,
    FinalTime,
    /// Reached zero altitude.
    Surface,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub exit: SimState,
    pub end: PredictionEnd,
}

#[inline]
fn lerp(a: &SimState, b: &SimState, f: f64) -> SimState {
    let l = |x: f64, y: f64| x + f * (y - x);
    SimState {
        t: l(a.t, b.t),
        r: l(a.r, b.r),
        theta: l(a.theta, b.theta),
        phi: l(a.phi, b.phi),
        v: l(a.v, b.v),
        gamma: l(a.gamma, b.gamma),
        psi: l(a.psi, b.psi),
        sigma: b.sigma,
    }
}

/// Integrates the onboard model with the bank held at the profile value
/// (no lag) until atmospheric exit, surface contact or `t_f`.
///
/// Exit and surface crossings are interpolated within the last step so the
/// returned state varies continuously with the profile.
pub fn predict_to_exit(
    current: &SimState,
    profile: &BankProfile,
    onboard: &OnboardModel,
    opts: &PredictOptions,
) -> Result<Prediction, DynamicsError> {
    run(current, profile, onboard, opts, None)
}

/// Like [`predict_to_exit`] but records every state and, after exit, keeps
/// coasting with `coast_dt` steps until `t_f` or surface contact.
pub fn predict_path(
    current: &SimState,
    profile: &BankProfile,
    onboard: &OnboardModel,
    opts: &PredictOptions,
    path: &mut Vec<SimState>,
) -> Result<Prediction, DynamicsError> {
    path.clear();
    run(current, profile, onboard, opts, Some(path))
}

fn run(
    current: &SimState,
    profile: &BankProfile,
    onboard: &OnboardModel,
    opts: &PredictOptions,
    mut record: Option<&mut Vec<SimState>>,
) -> Result<Prediction, DynamicsError> {
    let planet = &onboard.planet;
    let model = ForceModel::new(planet, &onboard.atmosphere, &onboard.vehicle)
        .with_scales(opts.lift_scale, opts.drag_scale);
    let exit_r = planet.re + opts.exit_altitude;
    let mut s = SimState { sigma: profile.at(current.t), ..*current };
    if let Some(p) = record.as_deref_mut() {
        p.push(s);
    }

    let mut end = None;
    if s.r >= exit_r && s.gamma > 0.0 {
        end = Some((s, PredictionEnd::Exit));
    }
    while end.is_none() {
        if s.t >= opts.t_f - 1e-9 {
            end = Some((s, PredictionEnd::FinalTime));
            break;
        }
        let next = step(&s, profile, &model, opts.dt, opts.t_f)?;
        if next.r <= planet.re {
            let hit = lerp(&s, &next, (s.r - planet.re) / (s.r - next.r));
            if let Some(p) = record.as_deref_mut() {
                p.push(hit);
            }
            return Ok(Prediction { exit: hit, end: PredictionEnd::Surface });
        }
        if next.r >= exit_r && next.gamma > 0.0 {
            let exit = if s.r < exit_r { lerp(&s, &next, (exit_r - s.r) / (next.r - s.r)) } else { next };
            end = Some((exit, PredictionEnd::Exit));
        }
        s = next;
        if let Some(p) = record.as_deref_mut() {
            p.push(s);
        }
    }
    let (exit, end) = end.expect("loop only exits with an end");

    if let (Some(path), PredictionEnd::Exit) = (record, end) {
        while s.t < opts.t_f - 1e-9 {
            let next = step(&s, profile, &model, opts.coast_dt, opts.t_f)?;
            if next.r <= planet.re {
                path.push(lerp(&s, &next, (s.r - planet.re) / (s.r - next.r)));
                break;
            }
            s = next;
            path.push(s);
        }
    }
    Ok(Prediction { exit, end })
}

#[inline]
fn step(
    s: &SimState,
    profile: &BankProfile,
    model: &ForceModel<'_>,
    dt: f64,
    t_f: f64,
) -> Result<SimState, DynamicsError> {
    let mut h = dt.min(t_f - s.t);
    if let Some(tb) = profile.next_break(s.t) {
        h = h.min(tb - s.t);
    }
    let sigma = profile.at(s.t);
    let x = rk4_step(s.t, &SimState { sigma, ..*s }.to_array(), h, sigma, model, BankDynamics::Frozen)?;
    let next = SimState::from_array(s.t + h, x);
    if !x.iter().all(|v| v.is_finite()) || !(next.v > 0.0) {
        return Err(DynamicsError::InvalidState(format!("prediction diverged at t = {}", s.t)));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{propagate, ConstantBank, VehicleParams};
    use crate::env::{AtmosphereModel, PlanetModel};

    fn entry(p: &PlanetModel) -> SimState {
        SimState {
            t: 0.0,
            r: p.re + 1000e3,
            theta: 3.317,
            phi: -0.1704,
            v: 22_400.0,
            gamma: (-11.0f64).to_radians(),
            psi: 0.8,
            sigma: 0.0,
        }
    }

    fn opts(dt: f64) -> PredictOptions {
        PredictOptions { dt, t_f: 1500.0, exit_altitude: 1000e3, coast_dt: 10.0, lift_scale: 1.0, drag_scale: 1.0 }
    }

    #[test]
    fn matches_truth_propagation_without_lag() {
        let onboard = OnboardModel::uranus();
        let p = onboard.planet;
        // A near-instant lag with a very high rate limit makes the truth bank track the command.
        let veh = VehicleParams { zeta: 1e-3, sigma_rate_max: 1e6, ..onboard.vehicle };
        let s0 = SimState { sigma: 1.0, ..entry(&p) };
        let pred = predict_to_exit(&s0, &BankProfile::Constant(1.0), &onboard, &opts(1.0)).unwrap();
        assert_eq!(pred.end, PredictionEnd::Exit);
        let truth = propagate(&s0, &mut ConstantBank(1.0), &p, &onboard.atmosphere, &veh, pred.exit.t.ceil(), 1.0).unwrap();
        let after = truth.states.iter().find(|s| s.t >= pred.exit.t).unwrap();
        let before = truth.states.iter().rev().find(|s| s.t <= pred.exit.t).unwrap();
        let f = (pred.exit.t - before.t) / (after.t - before.t);
        let v = before.v + f * (after.v - before.v);
        assert!((v - pred.exit.v).abs() < 0.05, "{v} vs {}", pred.exit.v);
    }

    #[test]
    fn lift_up_exits_with_more_energy() {
        let onboard = OnboardModel::uranus();
        let p = onboard.planet;
        let s0 = entry(&p);
        let up = predict_to_exit(&s0, &BankProfile::Constant(0.0), &onboard, &opts(2.0)).unwrap();
        let down = predict_to_exit(&s0, &BankProfile::Constant(std::f64::consts::PI), &onboard, &opts(2.0)).unwrap();
        assert!(up.exit.energy(p.mu) > down.exit.energy(p.mu));
    }

    #[test]
    fn already_exited_returns_immediately() {
        let onboard = OnboardModel::uranus();
        let p = onboard.planet;
        let s0 = SimState { r: p.re + 1200e3, gamma: 0.1, t: 321.0, ..entry(&p) };
        let pred = predict_to_exit(&s0, &BankProfile::Constant(0.5), &onboard, &opts(2.0)).unwrap();
        assert_eq!(pred.end, PredictionEnd::Exit);
        assert_eq!(pred.exit.t, 321.0);
        assert_eq!(pred.exit.r, s0.r);
    }

    #[test]
    fn steep_entry_hits_surface() {
        let onboard = OnboardModel {
            atmosphere: AtmosphereModel::Vacuum,
            ..OnboardModel::uranus()
        };
        let p = onboard.planet;
        let s0 = SimState { gamma: -1.2, ..entry(&p) };
        let pred = predict_to_exit(&s0, &BankProfile::Constant(0.0), &onboard, &opts(2.0)).unwrap();
        assert_eq!(pred.end, PredictionEnd::Surface);
        assert!((pred.exit.r - p.re).abs() < 1e-6);
    }

    #[test]
    fn switch_profile_splits_the_step() {
        let prof = BankProfile::Switch { sigma_0: 0.1, sigma_f: 1.5, t_switch: 10.5 };
        assert_eq!(prof.at(10.4), 0.1);
        assert_eq!(prof.at(10.5), 1.5);
        let onboard = OnboardModel::uranus();
        let s0 = entry(&onboard.planet);
        let mut path = Vec::new();
        predict_path(&s0, &prof, &onboard, &opts(2.0), &mut path).unwrap();
        assert!(path.iter().any(|s| (s.t - 10.5).abs() < 1e-12));
        assert!((path.last().unwrap().t - 1500.0).abs() < 1e-9 || path.last().unwrap().r <= onboard.planet.re + 1e-6);
    }

    #[test]
    fn recorded_path_ends_at_the_exit_of_the_plain_prediction() {
        let onboard = OnboardModel::uranus();
        let s0 = entry(&onboard.planet);
        let prof = BankProfile::Constant(1.2);
        let plain = predict_to_exit(&s0, &prof, &onboard, &opts(2.0)).unwrap();
        let mut path = Vec::new();
        let rec = predict_path(&s0, &prof, &onboard, &opts(2.0), &mut path).unwrap();
        assert_eq!(plain, rec);
        assert!(path.windows(2).all(|w| w[1].t > w[0].t));
    }
}
