use super::predict::{predict_to_exit, BankProfile, PredictOptions};
use super::{energy_error, FnpagConfig, GuidanceError, OnboardModel};
use crate::dynamics::SimState;
use crate::roots::{try_brent_root, BrentOptions, RootError};

/// Result of one guidance solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution {
    /// Switching time (phase 1) or bank magnitude (phase 2).
    pub value: f64,
    pub err: f64,
    /// No sign change across the bracket; `value` is the better endpoint.
    pub saturated: bool,
    pub iterations: usize,
}

fn solve<F>(f: F, a: f64, b: f64, opts: &BrentOptions) -> Result<Solution, GuidanceError>
where
    F: FnMut(f64) -> Result<f64, GuidanceError>,
{
    match try_brent_root(f, a, b, opts) {
        Ok(root) => Ok(Solution { value: root.x, err: root.f, saturated: false, iterations: root.iterations }),
        Err(RootError::NoBracket { best, .. }) => Ok(Solution { value: best.x, err: best.f, saturated: true, iterations: 0 }),
        Err(RootError::MaxIterations { best }) => Ok(Solution { value: best.x, err: best.f, saturated: false, iterations: best.iterations }),
        Err(RootError::Eval { source, .. }) => Err(source),
        Err(RootError::NonFinite(x)) => Err(GuidanceError::Prediction {
            candidate: x,
            source: crate::dynamics::DynamicsError::InvalidState("non-finite energy error".into()),
        }),
    }
}

/// Switching time in `[t_now, t_f]` that zeroes the exit energy error.
pub fn solve_phase1(
    current: &SimState,
    config: &FnpagConfig,
    onboard: &OnboardModel,
    opts: &PredictOptions,
    bank_sign: f64,
) -> Result<Solution, GuidanceError> {
    let f = |t_switch: f64| {
        let profile = BankProfile::Switch {
            sigma_0: bank_sign * config.sigma_0,
            sigma_f: bank_sign * config.sigma_f,
            t_switch,
        };
        predict_to_exit(current, &profile, onboard, opts)
            .map(|p| energy_error(&p.exit, config.r_a_target, &onboard.planet))
            .map_err(|source| GuidanceError::Prediction { candidate: t_switch, source })
    };
    let brent = BrentOptions { xtol: config.time_tol, ftol: 0.0, max_iter: config.max_iter };
    solve(f, current.t, config.t_f.max(current.t), &brent)
}

/// Constant bank magnitude in the configured bracket that zeroes the exit energy error.
pub fn solve_phase2(
    current: &SimState,
    config: &FnpagConfig,
    onboard: &OnboardModel,
    opts: &PredictOptions,
    bank_sign: f64,
) -> Result<Solution, GuidanceError> {
    let f = |sigma: f64| {
        predict_to_exit(current, &BankProfile::Constant(bank_sign * sigma), onboard, opts)
            .map(|p| energy_error(&p.exit, config.r_a_target, &onboard.planet))
            .map_err(|source| GuidanceError::Prediction { candidate: sigma, source })
    };
    let brent = BrentOptions { xtol: config.bank_tol, ftol: 0.0, max_iter: config.max_iter };
    let (lo, hi) = config.bank_bracket;
    solve(f, lo, hi, &brent)
}
