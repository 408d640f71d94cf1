use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::lateral::{inclination, lateral_logic};
use super::predict::{predict_path, BankProfile, PredictOptions};
use super::solve::{solve_phase1, solve_phase2};
use super::{FadingFilter, FnpagConfig, FnpagState, OnboardModel, Phase};
use crate::dynamics::{aero_accels, AeroSensing, BankController, SimState};
use crate::env::EARTH_G0;

/// What a command adjuster sees once per enabled guidance cycle.
pub struct CycleContext<'a> {
    pub t: f64,
    pub phase: Phase,
    /// Bank magnitude FNPAG would command this cycle [rad].
    pub sigma_star: f64,
    /// Flown states up to and including the current one.
    pub history: &'a [SimState],
    /// Onboard prediction of the planned profile from the current state to `t_f`.
    pub prediction: &'a [SimState],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    /// Bank magnitude to fly [rad].
    pub sigma: f64,
    pub force_phase2: bool,
}

/// Hook that may modify the FNPAG bank magnitude after each solve.
pub trait CommandAdjuster {
    /// Whether the adjuster needs the recorded prediction in [`CycleContext`].
    fn wants_prediction(&self) -> bool {
        true
    }
    fn adjust(&mut self, ctx: &CycleContext<'_>) -> Adjustment;
}

/// Leaves every command untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

impl CommandAdjuster for Passthrough {
    fn wants_prediction(&self) -> bool {
        false
    }
    fn adjust(&mut self, ctx: &CycleContext<'_>) -> Adjustment {
        Adjustment { sigma: ctx.sigma_star, force_phase2: false }
    }
}

/// One row of guidance telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceRecord {
    pub t: f64,
    pub phase: u8,
    pub sigma_command: f64,
    pub t_switch: f64,
    pub err: f64,
    pub rho_l: f64,
    pub rho_d: f64,
    pub guid_enabled: bool,
}

pub fn write_guidance_csv<W: Write>(records: &[GuidanceRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,phase,sigma_command,t_switch,err,rho_L_tilde,rho_D_tilde,guid_enabled")?;
    for r in records {
        writeln!(
            w,
            "{:?},{},{:?},{:?},{:?},{:?},{:?},{}",
            r.t, r.phase, r.sigma_command, r.t_switch, r.err, r.rho_l, r.rho_d, r.guid_enabled as u8
        )?;
    }
    Ok(())
}

/// Closed-loop FNPAG controller with an optional command adjuster.
pub struct Guidance<'a, A: CommandAdjuster = Passthrough> {
    config: FnpagConfig,
    onboard: &'a OnboardModel,
    pub state: FnpagState,
    pub filter: FadingFilter,
    pub adjuster: A,
    target_inclination: Option<f64>,
    history: Vec<SimState>,
    telemetry: Vec<GuidanceRecord>,
    prediction: Vec<SimState>,
    next_cycle: f64,
    /// Cycles whose solve failed and fell back to the previous command.
    pub solver_failures: u32,
}

impl<'a> Guidance<'a, Passthrough> {
    pub fn new(config: FnpagConfig, onboard: &'a OnboardModel) -> Self {
        Guidance::with_adjuster(config, onboard, Passthrough)
    }
}

impl<'a, A: CommandAdjuster> Guidance<'a, A> {
    pub fn with_adjuster(config: FnpagConfig, onboard: &'a OnboardModel, adjuster: A) -> Self {
        let state = FnpagState::new(&config);
        let filter = FadingFilter::new(config.chi);
        Self {
            target_inclination: config.lateral.target_inclination,
            config,
            onboard,
            state,
            filter,
            adjuster,
            history: Vec::new(),
            telemetry: Vec::new(),
            prediction: Vec::new(),
            next_cycle: f64::NEG_INFINITY,
            solver_failures: 0,
        }
    }

    pub fn config(&self) -> &FnpagConfig {
        &self.config
    }

    pub fn telemetry(&self) -> &[GuidanceRecord] {
        &self.telemetry
    }

    pub fn history(&self) -> &[SimState] {
        &self.history
    }

    fn predict_options(&self) -> PredictOptions {
        PredictOptions::from_config(&self.config, self.config.fading_filter.then_some(&self.filter))
    }

    fn planned_profile(&self) -> BankProfile {
        let sign = self.state.bank_sign;
        match self.state.phase {
            Phase::One => BankProfile::Switch {
                sigma_0: sign * self.config.sigma_0,
                sigma_f: sign * self.config.sigma_f,
                t_switch: self.state.t_switch,
            },
            Phase::Two => BankProfile::Constant(sign * self.state.sigma_star),
        }
    }

    /// One guidance cycle: returns the signed bank command.
    fn cycle(&mut self, s: &SimState, sensed: &AeroSensing) -> f64 {
        let cfg = &self.config;
        let planet = &self.onboard.planet;
        if self.target_inclination.is_none() {
            self.target_inclination = Some(inclination(s, planet));
        }

        let enabled = sensed.total() / EARTH_G0 >= cfg.g_limit;
        self.state.guid_enabled = enabled;
        if enabled && self.state.enabled_at.is_none() {
            self.state.enabled_at = Some(s.t);
        }
        if enabled && cfg.fading_filter {
            let rho = self.onboard.atmosphere.density(s.r - planet.re);
            let (drag, lift) = aero_accels(rho, s.v, &self.onboard.vehicle);
            self.filter.update(sensed.lift, sensed.drag, lift, -drag);
        }

        let mut magnitude_override = None;
        if enabled {
            let opts = self.predict_options();
            let sign = self.state.bank_sign;
            let solved = match self.state.phase {
                Phase::One => solve_phase1(s, &self.config, self.onboard, &opts, sign).map(|sol| {
                    self.state.t_switch = sol.value;
                    self.state.sigma_star = self.config.sigma_f;
                    sol.err
                }),
                Phase::Two => solve_phase2(s, &self.config, self.onboard, &opts, sign).map(|sol| {
                    self.state.sigma_star = sol.value;
                    sol.err
                }),
            };
            match solved {
                Ok(err) => self.state.err = err,
                Err(_) => self.solver_failures += 1,
            }

            if self.adjuster.wants_prediction() {
                let profile = self.planned_profile();
                // A failed prediction leaves whatever prefix was recorded.
                let _ = predict_path(s, &profile, self.onboard, &opts, &mut self.prediction);
            }
            let planned = if s.t < self.state.t_switch { self.config.sigma_0 } else { self.state.sigma_star };
            let ctx = CycleContext {
                t: s.t,
                phase: self.state.phase,
                sigma_star: planned,
                history: &self.history,
                prediction: &self.prediction,
            };
            let adj = self.adjuster.adjust(&ctx);
            if adj.force_phase2 && self.state.phase == Phase::One {
                self.state.phase = Phase::Two;
                self.state.t_switch = s.t;
            } else if self.state.phase == Phase::Two {
                magnitude_override = Some(adj.sigma);
            }

            let target = self.target_inclination.unwrap_or(0.0);
            let sign = lateral_logic(s, planet, target, self.config.lateral.deadband, self.state.bank_sign);
            if sign != self.state.bank_sign && self.state.reversals < self.config.lateral.max_reversals {
                self.state.bank_sign = sign;
                self.state.reversals += 1;
            }
        }

        let magnitude = if s.t < self.state.t_switch {
            self.config.sigma_0
        } else {
            magnitude_override.unwrap_or(self.state.sigma_star)
        };
        let command = self.state.bank_sign * magnitude.clamp(0.0, PI);
        self.state.last_command = command;
        self.telemetry.push(GuidanceRecord {
            t: s.t,
            phase: self.state.phase.number(),
            sigma_command: command,
            t_switch: self.state.t_switch,
            err: self.state.err,
            rho_l: self.filter.rho_l,
            rho_d: self.filter.rho_d,
            guid_enabled: enabled,
        });
        command
    }
}

impl<A: CommandAdjuster> BankController for Guidance<'_, A> {
    fn command(&mut self, state: &SimState, sensed: &AeroSensing) -> f64 {
        if self.history.last().map_or(true, |h| state.t > h.t) {
            self.history.push(*state);
        }
        if self.state.phase == Phase::One && state.t > self.state.t_switch {
            self.state.phase = Phase::Two;
        }
        if state.t + 1e-9 < self.next_cycle {
            return self.state.last_command;
        }
        self.next_cycle = state.t + self.config.guidance_period;
        self.cycle(state, sensed)
    }
}
