//! Probabilistic-indicator correction layered on FNPAG.
//!
//! Every enabled guidance cycle the flown history and the onboard prediction
//! are joined into one energy history, encoded by a trained GMVAE, and turned
//! into mode probabilities. When capture looks unlikely or the scenario's
//! failure mode likely, phase 1 is cut short; in phase 2 the bank magnitude
//! is pushed by `sigma_prime` toward lift-down (escape risk) or lift-up
//! (impact risk) and held there for at least `tau` seconds.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{specific_energy, SimState, TrajectoryMode};
use crate::env::PlanetModel;
use crate::fnpag::{Adjustment, CommandAdjuster, CycleContext, Phase};
use crate::gmvae::{preprocess_normalized, GmvaeError, GmvaeModel};

#[derive(Debug, Error)]
pub enum PipagError {
    #[error("invalid correction parameters: {0}")]
    InvalidParams(&'static str),
    #[error("model does not fit this scenario: {0}")]
    Config(String),
    #[error("empty history and prediction")]
    EmptyInput,
    #[error(transparent)]
    Model(#[from] GmvaeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipagParams {
    /// Capture probability below which a correction triggers.
    pub eps_c: f64,
    /// Failure probability above which a correction triggers.
    pub eps_f: f64,
    /// Correction magnitude [rad].
    pub sigma_prime: f64,
    /// Persistence after a correction [s].
    pub tau: f64,
    /// Reserved: apply the correction after the lateral sign. Must be false.
    pub post_lateral: bool,
}

impl Default for PipagParams {
    fn default() -> Self {
        Self::near_escape()
    }
}

impl PipagParams {
    pub fn near_escape() -> Self {
        Self { eps_c: 0.975, eps_f: 0.025, sigma_prime: 40f64.to_radians(), tau: 40.0, post_lateral: false }
    }

    pub fn near_impact() -> Self {
        Self { sigma_prime: 10f64.to_radians(), tau: 10.0, ..Self::near_escape() }
    }

    /// Thresholds that can never trigger.
    pub fn thresholds_disabled(self) -> Self {
        Self { eps_c: 0.0, eps_f: 1.0, ..self }
    }

    pub fn for_failure_mode(mode: TrajectoryMode) -> Self {
        match mode {
            TrajectoryMode::Impact => Self::near_impact(),
            _ => Self::near_escape(),
        }
    }

    pub fn validate(&self) -> Result<(), PipagError> {
        if !(self.eps_c >= 0.0 && self.eps_c <= 1.0) {
            return Err(PipagError::InvalidParams("eps_c must lie in [0, 1]"));
        }
        if !(self.eps_f >= 0.0 && self.eps_f <= 1.0) {
            return Err(PipagError::InvalidParams("eps_f must lie in [0, 1]"));
        }
        if !(self.sigma_prime >= 0.0 && self.sigma_prime <= PI) {
            return Err(PipagError::InvalidParams("sigma_prime must lie in [0, pi]"));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(PipagError::InvalidParams("tau must be finite and non-negative"));
        }
        if self.post_lateral {
            return Err(PipagError::InvalidParams("post-lateral correction is not implemented"));
        }
        Ok(())
    }

    /// Whether the layer can ever change a command.
    pub fn is_active(&self) -> bool {
        self.sigma_prime > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipagState {
    /// Time of the last bank correction.
    pub t_c: Option<f64>,
    pub bank_corrected: bool,
    /// Latest probabilities in [`TrajectoryMode::ALL`] order.
    pub mode_probabilities: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correction {
    pub sigma: f64,
    pub corrected: bool,
    pub forced_phase2: bool,
}

/// Applies the threshold test and persistence rule to one FNPAG magnitude.
pub fn correct(
    sigma_star: f64,
    probs: &[f64; 3],
    phase: Phase,
    params: &PipagParams,
    state: &mut PipagState,
    t_k: f64,
    failure_mode: TrajectoryMode,
) -> Correction {
    state.mode_probabilities = *probs;
    state.bank_corrected = false;
    let pass = Correction { sigma: sigma_star, corrected: false, forced_phase2: false };
    if !params.is_active() {
        return pass;
    }
    let shift = |s: f64| {
        let d = if failure_mode == TrajectoryMode::Impact { -params.sigma_prime } else { params.sigma_prime };
        (s + d).clamp(0.0, PI)
    };
    let p_capture = probs[TrajectoryMode::Capture.index()];
    let p_failure = probs[failure_mode.index()];
    if p_capture < params.eps_c || p_failure > params.eps_f {
        if phase == Phase::One {
            return Correction { forced_phase2: true, ..pass };
        }
        state.t_c = Some(t_k);
        state.bank_corrected = true;
        return Correction { sigma: shift(sigma_star), corrected: true, forced_phase2: false };
    }
    match state.t_c {
        Some(t_c) if phase == Phase::Two && t_k - t_c < params.tau => {
            state.bank_corrected = true;
            Correction { sigma: shift(sigma_star), corrected: true, forced_phase2: false }
        }
        _ => pass,
    }
}

/// Mode probabilities and encoder mean for one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorOutput {
    pub probabilities: [f64; 3],
    pub latent: Vec<f64>,
}

/// Joins `history` and `prediction` (dropping prediction states that do not
/// advance time), preprocesses the energy like the training data and reads
/// the mode probabilities off the mixture responsibilities.
pub fn indicator(
    history: &[SimState],
    prediction: &[SimState],
    model: &GmvaeModel,
    planet: &PlanetModel,
) -> Result<IndicatorOutput, PipagError> {
    let spec = model.input.as_ref().ok_or_else(|| PipagError::Config("model has no input specification".into()))?;
    let t_last = history.last().map_or(f64::NEG_INFINITY, |s| s.t);
    let joined = history.iter().chain(prediction.iter().filter(|s| s.t > t_last));
    let (times, energy): (Vec<f64>, Vec<f64>) = joined.map(|s| (s.t, specific_energy(s, planet))).unzip();
    if times.is_empty() {
        return Err(PipagError::EmptyInput);
    }
    let x = preprocess_normalized(&times, &energy, &spec.time_grid, spec.normalization, spec.norm_constant)?;
    let (z, _) = model.encode_one(&x)?;
    let gamma = model.latent.responsibilities(&z);
    let mut probabilities = [0.0; 3];
    for (g, m) in gamma.iter().zip(&model.cluster_to_mode) {
        probabilities[m.index()] += g;
    }
    Ok(IndicatorOutput { probabilities, latent: z })
}

/// One row of indicator telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRecord {
    pub t: f64,
    pub p_capture: f64,
    pub p_failure: f64,
    pub corrected: bool,
    pub forced_phase2: bool,
    pub sigma_corrected: f64,
    pub latent: Vec<f64>,
}

pub fn write_indicator_csv<W: Write>(records: &[IndicatorRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,P_capture,P_failure,corrected,forced_phase2,sigma_corrected")?;
    for r in records {
        writeln!(
            w,
            "{:?},{:?},{:?},{},{},{:?}",
            r.t, r.p_capture, r.p_failure, r.corrected as u8, r.forced_phase2 as u8, r.sigma_corrected
        )?;
    }
    Ok(())
}

/// Encoder means per enabled cycle.
pub fn write_latent_csv<W: Write>(records: &[IndicatorRecord], mut w: W) -> std::io::Result<()> {
    let l = records.first().map_or(0, |r| r.latent.len());
    let cols: Vec<String> = (0..l).map(|j| format!("z{j}")).collect();
    writeln!(w, "t,{}", cols.join(","))?;
    for r in records {
        let z: Vec<String> = r.latent.iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{:?},{}", r.t, z.join(","))?;
    }
    Ok(())
}

/// [`CommandAdjuster`] running the indicator and correction each cycle.
pub struct PipagAdjuster<'m> {
    model: &'m GmvaeModel,
    pub params: PipagParams,
    pub state: PipagState,
    failure_mode: TrajectoryMode,
    planet: PlanetModel,
    pub records: Vec<IndicatorRecord>,
    pub corrected_cycles: u32,
    /// Cycles where the indicator could not be evaluated.
    pub indicator_failures: u32,
}

impl<'m> PipagAdjuster<'m> {
    /// Checks that `model` was trained for `scenario` before wiring it in.
    pub fn new(model: &'m GmvaeModel, params: PipagParams, scenario: &str, failure_mode: TrajectoryMode, planet: PlanetModel) -> Result<Self, PipagError> {
        params.validate()?;
        let spec = model.input.as_ref().ok_or_else(|| PipagError::Config("model has no input specification".into()))?;
        if spec.scenario != scenario {
            return Err(PipagError::Config(format!("model trained for {}, used for {scenario}", spec.scenario)));
        }
        if spec.failure_mode != failure_mode {
            return Err(PipagError::Config(format!("model guards against {}, scenario against {failure_mode}", spec.failure_mode)));
        }
        if spec.time_grid.len() != model.input_dim() {
            return Err(PipagError::Config("time grid does not match the encoder input".into()));
        }
        model.validate()?;
        Ok(Self {
            model,
            params,
            state: PipagState::default(),
            failure_mode,
            planet,
            records: Vec::new(),
            corrected_cycles: 0,
            indicator_failures: 0,
        })
    }
}

impl CommandAdjuster for PipagAdjuster<'_> {
    fn wants_prediction(&self) -> bool {
        self.params.is_active()
    }

    fn adjust(&mut self, ctx: &CycleContext<'_>) -> Adjustment {
        if !self.params.is_active() {
            return Adjustment { sigma: ctx.sigma_star, force_phase2: false };
        }
        let (probs, latent) = match indicator(ctx.history, ctx.prediction, self.model, &self.planet) {
            Ok(out) => (out.probabilities, out.latent),
            Err(_) => {
                // No evidence this cycle: only persistence can act.
                self.indicator_failures += 1;
                let mut p = [0.0; 3];
                p[TrajectoryMode::Capture.index()] = 1.0;
                (p, Vec::new())
            }
        };
        let c = correct(ctx.sigma_star, &probs, ctx.phase, &self.params, &mut self.state, ctx.t, self.failure_mode);
        if c.corrected {
            self.corrected_cycles += 1;
        }
        self.records.push(IndicatorRecord {
            t: ctx.t,
            p_capture: probs[TrajectoryMode::Capture.index()],
            p_failure: probs[self.failure_mode.index()],
            corrected: c.corrected,
            forced_phase2: c.forced_phase2,
            sigma_corrected: c.sigma,
            latent,
        });
        Adjustment { sigma: c.sigma, force_phase2: c.forced_phase2 }
    }
}
