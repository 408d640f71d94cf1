use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_trial, sub_seed, CampaignError, DispersionSpec, Scenario};
use crate::dynamics::{inertial_to_relative, propagate, ScheduledBank, Trajectory, TrajectoryMode, VehicleParams};
use crate::env::{generate_truth_atmosphere, AtmosphereModel, PerturbationSpec, PlanetModel, PolyAtmosphere, TabulatedAtmosphere};
use crate::fnpag::{FnpagConfig, Guidance, GuidanceRecord, OnboardModel};
use crate::gmvae::GmvaeModel;
use crate::pipag::{IndicatorRecord, PipagAdjuster, PipagParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidanceKind {
    Fnpag,
    Pipag,
}

/// Guidance algorithm plus whether the fading filter runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variant {
    pub kind: GuidanceKind,
    pub fading_filter: bool,
}

impl Variant {
    pub const FNPAG: Variant = Variant { kind: GuidanceKind::Fnpag, fading_filter: true };
    pub const PIPAG: Variant = Variant { kind: GuidanceKind::Pipag, fading_filter: true };

    /// The four guidance/filter combinations.
    pub fn ablation() -> [Variant; 4] {
        [
            Variant::FNPAG,
            Variant { fading_filter: false, ..Variant::FNPAG },
            Variant::PIPAG,
            Variant { fading_filter: false, ..Variant::PIPAG },
        ]
    }

    pub fn id(&self) -> String {
        let k = match self.kind {
            GuidanceKind::Fnpag => "fnpag",
            GuidanceKind::Pipag => "pipag",
        };
        if self.fading_filter {
            k.to_string()
        } else {
            format!("{k}-noff")
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.id())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (k, ff) = match s.strip_suffix("-noff") {
            Some(k) => (k, false),
            None => (s, true),
        };
        let kind = match k {
            "fnpag" => GuidanceKind::Fnpag,
            "pipag" => GuidanceKind::Pipag,
            _ => return Err(format!("unknown variant `{s}`; expected fnpag, pipag, fnpag-noff or pipag-noff")),
        };
        Ok(Variant { kind, fading_filter: ff })
    }
}

/// Everything a campaign needs besides the variant and the trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSettings {
    pub scenario: Scenario,
    pub dispersion: DispersionSpec,
    /// Mean density model: the onboard model and the centre of the truth profiles.
    pub mean_atmosphere: PolyAtmosphere,
    pub perturbation: PerturbationSpec,
    /// Multiplies every truth density; 1 leaves the perturbed profile alone.
    pub density_bias: f64,
    /// Fly the truth in the mean atmosphere itself, ignoring the perturbation
    /// and the bias.
    pub model_matched: bool,
    pub planet: PlanetModel,
    pub nominal_vehicle: VehicleParams,
    /// The target apoapsis is taken from the scenario.
    pub fnpag: FnpagConfig,
    pub pipag: PipagParams,
    pub master_seed: u64,
    /// Truth integration step [s].
    pub dt: f64,
    /// Bank held before the replay switches to full lift-up or lift-down [rad].
    pub replay_initial_bank: f64,
}

impl CampaignSettings {
    pub fn new(scenario: Scenario, master_seed: u64) -> Self {
        Self {
            scenario,
            dispersion: DispersionSpec::default(),
            mean_atmosphere: PolyAtmosphere::uranus(),
            perturbation: PerturbationSpec::default(),
            density_bias: 1.0,
            model_matched: false,
            planet: PlanetModel::uranus(),
            nominal_vehicle: VehicleParams::nominal(),
            fnpag: FnpagConfig::default(),
            pipag: PipagParams::for_failure_mode(scenario.failure_mode),
            master_seed,
            dt: 1.0,
            replay_initial_bank: 10f64.to_radians(),
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        self.dispersion.validate()?;
        self.scenario.validate(&self.planet)?;
        self.perturbation.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
        self.planet.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
        self.fnpag.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
        self.pipag.validate().map_err(|e| CampaignError::Config(e.to_string()))?;
        if !(self.dt > 0.0) || !(self.density_bias > 0.0) {
            return Err(CampaignError::Config("dt and density_bias must be positive".into()));
        }
        Ok(())
    }

    fn guidance_config(&self, variant: Variant) -> FnpagConfig {
        FnpagConfig { r_a_target: self.scenario.r_a_target, fading_filter: variant.fading_filter, ..self.fnpag.clone() }
    }

    pub fn onboard(&self) -> OnboardModel {
        OnboardModel {
            planet: self.planet,
            atmosphere: AtmosphereModel::Polynomial(self.mean_atmosphere.clone()),
            vehicle: self.nominal_vehicle,
        }
    }

    pub fn trial_seed(&self, trial: u64) -> u64 {
        sub_seed(self.master_seed, "dispersion", trial)
    }

    /// Truth atmosphere for an atmosphere seed.
    pub fn truth_atmosphere(&self, seed: u64) -> Result<AtmosphereModel, CampaignError> {
        if self.model_matched {
            return Ok(AtmosphereModel::Polynomial(self.mean_atmosphere.clone()));
        }
        let t = generate_truth_atmosphere(&self.mean_atmosphere, &self.perturbation, seed)
            .map_err(|e| CampaignError::Config(e.to_string()))?;
        if self.density_bias == 1.0 {
            return Ok(AtmosphereModel::Tabulated(t));
        }
        let rho = t.densities().iter().map(|d| d * self.density_bias).collect();
        let t = TabulatedAtmosphere::new(t.altitudes().to_vec(), rho, seed).map_err(|e| CampaignError::Config(e.to_string()))?;
        Ok(AtmosphereModel::Tabulated(t))
    }
}

/// Persisted per-trial result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub seed: u64,
    pub atmosphere_seed: u64,
    pub variant: Variant,
    /// `None` when the trial could not be flown.
    pub mode: Option<TrajectoryMode>,
    /// Apoapsis radius [m] for elliptic exits.
    pub r_a: Option<f64>,
    /// Apoapsis error [m], captures only.
    pub r_a_error: Option<f64>,
    pub corrected_cycles: u32,
    /// Time guidance first enabled [s].
    pub enabled_at: Option<f64>,
    pub error: Option<String>,
}

/// A trial with its full telemetry.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub trajectory: Option<Trajectory>,
    pub guidance: Vec<GuidanceRecord>,
    pub indicator: Vec<IndicatorRecord>,
}

/// Flies one dispersed trial. The onboard models are the nominal ones; the
/// truth uses the sampled vehicle and a perturbed atmosphere.
pub fn run_trial(settings: &CampaignSettings, variant: Variant, model: Option<&GmvaeModel>, trial: u64) -> TrialOutcome {
    let seed = settings.trial_seed(trial);
    let sample = sample_trial(&settings.dispersion, &settings.scenario, &settings.nominal_vehicle, seed);
    let mut result = TrialResult {
        trial,
        seed,
        atmosphere_seed: sample.atmosphere_seed,
        variant,
        mode: None,
        r_a: None,
        r_a_error: None,
        corrected_cycles: 0,
        enabled_at: None,
        error: None,
    };
    let mut outcome = TrialOutcome { result: result.clone(), trajectory: None, guidance: Vec::new(), indicator: Vec::new() };
    let fail = |mut o: TrialOutcome, msg: String| {
        o.result.error = Some(msg);
        o
    };

    let atmosphere = match settings.truth_atmosphere(sample.atmosphere_seed) {
        Ok(a) => a,
        Err(e) => return fail(outcome, e.to_string()),
    };
    let s0 = match inertial_to_relative(&sample.entry, &settings.planet) {
        Ok(s) => s,
        Err(e) => return fail(outcome, e.to_string()),
    };
    let onboard = settings.onboard();
    let config = settings.guidance_config(variant);
    let t_f = config.t_f;
    let flown = match variant.kind {
        GuidanceKind::Fnpag => {
            let mut g = Guidance::new(config, &onboard);
            propagate(&s0, &mut g, &settings.planet, &atmosphere, &sample.vehicle, t_f, settings.dt)
                .map(|t| (t, g.state.enabled_at, g.telemetry().to_vec(), Vec::new(), 0))
        }
        GuidanceKind::Pipag => {
            let Some(model) = model else {
                return fail(outcome, "pipag variant needs a trained model".into());
            };
            let adj = match PipagAdjuster::new(
                model,
                settings.pipag,
                settings.scenario.name.as_str(),
                settings.scenario.failure_mode,
                settings.planet,
            ) {
                Ok(a) => a,
                Err(e) => return fail(outcome, e.to_string()),
            };
            let mut g = Guidance::with_adjuster(config, &onboard, adj);
            propagate(&s0, &mut g, &settings.planet, &atmosphere, &sample.vehicle, t_f, settings.dt).map(|t| {
                let records = std::mem::take(&mut g.adjuster.records);
                (t, g.state.enabled_at, g.telemetry().to_vec(), records, g.adjuster.corrected_cycles)
            })
        }
    };
    match flown {
        Ok((traj, enabled_at, guidance, indicator, corrected)) => {
            result.mode = Some(traj.mode);
            result.r_a = traj.r_a().is_finite().then(|| traj.r_a());
            if traj.mode == TrajectoryMode::Capture {
                result.r_a_error = Some(traj.r_a() - settings.scenario.r_a_target);
            }
            result.enabled_at = enabled_at;
            result.corrected_cycles = corrected;
            outcome.result = result;
            outcome.trajectory = Some(traj);
            outcome.guidance = guidance;
            outcome.indicator = indicator;
            outcome
        }
        Err(e) => fail(outcome, e.to_string()),
    }
}

pub(crate) fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CampaignError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CampaignError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Trials `0..n_trials` in parallel, results in trial order.
pub fn run_campaign(
    settings: &CampaignSettings,
    variant: Variant,
    n_trials: u64,
    model: Option<&GmvaeModel>,
    threads: Option<usize>,
) -> Result<Vec<TrialResult>, CampaignError> {
    settings.validate()?;
    if variant.kind == GuidanceKind::Pipag && model.is_none() && n_trials > 0 {
        return Err(CampaignError::Config("pipag variant needs a trained model".into()));
    }
    with_pool(threads, || {
        (0..n_trials).into_par_iter().map(|i| run_trial(settings, variant, model, i).result).collect()
    })
}

/// Replays each failed trial with the initial bank until its guidance
/// enable time, then full lift-down (escapes) or full lift-up (impacts).
/// Returns `(trial, recoverable)` for every escape or impact in `results`.
pub fn recoverability(settings: &CampaignSettings, results: &[TrialResult], threads: Option<usize>) -> Result<Vec<(u64, bool)>, CampaignError> {
    settings.validate()?;
    let failed: Vec<&TrialResult> = results
        .iter()
        .filter(|r| matches!(r.mode, Some(TrajectoryMode::Escape | TrajectoryMode::Impact)))
        .collect();
    with_pool(threads, || {
        failed
            .par_iter()
            .map(|r| {
                let sample = sample_trial(&settings.dispersion, &settings.scenario, &settings.nominal_vehicle, r.seed);
                let after = if r.mode == Some(TrajectoryMode::Escape) { std::f64::consts::PI } else { 0.0 };
                let replay = || -> Result<bool, String> {
                    let atmosphere = settings.truth_atmosphere(sample.atmosphere_seed).map_err(|e| e.to_string())?;
                    let s0 = inertial_to_relative(&sample.entry, &settings.planet).map_err(|e| e.to_string())?;
                    let mut bank = ScheduledBank {
                        before: settings.replay_initial_bank,
                        after,
                        switch_time: r.enabled_at.unwrap_or(0.0),
                    };
                    let traj = propagate(&s0, &mut bank, &settings.planet, &atmosphere, &sample.vehicle, settings.fnpag.t_f, settings.dt)
                        .map_err(|e| e.to_string())?;
                    Ok(traj.mode == TrajectoryMode::Capture)
                };
                (r.trial, replay().unwrap_or(false))
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub variant: Option<Variant>,
    pub trials: usize,
    pub capture_pct: f64,
    pub escape_pct: f64,
    pub impact_pct: f64,
    /// Trials that could not be flown.
    pub error_pct: f64,
    pub recoverable: usize,
    /// Recoverable trials this campaign captured.
    pub saved: usize,
    pub save_pct: Option<f64>,
    pub mean_ra_error_km: Option<f64>,
    pub std_ra_error_km: Option<f64>,
}

/// Summary statistics; `recoverable` lists trial ids recoverable under FNPAG.
pub fn summarize(results: &[TrialResult], recoverable: &[u64]) -> CampaignSummary {
    let n = results.len();
    let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    let count = |m: Option<TrajectoryMode>| results.iter().filter(|r| r.mode == m).count();
    let rec: BTreeSet<u64> = recoverable.iter().copied().collect();
    let saved = results.iter().filter(|r| rec.contains(&r.trial) && r.mode == Some(TrajectoryMode::Capture)).count();
    let errs: Vec<f64> = results.iter().filter_map(|r| r.r_a_error).map(|e| e / 1e3).collect();
    let (mean, std) = if errs.is_empty() {
        (None, None)
    } else {
        let m = errs.iter().sum::<f64>() / errs.len() as f64;
        let v = if errs.len() > 1 { errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (errs.len() - 1) as f64 } else { 0.0 };
        (Some(m), Some(v.sqrt()))
    };
    let variant = results.first().map(|r| r.variant).filter(|v| results.iter().all(|r| r.variant == *v));
    CampaignSummary {
        variant,
        trials: n,
        capture_pct: pct(count(Some(TrajectoryMode::Capture))),
        escape_pct: pct(count(Some(TrajectoryMode::Escape))),
        impact_pct: pct(count(Some(TrajectoryMode::Impact))),
        error_pct: pct(count(None)),
        recoverable: rec.len(),
        saved,
        save_pct: (!rec.is_empty()).then(|| 100.0 * saved as f64 / rec.len() as f64),
        mean_ra_error_km: mean,
        std_ra_error_km: std,
    }
}

fn opt<T: std::fmt::Debug>(v: &Option<T>) -> String {
    v.as_ref().map(|x| format!("{x:?}")).unwrap_or_default()
}

const TRIALS_HEADER: &str = "trial,seed,atmosphere_seed,variant,mode,r_a,r_a_error,corrected_cycles,enabled_at,error";

/// One row per trial. `comment` becomes a leading `# ...` line.
pub fn write_trials_csv<W: Write>(results: &[TrialResult], comment: Option<&str>, mut w: W) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{TRIALS_HEADER}")?;
    for r in results {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            r.atmosphere_seed,
            r.variant,
            r.mode.map(|m| m.as_str()).unwrap_or(""),
            opt(&r.r_a),
            opt(&r.r_a_error),
            r.corrected_cycles,
            opt(&r.enabled_at),
            err
        )?;
    }
    Ok(())
}

pub fn read_trials_csv<R: BufRead>(r: R) -> Result<Vec<TrialResult>, CampaignError> {
    let bad = |line: usize, m: String| CampaignError::Parse(format!("line {line}: {m}"));
    let mut out = Vec::new();
    let mut header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CampaignError::Parse(e.to_string()))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header {
            if line.trim() != TRIALS_HEADER {
                return Err(bad(i + 1, "unexpected header".into()));
            }
            header = true;
            continue;
        }
        let f: Vec<&str> = line.splitn(10, ',').collect();
        if f.len() != 10 {
            return Err(bad(i + 1, format!("expected 10 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|e| bad(i + 1, e.to_string()));
        let float = |s: &str| -> Result<Option<f64>, CampaignError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|e| bad(i + 1, e.to_string()))
            }
        };
        out.push(TrialResult {
            trial: num(f[0])?,
            seed: num(f[1])?,
            atmosphere_seed: num(f[2])?,
            variant: f[3].parse().map_err(|e: String| bad(i + 1, e))?,
            mode: if f[4].is_empty() { None } else { Some(f[4].parse().map_err(|e: String| bad(i + 1, e))?) },
            r_a: float(f[5])?,
            r_a_error: float(f[6])?,
            corrected_cycles: f[7].parse().map_err(|e: std::num::ParseIntError| bad(i + 1, e.to_string()))?,
            enabled_at: float(f[8])?,
            error: (!f[9].is_empty()).then(|| f[9].to_string()),
        });
    }
    Ok(out)
}

/// Captured apoapsis errors in km, ready for a histogram.
pub fn write_histogram_csv<W: Write>(results: &[TrialResult], comment: Option<&str>, mut w: W) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "trial,variant,r_a_error_km")?;
    for r in results {
        if let Some(e) = r.r_a_error {
            writeln!(w, "{},{},{:?}", r.trial, r.variant, e / 1e3)?;
        }
    }
    Ok(())
}
