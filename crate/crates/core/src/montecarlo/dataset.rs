use rayon::prelude::*;

use super::campaign::{run_trial, with_pool, CampaignSettings, Variant};
use super::CampaignError;
use crate::dynamics::TrajectoryMode;
use crate::gmvae::{resample, time_grid, Normalization, EnergyDataset, GmvaeModel, GRID_POINTS};

/// Training data plus the bookkeeping written to the sidecar.
#[derive(Debug, Clone)]
pub struct BuiltDataset {
    pub dataset: EnergyDataset,
    /// Trial id of every row.
    pub trials: Vec<u64>,
    /// Trials ending outside {capture, failure mode}, or that could not be flown.
    pub skipped_trials: usize,
    pub warnings: Vec<String>,
}

/// Flies trials in id order until `n_samples` of them end in capture or the
/// scenario failure mode, resamples each truth energy history onto a
/// uniform grid over `[0, t_f]` and scales the set.
pub fn build_dataset(
    settings: &CampaignSettings,
    n_samples: usize,
    variant: Variant,
    normalization: Normalization,
    model: Option<&GmvaeModel>,
    threads: Option<usize>,
) -> Result<BuiltDataset, CampaignError> {
    settings.validate()?;
    if n_samples == 0 {
        return Err(CampaignError::Config("dataset needs at least one sample".into()));
    }
    let grid = time_grid(settings.fnpag.t_f, GRID_POINTS);
    let keep = [TrajectoryMode::Capture, settings.scenario.failure_mode];
    let mut rows = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    let mut trials = Vec::with_capacity(n_samples);
    let mut skipped = 0;
    let mut next = 0u64;
    let chunk = (n_samples as u64).max(64);
    while rows.len() < n_samples {
        if next > 20 * n_samples as u64 + 1000 {
            return Err(CampaignError::Config(format!("only {} usable trials after {next} attempts", rows.len())));
        }
        let ids: Vec<u64> = (next..next + chunk).collect();
        next += chunk;
        let flown: Vec<Result<Option<(Vec<f64>, TrajectoryMode)>, String>> = with_pool(threads, || {
            ids.par_iter()
                .map(|&i| {
                    let out = run_trial(settings, variant, model, i);
                    let Some(traj) = out.trajectory else { return Ok(None) };
                    if !keep.contains(&traj.mode) {
                        return Ok(None);
                    }
                    let times: Vec<f64> = traj.times().collect();
                    resample(&times, &traj.energy_series, &grid)
                        .map(|row| Some((row, traj.mode)))
                        .map_err(|e| e.to_string())
                })
                .collect()
        })?;
        for (i, f) in ids.into_iter().zip(flown) {
            if rows.len() == n_samples {
                break;
            }
            match f.map_err(CampaignError::Config)? {
                Some((row, mode)) => {
                    rows.push(row);
                    labels.push(mode);
                    trials.push(i);
                }
                None => skipped += 1,
            }
        }
    }
    let mut warnings = Vec::new();
    for m in keep {
        if !labels.contains(&m) {
            warnings.push(format!("no {m} trajectories in the dataset; the model cannot learn that mode"));
        }
    }
    let dataset = EnergyDataset::from_raw(
        rows,
        labels,
        normalization,
        grid,
        settings.scenario.name.as_str().to_string(),
        settings.scenario.failure_mode,
    )
    .map_err(|e| CampaignError::Config(e.to_string()))?;
    Ok(BuiltDataset { dataset, trials, skipped_trials: skipped, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{run_trial, Scenario};

    #[test]
    fn labels_match_reflown_trials() {
        let s = CampaignSettings::new(Scenario::near_escape(), 11);
        let b = build_dataset(&s, 6, Variant::FNPAG, Normalization::Population, None, Some(2)).unwrap();
        assert_eq!(b.dataset.len(), 6);
        assert_eq!(b.trials.len(), 6);
        for (k, &i) in b.trials.iter().enumerate() {
            let t = run_trial(&s, Variant::FNPAG, None, i).trajectory.unwrap();
            assert_eq!(t.mode, b.dataset.labels[k]);
            let first = t.energy_series[0] / b.dataset.norm_constant;
            let first = if b.dataset.normalization == Normalization::PerSample { first.signum() } else { first };
            assert!((b.dataset.samples[(k, 0)] - first).abs() < 1e-12);
        }
        let again = build_dataset(&s, 6, Variant::FNPAG, Normalization::Population, None, Some(1)).unwrap();
        assert_eq!(again.dataset, b.dataset);
    }

    #[test]
    fn zero_samples_is_an_error() {
        let s = CampaignSettings::new(Scenario::near_escape(), 1);
        assert!(build_dataset(&s, 0, Variant::FNPAG, Normalization::PerSample, None, None).is_err());
    }
}
