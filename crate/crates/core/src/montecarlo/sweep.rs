use std::io::Write;

use serde::{Deserialize, Serialize};

use super::campaign::{recoverability, run_campaign, summarize, CampaignSettings, CampaignSummary, Variant};
use super::CampaignError;
use crate::gmvae::GmvaeModel;
use crate::pipag::PipagParams;

/// Full-factorial grid; every other πPAG parameter comes from the settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    /// [rad]
    pub sigma_prime: Vec<f64>,
    /// [s]
    pub tau: Vec<f64>,
    pub eps_c: Vec<f64>,
}

impl SweepGrid {
    /// σ′ 10..40 deg and τ 0..40 s in 10-unit steps at ε_C = 0.975.
    pub fn standard() -> Self {
        Self {
            sigma_prime: [10.0f64, 20.0, 30.0, 40.0].iter().map(|d| d.to_radians()).collect(),
            tau: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            eps_c: vec![0.975],
        }
    }

    pub fn len(&self) -> usize {
        self.sigma_prime.len() * self.tau.len() * self.eps_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma_prime: f64,
    pub tau: f64,
    pub eps_c: f64,
    pub captures: usize,
    pub summary: CampaignSummary,
}

/// Baseline FNPAG campaign, its recoverable set, and one πPAG campaign per
/// grid point on the same trial seeds.
pub fn sweep(
    settings: &CampaignSettings,
    grid: &SweepGrid,
    n_trials: u64,
    model: &GmvaeModel,
    threads: Option<usize>,
) -> Result<(CampaignSummary, Vec<SweepPoint>), CampaignError> {
    if grid.is_empty() {
        return Err(CampaignError::Config("sweep grid has an empty axis".into()));
    }
    let fnpag_variant = Variant { kind: super::GuidanceKind::Fnpag, fading_filter: true };
    let base = run_campaign(settings, fnpag_variant, n_trials, None, threads)?;
    let rec: Vec<u64> = recoverability(settings, &base, threads)?.into_iter().filter(|r| r.1).map(|r| r.0).collect();
    let baseline = summarize(&base, &rec);
    let mut points = Vec::with_capacity(grid.len());
    for &eps_c in &grid.eps_c {
        for &tau in &grid.tau {
            for &sigma_prime in &grid.sigma_prime {
                let s = CampaignSettings { pipag: PipagParams { sigma_prime, tau, eps_c, ..settings.pipag }, ..settings.clone() };
                let results = run_campaign(&s, Variant::PIPAG, n_trials, Some(model), threads)?;
                let summary = summarize(&results, &rec);
                let captures = results.iter().filter(|r| r.mode == Some(crate::dynamics::TrajectoryMode::Capture)).count();
                points.push(SweepPoint { sigma_prime, tau, eps_c, captures, summary });
            }
        }
    }
    Ok((baseline, points))
}

/// Angles are written in degrees.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], comment: Option<&str>, mut w: W) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "sigma_prime,tau,eps_C,capture_pct,save_pct")?;
    for p in points {
        let save = p.summary.save_pct.map(|s| format!("{s:?}")).unwrap_or_default();
        writeln!(w, "{:?},{:?},{:?},{:?},{}", p.sigma_prime.to_degrees(), p.tau, p.eps_c, p.summary.capture_pct, save)?;
    }
    Ok(())
}
