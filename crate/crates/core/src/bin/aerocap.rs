//! `aerocap`: data generation, training, simulation, campaigns, sweeps and
//! reports from one TOML config.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use aerocapture::config::{Provenance, RunConfig};
use aerocapture::dynamics::TrajectoryMode;
use aerocapture::fnpag::write_guidance_csv;
use aerocapture::gmvae::{
    assign_clusters, misclassification, svd_analysis, train, variance_ratio, DatasetSidecar, EnergyDataset, GmvaeError,
    GmvaeModel, InputSpec, Misclassification, TrainMode,
};
use aerocapture::montecarlo::{
    build_dataset, read_trials_csv, recoverability, run_campaign, run_trial, summarize, sweep, write_histogram_csv,
    write_sweep_csv, write_trials_csv, CampaignSummary, DispersionSpec, GuidanceKind, TrialResult, Variant,
};
use aerocapture::pipag::{write_indicator_csv, IndicatorRecord};

#[derive(Parser)]
#[command(name = "aerocap", version, about = "Aerocapture guidance simulation toolkit")]
struct Cli {
    /// Run configuration (TOML). Built-in near-escape defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for trial-parallel work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct VariantArgs {
    /// Comma-separated variants: fnpag, pipag, fnpag-noff, pipag-noff, or `all`.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fly a campaign and write the normalized energy dataset.
    GenData {
        #[command(flatten)]
        variant: VariantArgs,
    },
    /// Train the GMVAE on the dataset and assign clusters to modes.
    Train,
    /// Misclassification, singular values and reconstruction quality.
    Eval,
    /// Fly one trial and write its full telemetry.
    Simulate {
        #[command(flatten)]
        variant: VariantArgs,
        /// Trial id; overrides the config.
        #[arg(long)]
        trial: Option<u64>,
        /// Nominal entry, no dispersions, truth = onboard atmosphere.
        #[arg(long)]
        nominal: bool,
    },
    /// Monte Carlo campaign for one or more guidance variants.
    Campaign {
        #[command(flatten)]
        variant: VariantArgs,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// πPAG parameter sweep against a shared FNPAG baseline.
    Sweep {
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Full-lift replays of the failed trials of an FNPAG campaign.
    Recoverability {
        #[command(flatten)]
        variant: VariantArgs,
    },
    /// Comparison table from the campaign CSVs in the output directory.
    Report,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    prov: Provenance,
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = std::env::current_dir()?.join(o);
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let out = cfg.output_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = Ctx { prov: cfg.provenance(), threads: cfg.threads, out, cfg };
    match cli.command {
        Command::GenData { variant } => gen_data(&ctx, &variant),
        Command::Train => train_cmd(&ctx),
        Command::Eval => eval(&ctx),
        Command::Simulate { variant, trial, nominal } => simulate(&ctx, &variant, trial, nominal),
        Command::Campaign { variant, trials } => campaign(&ctx, &variant, trials),
        Command::Sweep { trials } => sweep_cmd(&ctx, trials),
        Command::Recoverability { variant } => recoverability_cmd(&ctx, &variant),
        Command::Report => report(&ctx),
    }
}

fn parse_variants(v: &VariantArgs, default: &[Variant]) -> Result<Vec<Variant>> {
    match v.variant.as_deref() {
        None => Ok(default.to_vec()),
        Some("all") => Ok(Variant::ablation().to_vec()),
        Some(list) => list.split(',').map(|s| s.trim().parse::<Variant>().map_err(|e| anyhow!(e))).collect(),
    }
}

fn single_variant(v: &VariantArgs, default: Variant) -> Result<Variant> {
    let vs = parse_variants(v, &[default])?;
    match vs.as_slice() {
        [one] => Ok(*one),
        _ => bail!("this command takes exactly one variant"),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// CSV with a leading provenance comment.
fn write_csv_with(path: &Path, prov: &Provenance, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# {prov}")?;
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn load_model(ctx: &Ctx) -> Result<GmvaeModel> {
    let p = ctx.cfg.model_path();
    GmvaeModel::load(&p).with_context(|| format!("loading model {} (run `aerocap train` first)", p.display()))
}

fn needs_model(variants: &[Variant]) -> bool {
    variants.iter().any(|v| v.kind == GuidanceKind::Pipag)
}

fn gen_data(ctx: &Ctx, v: &VariantArgs) -> Result<()> {
    let variant = single_variant(v, Variant::FNPAG)?;
    let settings = ctx.cfg.campaign_settings()?;
    let model = if needs_model(&[variant]) { Some(load_model(ctx)?) } else { None };
    let norm = ctx.cfg.gmvae.normalization;
    let built = build_dataset(&settings, ctx.cfg.gmvae.samples, variant, norm, model.as_ref(), ctx.threads)?;
    for w in &built.warnings {
        eprintln!("warning: {w}");
    }
    let ds = &built.dataset;
    let path = ctx.cfg.dataset_path();
    write_csv_with(&path, &ctx.prov, |w| ds.write_csv(w))?;
    let side = DatasetSidecar {
        scenario: ds.scenario.clone(),
        norm_constant: ds.norm_constant,
        time_grid: ds.time_grid.clone(),
        failure_mode: ds.failure_mode,
        normalization: ds.normalization,
        rows: ds.len(),
        mode_counts: ds.mode_counts(),
        skipped_trials: built.skipped_trials,
        master_seed: ctx.prov.master_seed,
        config_hash: ctx.prov.config_hash.clone(),
        tool_version: ctx.prov.tool_version.clone(),
    };
    write_json(&path.with_extension("json"), &side)?;
    let c = ds.mode_counts();
    println!(
        "wrote {} rows to {}: capture {}, escape {}, impact {} ({} trials skipped)",
        ds.len(),
        path.display(),
        c[0],
        c[1],
        c[2],
        built.skipped_trials
    );
    Ok(())
}

fn load_dataset(ctx: &Ctx) -> Result<EnergyDataset> {
    let p = ctx.cfg.dataset_path();
    let (ds, _) = EnergyDataset::load(&p).with_context(|| format!("loading dataset {} (run `aerocap gen-data` first)", p.display()))?;
    Ok(ds)
}

#[derive(Serialize)]
struct SplitReport {
    split: &'static str,
    rows: usize,
    misclassification: Misclassification,
}

#[derive(Serialize)]
struct TrainReport {
    provenance: String,
    epochs: usize,
    final_loss: Option<f64>,
    cluster_weights: Vec<f64>,
    cluster_to_mode: Vec<TrajectoryMode>,
    splits: Vec<SplitReport>,
}

fn split_reports(model: &GmvaeModel, ds: &EnergyDataset, split: (usize, usize, usize)) -> Result<Vec<SplitReport>> {
    let (a, b, c) = ds.split(split)?;
    let mut out = Vec::new();
    for (name, part) in [("train", a), ("validation", b), ("test", c)] {
        if part.is_empty() {
            continue;
        }
        out.push(SplitReport { split: name, rows: part.len(), misclassification: misclassification(model, &part)? });
    }
    Ok(out)
}

fn train_cmd(ctx: &Ctx) -> Result<()> {
    let ds = load_dataset(ctx)?;
    let tc = ctx.cfg.train_config();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let model = GmvaeModel::new(ds.dim(), &tc.hidden, tc.latent_dim, tc.clusters, &mut rng)?;
    let log_path = ctx.out.join("train_log.csv");
    let (mut model, log) = match train(model, &ds, &tc, TrainMode::Gmvae) {
        Ok(r) => r,
        Err(GmvaeError::Diverged { epoch, reason, log }) => {
            write_csv_with(&log_path, &ctx.prov, |w| log.write_csv(w))?;
            bail!("training diverged at epoch {epoch}: {reason}; partial log in {}", log_path.display());
        }
        Err(e) => return Err(e.into()),
    };
    let (train_split, _, _) = ds.split(tc.split)?;
    model.cluster_to_mode = assign_clusters(&model, &train_split)?;
    model.input = Some(InputSpec {
        scenario: ds.scenario.clone(),
        norm_constant: ds.norm_constant,
        normalization: ds.normalization,
        time_grid: ds.time_grid.clone(),
        failure_mode: ds.failure_mode,
    });
    model.meta.provenance = ctx.prov.to_string();
    let model_path = ctx.cfg.model_path();
    if let Some(dir) = model_path.parent() {
        fs::create_dir_all(dir)?;
    }
    model.save(&model_path)?;
    write_csv_with(&log_path, &ctx.prov, |w| log.write_csv(w))?;
    let splits = split_reports(&model, &ds, tc.split)?;
    let report = TrainReport {
        provenance: ctx.prov.to_string(),
        epochs: log.epochs.len(),
        final_loss: log.epochs.last().map(|r| r.loss),
        cluster_weights: model.latent.pi.clone(),
        cluster_to_mode: model.cluster_to_mode.clone(),
        splits,
    };
    write_json(&ctx.out.join("train_report.json"), &report)?;
    println!("model written to {}", model_path.display());
    for s in &report.splits {
        println!("{:<10} mean misclassification {:6.2}%", s.split, s.misclassification.mean);
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    provenance: String,
    model: String,
    splits: Vec<SplitReport>,
    variance_ratio: f64,
    singular_values: Vec<f64>,
}

fn eval(ctx: &Ctx) -> Result<()> {
    let ds = load_dataset(ctx)?;
    let model = load_model(ctx)?;
    let split = ctx.cfg.gmvae.train.split;
    let splits = split_reports(&model, &ds, split)?;
    let sv = svd_analysis(&ds.samples)?;
    let report = EvalReport {
        provenance: ctx.prov.to_string(),
        model: model.meta.provenance.clone(),
        splits,
        variance_ratio: variance_ratio(&model, &ds)?,
        singular_values: sv.clone(),
    };
    write_csv_with(&ctx.out.join("singular_values.csv"), &ctx.prov, |w| {
        writeln!(w, "index,singular_value")?;
        for (i, s) in sv.iter().enumerate() {
            writeln!(w, "{},{s:?}", i + 1)?;
        }
        Ok(())
    })?;
    write_json(&ctx.out.join("eval.json"), &report)?;
    for s in &report.splits {
        let per: Vec<String> = s.misclassification.per_mode.iter().map(|(m, n, p)| format!("{m} {p:.2}% of {n}")).collect();
        println!("{:<10} mean {:6.2}%  ({})", s.split, s.misclassification.mean, per.join(", "));
    }
    println!("variance ratio {:.4}", report.variance_ratio);
    Ok(())
}

/// Latent trace with its projection on the two leading principal axes of
/// the reference encodings.
fn write_latent_trace(path: &Path, prov: &Provenance, records: &[IndicatorRecord], axes: Option<&(Vec<f64>, DMatrix<f64>)>) -> Result<()> {
    write_csv_with(path, prov, |w| {
        let l = records.first().map_or(0, |r| r.latent.len());
        let mut header: Vec<String> = (0..l).map(|j| format!("z{j}")).collect();
        if axes.is_some() {
            header.extend(["pc1".to_string(), "pc2".to_string()]);
        }
        writeln!(w, "t,{}", header.join(","))?;
        for r in records {
            let mut cols: Vec<String> = r.latent.iter().map(|v| format!("{v:?}")).collect();
            if let Some((mean, pcs)) = axes {
                for k in 0..pcs.ncols() {
                    let p: f64 = r.latent.iter().zip(mean).enumerate().map(|(j, (z, m))| (z - m) * pcs[(j, k)]).sum();
                    cols.push(format!("{p:?}"));
                }
            }
            writeln!(w, "{:?},{}", r.t, cols.join(","))?;
        }
        Ok(())
    })
}

fn principal_axes(model: &GmvaeModel, ds: &EnergyDataset) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (mu, _) = model.encode(&ds.columns())?;
    let l = mu.nrows();
    let mean: Vec<f64> = (0..l).map(|j| mu.row(j).mean()).collect();
    let mut centred = mu.transpose();
    for (j, mut col) in centred.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let svd = centred.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| anyhow!("SVD failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let k = order.len().min(2);
    let axes = DMatrix::from_fn(l, k, |j, c| {
        let row = vt.row(order[c]);
        // Sign convention: largest component positive.
        let s = row.iter().fold(0.0f64, |a, &v| if v.abs() > a.abs() { v } else { a }).signum();
        s * row[j]
    });
    Ok((mean, axes))
}

fn simulate(ctx: &Ctx, v: &VariantArgs, trial: Option<u64>, nominal: bool) -> Result<()> {
    let variant = single_variant(v, Variant::FNPAG)?;
    let mut settings = ctx.cfg.campaign_settings()?;
    let nominal = nominal || ctx.cfg.simulate.nominal;
    if nominal {
        settings.dispersion = DispersionSpec::none();
        settings.model_matched = true;
    }
    let trial = trial.unwrap_or(ctx.cfg.simulate.trial);
    let model = if needs_model(&[variant]) { Some(load_model(ctx)?) } else { None };
    let out = run_trial(&settings, variant, model.as_ref(), trial);
    let dir = ctx.out.join("simulate").join(format!("{variant}-trial{trial}{}", if nominal { "-nominal" } else { "" }));
    fs::create_dir_all(&dir)?;
    if let Some(e) = &out.result.error {
        bail!("trial {trial} failed: {e}");
    }
    let traj = out.trajectory.as_ref().expect("flown trial has a trajectory");
    write_csv_with(&dir.join("trajectory.csv"), &ctx.prov, |w| traj.write_csv(w, &settings.planet))?;
    write_csv_with(&dir.join("guidance.csv"), &ctx.prov, |w| write_guidance_csv(&out.guidance, w))?;
    write_csv_with(&dir.join("indicator.csv"), &ctx.prov, |w| write_indicator_csv(&out.indicator, w))?;
    if let Some(m) = &model {
        let reference = ctx.cfg.paths.reference_dataset.as_ref().map(|p| ctx.cfg.resolve(p)).unwrap_or_else(|| ctx.cfg.dataset_path());
        let axes = match EnergyDataset::load(&reference) {
            Ok((ds, _)) => Some(principal_axes(m, &ds)?),
            Err(_) => {
                eprintln!("warning: no reference dataset at {}; latent trace has no PCA columns", reference.display());
                None
            }
        };
        write_latent_trace(&dir.join("latent.csv"), &ctx.prov, &out.indicator, axes.as_ref())?;
    }
    write_json(&dir.join("result.json"), &out.result)?;
    let r = &out.result;
    let err = r.r_a_error.map(|e| format!(", apoapsis error {:.1} km", e / 1e3)).unwrap_or_default();
    println!(
        "trial {trial} ({variant}): {}{err}; {} corrected cycles; output in {}",
        r.mode.map_or("-", |m| m.as_str()),
        r.corrected_cycles,
        dir.display()
    );
    Ok(())
}

fn trials_path(out: &Path, v: Variant) -> PathBuf {
    out.join(format!("trials_{v}.csv"))
}

fn read_trials(path: &Path) -> Result<Vec<TrialResult>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_trials_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// Recoverable trial ids from `recoverable.csv`, if present.
fn read_recoverable(out: &Path) -> Result<Option<Vec<u64>>> {
    let path = out.join("recoverable.csv");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut ids = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            bail!("malformed line in {}: {line}", path.display());
        }
        if f[2] == "1" {
            ids.push(f[0].parse().with_context(|| format!("bad trial id in {}", path.display()))?);
        }
    }
    Ok(Some(ids))
}

fn write_recoverable(ctx: &Ctx, results: &[TrialResult], flags: &[(u64, bool)]) -> Result<Vec<u64>> {
    let modes: std::collections::HashMap<u64, Option<TrajectoryMode>> = results.iter().map(|r| (r.trial, r.mode)).collect();
    write_csv_with(&ctx.out.join("recoverable.csv"), &ctx.prov, |w| {
        writeln!(w, "trial,mode,recoverable")?;
        for (t, ok) in flags {
            let m = modes.get(t).copied().flatten().map_or("", |m| m.as_str());
            writeln!(w, "{t},{m},{}", *ok as u8)?;
        }
        Ok(())
    })?;
    Ok(flags.iter().filter(|f| f.1).map(|f| f.0).collect())
}

fn print_summary(s: &CampaignSummary) {
    let v = s.variant.map_or("-".to_string(), |v| v.to_string());
    let save = s.save_pct.map_or("-".into(), |p| format!("{p:.2}% of {}", s.recoverable));
    let ra = match (s.mean_ra_error_km, s.std_ra_error_km) {
        (Some(m), Some(sd)) => format!("{m:.0} ± {sd:.0} km"),
        _ => "-".into(),
    };
    println!(
        "{v:<11} trials {:>5}  capture {:6.2}%  escape {:6.2}%  impact {:6.2}%  save {save}  r_a error {ra}",
        s.trials, s.capture_pct, s.escape_pct, s.impact_pct
    );
}

fn campaign(ctx: &Ctx, v: &VariantArgs, trials: Option<u64>) -> Result<()> {
    let variants = parse_variants(v, &[Variant::FNPAG, Variant::PIPAG])?;
    let settings = ctx.cfg.campaign_settings()?;
    let n = trials.unwrap_or(ctx.cfg.campaign.trials);
    let model = if needs_model(&variants) { Some(load_model(ctx)?) } else { None };
    let mut order = variants.clone();
    // The FNPAG baseline goes first so its recoverable set is known for the others.
    order.sort_by_key(|v| *v != Variant::FNPAG);
    let mut recoverable = read_recoverable(&ctx.out)?;
    for variant in order {
        let results = run_campaign(&settings, variant, n, model.as_ref(), ctx.threads)?;
        write_csv_with(&trials_path(&ctx.out, variant), &ctx.prov, |w| write_trials_csv(&results, None, w))?;
        write_csv_with(&ctx.out.join(format!("histogram_{variant}.csv")), &ctx.prov, |w| write_histogram_csv(&results, None, w))?;
        if variant == Variant::FNPAG {
            let flags = recoverability(&settings, &results, ctx.threads)?;
            recoverable = Some(write_recoverable(ctx, &results, &flags)?);
        }
        let summary = summarize(&results, recoverable.as_deref().unwrap_or(&[]));
        write_json(&ctx.out.join(format!("summary_{variant}.json")), &summary)?;
        print_summary(&summary);
    }
    Ok(())
}

fn recoverability_cmd(ctx: &Ctx, v: &VariantArgs) -> Result<()> {
    let variant = single_variant(v, Variant::FNPAG)?;
    let settings = ctx.cfg.campaign_settings()?;
    let results = read_trials(&trials_path(&ctx.out, variant))?;
    let flags = recoverability(&settings, &results, ctx.threads)?;
    let ids = write_recoverable(ctx, &results, &flags)?;
    println!("{} failed trials replayed, {} recoverable", flags.len(), ids.len());
    Ok(())
}

#[derive(Serialize)]
struct SweepReport {
    provenance: String,
    trials: u64,
    baseline: CampaignSummary,
}

fn sweep_cmd(ctx: &Ctx, trials: Option<u64>) -> Result<()> {
    let settings = ctx.cfg.campaign_settings()?;
    let model = load_model(ctx)?;
    let n = trials.or(ctx.cfg.sweep.trials).unwrap_or(ctx.cfg.campaign.trials);
    let (baseline, points) = sweep(&settings, &ctx.cfg.sweep_grid(), n, &model, ctx.threads)?;
    write_csv_with(&ctx.out.join("sweep.csv"), &ctx.prov, |w| write_sweep_csv(&points, None, w))?;
    write_json(&ctx.out.join("sweep_baseline.json"), &SweepReport { provenance: ctx.prov.to_string(), trials: n, baseline: baseline.clone() })?;
    print_summary(&baseline);
    println!("{:>12} {:>6} {:>7} {:>10} {:>8}", "sigma' [deg]", "tau", "eps_C", "capture %", "save %");
    for p in &points {
        let save = p.summary.save_pct.map_or("-".into(), |s| format!("{s:.2}"));
        println!("{:>12.1} {:>6.1} {:>7.3} {:>10.2} {:>8}", p.sigma_prime.to_degrees(), p.tau, p.eps_c, p.summary.capture_pct, save);
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportRow {
    variant: String,
    guidance: String,
    fading_filter: bool,
    summary: CampaignSummary,
}

fn report(ctx: &Ctx) -> Result<()> {
    let recoverable = read_recoverable(&ctx.out)?.unwrap_or_default();
    let mut known: Vec<Variant> = Variant::ablation().to_vec();
    known.sort_by_key(|v| (v.kind != GuidanceKind::Fnpag, !v.fading_filter));
    let mut rows = Vec::new();
    for v in known {
        let path = trials_path(&ctx.out, v);
        if !path.exists() {
            continue;
        }
        let results = read_trials(&path)?;
        let mut summary = summarize(&results, &recoverable);
        summary.variant = Some(v);
        let guidance = match v.kind {
            GuidanceKind::Fnpag => "FNPAG",
            GuidanceKind::Pipag => "πPAG",
        };
        rows.push(ReportRow { variant: v.to_string(), guidance: guidance.into(), fading_filter: v.fading_filter, summary });
    }
    let mut md = String::new();
    md.push_str("| Guidance | Fading filter | Trials | Capture % | Escape % | Impact % | Recoverable save % | Mean capture r_a err. (km) | Std capture r_a err. (km) |\n");
    md.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|\n");
    let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
    for r in &rows {
        let s = &r.summary;
        md.push_str(&format!(
            "| {} | {} | {} | {:.2} | {:.2} | {:.2} | {} | {} | {} |\n",
            r.guidance,
            if r.fading_filter { "on" } else { "off" },
            s.trials,
            s.capture_pct,
            s.escape_pct,
            s.impact_pct,
            opt(s.save_pct, 2),
            opt(s.mean_ra_error_km, 1),
            opt(s.std_ra_error_km, 1),
        ));
    }
    if !recoverable.is_empty() {
        md.push_str(&format!("\nRecoverable trials: {}\n", recoverable.len()));
    }
    let mut w = create(&ctx.out.join("report.md"))?;
    w.write_all(md.as_bytes())?;
    w.flush()?;
    write_json(&ctx.out.join("report.json"), &rows)?;
    print!("{md}");
    Ok(())
}
