use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::em_update_with_variance;
use super::loss::{elbo_loss_scaled, Gradients, LossParts};
use super::{batch_from_rows, EnergyDataset, GmvaeError, GmvaeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Single standard-normal prior, used to vet the architecture.
    Vae,
    Gmvae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Train, validation and test row counts.
    pub split: (usize, usize, usize),
    pub seed: u64,
    /// KL weight in VAE mode.
    pub beta_kl: f64,
    pub latent_dim: usize,
    pub clusters: usize,
    pub hidden: Vec<usize>,
    /// Epochs between EM refits of the mixture.
    pub em_every: usize,
    /// Plain VAE epochs run before the mixture is seeded on a fresh model.
    pub pretrain_epochs: usize,
    /// EM passes on the frozen pretrained encodings when seeding the mixture.
    pub init_em_iters: usize,
    /// Scale of the jitter added to the initial cluster means, relative to the
    /// per-dimension spread of the encoded training set.
    pub init_jitter: f64,
    /// Split every minibatch across the rayon pool. Results then depend on the
    /// pool size.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            batch_size: 128,
            learning_rate: 1e-3,
            split: (1024, 128, 128),
            seed: 0,
            beta_kl: 0.0015,
            latent_dim: 7,
            clusters: 3,
            hidden: vec![32, 16],
            em_every: 1,
            pretrain_epochs: 200,
            init_em_iters: 50,
            init_jitter: 0.05,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GmvaeError> {
        let bad = |m: &str| Err(GmvaeError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.latent_dim == 0 || self.clusters == 0 || self.hidden.contains(&0) {
            return bad("latent dimension, cluster count and hidden widths must be positive");
        }
        if self.em_every == 0 {
            return bad("em_every must be positive");
        }
        if !(self.beta_kl >= 0.0) || !(self.init_jitter >= 0.0) {
            return bad("beta_kl and init_jitter must be non-negative");
        }
        if self.split.0 == 0 {
            return bad("training split is empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub reconstruction: f64,
    pub kl_latent: f64,
    pub kl_cluster: f64,
    /// Noise-free loss on the validation split.
    pub val_loss: Option<f64>,
    pub reseeded: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// VAE epochs run before the mixture was seeded.
    #[serde(default)]
    pub pretrain: Vec<EpochRecord>,
    /// `(epoch, cluster)` for every empty cluster re-seeded by EM.
    pub reseeds: Vec<(usize, usize)>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,loss,reconstruction,kl_latent,kl_cluster,val_loss,reseeded")?;
        for r in &self.epochs {
            let val = r.val_loss.map(|v| format!("{v:?}")).unwrap_or_default();
            writeln!(
                w,
                "{},{:?},{:?},{:?},{:?},{},{}",
                r.epoch, r.loss, r.reconstruction, r.kl_latent, r.kl_cluster, val, r.reseeded
            )?;
        }
        Ok(())
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step<'a, 'b>(&mut self, params: impl Iterator<Item = &'a mut f64>, grads: impl Iterator<Item = &'b f64>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

const DIVERGENCE: f64 = 1e6;

fn noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn batch_gradient(
    model: &GmvaeModel,
    x: &DMatrix<f64>,
    eta: &DMatrix<f64>,
    vae_beta: Option<f64>,
    parallel: bool,
) -> Result<(LossParts, Gradients), GmvaeError> {
    let b = x.ncols();
    let denom = b as f64;
    if !parallel || b < 2 {
        return elbo_loss_scaled(model, x, eta, vae_beta, denom);
    }
    let chunks = rayon::current_num_threads().clamp(1, b);
    let size = b.div_ceil(chunks);
    let parts: Vec<_> = (0..b)
        .step_by(size)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let n = size.min(b - start);
            elbo_loss_scaled(model, &x.columns(start, n).into_owned(), &eta.columns(start, n).into_owned(), vae_beta, denom)
        })
        .collect::<Result<_, _>>()?;
    let mut iter = parts.into_iter();
    let (mut total, mut grads) = iter.next().expect("at least one chunk");
    for (p, g) in iter {
        total.reconstruction += p.reconstruction;
        total.kl_latent += p.kl_latent;
        total.kl_cluster += p.kl_cluster;
        total.total += p.total;
        grads.add_assign(&g);
    }
    Ok((total, grads))
}

/// Initial mixture from encoded training means: k-means++ seeding with
/// jitter, uniform weights and unit variances, then `em_iters` EM passes on
/// the frozen encodings.
fn init_mixture(
    model: &mut GmvaeModel,
    x: &DMatrix<f64>,
    jitter: f64,
    em_iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, GmvaeError> {
    let (mu, lv) = model.encode(x)?;
    let (l, n) = (mu.nrows(), mu.ncols());
    let c = model.clusters();
    let spread: Vec<f64> = (0..l)
        .map(|j| {
            let row = mu.row(j);
            let m = row.sum() / n as f64;
            (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
        })
        .collect();
    let mut picks = vec![rng.random_range(0..n)];
    let mut d2 = vec![f64::INFINITY; n];
    while picks.len() < c {
        let last = *picks.last().expect("non-empty");
        for (i, d) in d2.iter_mut().enumerate() {
            let e = (0..l).map(|j| (mu[(j, i)] - mu[(j, last)]).powi(2)).sum::<f64>();
            *d = d.min(e);
        }
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            d2.iter().position(|&d| {
                u -= d;
                u <= 0.0
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        picks.push(next);
    }
    let means = DMatrix::from_fn(c, l, |k, j| {
        let e: f64 = StandardNormal.sample(rng);
        mu[(j, picks[k])] + jitter * spread[j] * e
    });
    model.latent = super::GmmLatent::with_means(means);
    let var = lv.map(f64::exp);
    let mut reseeded = Vec::new();
    for _ in 0..em_iters {
        let gamma = model.latent.responsibilities_batch(&mu);
        let (latent, re) = em_update_with_variance(&model.latent, &mu, Some(&var), &gamma, rng)?;
        model.latent = latent;
        reseeded.extend(re);
    }
    Ok(reseeded)
}

struct Streams {
    shuffle: ChaCha8Rng,
    noise: ChaCha8Rng,
    em: ChaCha8Rng,
}

fn run_epochs(
    model: &mut GmvaeModel,
    train_set: &EnergyDataset,
    x_val: Option<&DMatrix<f64>>,
    config: &TrainConfig,
    epochs: usize,
    mode: TrainMode,
    streams: &mut Streams,
    log: &mut TrainLog,
    pretrain: bool,
) -> Result<(), GmvaeError> {
    let x_all = train_set.columns();
    let n = train_set.len();
    let l = model.latent_dim();
    let vae_beta = (mode == TrainMode::Vae).then_some(config.beta_kl);
    let n_params = model.encoder.param_count() + model.decoder.param_count();
    let mut adam = Adam::new(n_params, config.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=epochs {
        order.shuffle(&mut streams.shuffle);
        let mut sums = LossParts::default();
        for idx in order.chunks(config.batch_size) {
            let x = batch_from_rows(&train_set.samples, idx);
            let eta = noise(&mut streams.noise, l, idx.len());
            let (parts, grads) = batch_gradient(model, &x, &eta, vae_beta, config.parallel)?;
            if !parts.total.is_finite() || parts.total > DIVERGENCE {
                return Err(GmvaeError::Diverged {
                    epoch,
                    reason: format!("batch loss {}", parts.total),
                    log: Box::new(std::mem::take(log)),
                });
            }
            let w = idx.len() as f64 / n as f64;
            sums.reconstruction += w * parts.reconstruction;
            sums.kl_latent += w * parts.kl_latent;
            sums.kl_cluster += w * parts.kl_cluster;
            sums.total += w * parts.total;
            adam.step(
                model.encoder.params_mut().chain(model.decoder.params_mut()),
                grads.encoder.params().chain(grads.decoder.params()),
            );
        }

        let mut reseeded = 0;
        if mode == TrainMode::Gmvae && epoch % config.em_every == 0 {
            let (mu, lv) = model.encode(&x_all)?;
            let gamma = model.latent.responsibilities_batch(&mu);
            let var = lv.map(f64::exp);
            let (latent, re) = em_update_with_variance(&model.latent, &mu, Some(&var), &gamma, &mut streams.em)?;
            model.latent = latent;
            reseeded = re.len();
            log.reseeds.extend(re.into_iter().map(|k| (epoch, k)));
        }

        let val_loss = match x_val {
            Some(xv) => {
                let zeros = DMatrix::zeros(l, xv.ncols());
                Some(elbo_loss_scaled(model, xv, &zeros, vae_beta, xv.ncols() as f64)?.0.total)
            }
            None => None,
        };
        let record = EpochRecord {
            epoch,
            loss: sums.total,
            reconstruction: sums.reconstruction,
            kl_latent: sums.kl_latent,
            kl_cluster: sums.kl_cluster,
            val_loss,
            reseeded,
        };
        if pretrain {
            log.pretrain.push(record);
        } else {
            log.epochs.push(record);
        }
        if !model.encoder.is_finite() || !model.decoder.is_finite() {
            return Err(GmvaeError::Diverged {
                epoch,
                reason: "non-finite parameters".into(),
                log: Box::new(std::mem::take(log)),
            });
        }
    }
    Ok(())
}

/// Minibatch Adam on the training split.
///
/// In GMVAE mode a fresh model is first pretrained as a plain VAE for
/// `pretrain_epochs` (skipped when `epochs` is 0), the mixture is then seeded from the encoded training
/// means, and EM refits it after every `em_every` epochs.
///
/// Shuffling, reparameterization noise and EM re-seeding draw from separate
/// streams of one seed, so a run is reproducible bit for bit unless
/// `parallel` is set.
pub fn train(
    mut model: GmvaeModel,
    dataset: &EnergyDataset,
    config: &TrainConfig,
    mode: TrainMode,
) -> Result<(GmvaeModel, TrainLog), GmvaeError> {
    config.validate()?;
    let (train_set, val_set, _) = dataset.split(config.split)?;
    if train_set.dim() != model.input_dim() {
        return Err(GmvaeError::Shape(format!("data has {} columns, model expects {}", train_set.dim(), model.input_dim())));
    }
    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(config.seed);
        r.set_stream(k);
        r
    };
    let mut streams = Streams { shuffle: stream(1), noise: stream(2), em: stream(3) };
    let x_val = (!val_set.is_empty()).then(|| val_set.columns());
    let mut log = TrainLog::default();

    if mode == TrainMode::Gmvae && model.meta.epochs == 0 {
        if config.pretrain_epochs > 0 && config.epochs > 0 {
            run_epochs(&mut model, &train_set, x_val.as_ref(), config, config.pretrain_epochs, TrainMode::Vae, &mut streams, &mut log, true)?;
        }
        let re = init_mixture(&mut model, &train_set.columns(), config.init_jitter, config.init_em_iters, &mut streams.em)?;
        log.reseeds.extend(re.into_iter().map(|k| (0, k)));
    }
    run_epochs(&mut model, &train_set, x_val.as_ref(), config, config.epochs, mode, &mut streams, &mut log, false)?;

    model.meta.seed = config.seed;
    model.meta.epochs += config.epochs;
    model.meta.learning_rate = config.learning_rate;
    model.meta.batch_size = config.batch_size;
    model.meta.mode = mode;
    Ok((model, log))
}
