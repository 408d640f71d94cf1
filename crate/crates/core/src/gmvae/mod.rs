//! Gaussian mixture variational autoencoder over normalized energy histories.
//!
//! The encoder maps a 64-point energy history to the mean and log-variance of
//! a diagonal Gaussian in an `l`-dimensional latent space whose prior is a
//! `c`-component Gaussian mixture. Network weights are trained by Adam on the
//! negative ELBO; the mixture is refitted by EM once per epoch.

mod analysis;
mod data;
mod gmm;
mod loss;
mod mlp;
mod train;

pub use analysis::{
    assign_clusters, misclassification, predict_modes, svd_analysis, variance_ratio, Misclassification,
};
pub use data::{
    preprocess, preprocess_normalized, preprocess_series, resample, time_grid, DatasetSidecar, EnergyDataset, Normalization,
    GRID_POINTS,
};
pub use gmm::{em_update, em_update_with_variance, log_sum_exp, GmmLatent, EMPTY_CLUSTER, VARIANCE_FLOOR};
pub use loss::{elbo_loss, vae_loss, Gradients, LossParts};
pub use mlp::{gelu, gelu_derivative, Dense, ForwardCache, InitScheme, Mlp};
pub use train::{train, Adam, EpochRecord, TrainConfig, TrainLog, TrainMode};

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::TrajectoryMode;

#[derive(Debug, Error)]
pub enum GmvaeError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String, log: Box<TrainLog> },
    #[error("no samples of mode {0:?}")]
    MissingMode(TrajectoryMode),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

/// Preprocessing a model was trained with; inputs must be prepared the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub scenario: String,
    pub norm_constant: f64,
    #[serde(default)]
    pub normalization: Normalization,
    pub time_grid: Vec<f64>,
    /// Mode the scenario guards against.
    pub failure_mode: TrajectoryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub init: InitScheme,
    pub mode: TrainMode,
    /// Free-form provenance stamp of the run that produced the model.
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmvaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent: GmmLatent,
    /// Mode of every mixture cluster.
    pub cluster_to_mode: Vec<TrajectoryMode>,
    pub input: Option<InputSpec>,
    pub meta: ModelMeta,
}

impl GmvaeModel {
    /// Fresh model with random weights: encoder `d -> hidden -> 2l`, decoder `l -> rev(hidden) -> d`.
    pub fn new<R: Rng>(input_dim: usize, hidden: &[usize], l: usize, c: usize, rng: &mut R) -> Result<Self, GmvaeError> {
        if l == 0 || c == 0 {
            return Err(GmvaeError::Shape("latent dimension and cluster count must be positive".into()));
        }
        let mut enc = vec![input_dim];
        enc.extend_from_slice(hidden);
        enc.push(2 * l);
        let mut dec = vec![l];
        dec.extend(hidden.iter().rev());
        dec.push(input_dim);
        let encoder = Mlp::random(&enc, rng)?;
        let decoder = Mlp::random(&dec, rng)?;
        Ok(Self {
            encoder,
            decoder,
            latent: GmmLatent::with_means(DMatrix::zeros(c, l)),
            cluster_to_mode: vec![TrajectoryMode::Capture; c],
            input: None,
            meta: ModelMeta {
                seed: 0,
                epochs: 0,
                learning_rate: 0.0,
                batch_size: 0,
                init: InitScheme::UniformFanIn,
                mode: TrainMode::Gmvae,
                provenance: String::new(),
            },
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent.dim()
    }

    pub fn clusters(&self) -> usize {
        self.latent.clusters()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn validate(&self) -> Result<(), GmvaeError> {
        let l = self.latent_dim();
        if self.encoder.output_dim() != 2 * l || self.decoder.input_dim() != l || self.decoder.output_dim() != self.input_dim() {
            return Err(GmvaeError::Shape("encoder, decoder and latent dimensions disagree".into()));
        }
        if self.cluster_to_mode.len() != self.clusters() {
            return Err(GmvaeError::Shape("cluster_to_mode must cover every cluster".into()));
        }
        if !self.encoder.is_finite() || !self.decoder.is_finite() {
            return Err(GmvaeError::Shape("non-finite network parameters".into()));
        }
        self.latent.validate()
    }

    /// Encoder mean and log-variance for a batch stored column-wise.
    pub fn encode(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), GmvaeError> {
        let out = self.encoder.forward(x)?;
        let l = self.latent_dim();
        Ok((out.rows(0, l).into_owned(), out.rows(l, l).into_owned()))
    }

    pub fn encode_one(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), GmvaeError> {
        let (mu, lv) = self.encode(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok((mu.as_slice().to_vec(), lv.as_slice().to_vec()))
    }

    pub fn decode(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>, GmvaeError> {
        self.decoder.forward(z)
    }

    /// Probability of every mode in [`TrajectoryMode::ALL`] order, from the encoder mean.
    pub fn mode_probabilities(&self, x: &[f64]) -> Result<[f64; 3], GmvaeError> {
        let (mu, _) = self.encode_one(x)?;
        let gamma = self.latent.responsibilities(&mu);
        let mut p = [0.0; 3];
        for (g, m) in gamma.iter().zip(&self.cluster_to_mode) {
            p[m.index()] += g;
        }
        Ok(p)
    }

    fn blob(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.encoder.params().chain(self.decoder.params()).copied().collect();
        v.extend_from_slice(&self.latent.pi);
        v.extend(self.latent.mu.iter());
        v.extend(self.latent.sigma2.iter());
        v
    }

    /// Writes the model: little-endian `u64` header length, JSON header, then
    /// every parameter as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = ModelHeader {
            format: MODEL_FORMAT.into(),
            encoder_widths: self.encoder.widths(),
            decoder_widths: self.decoder.widths(),
            latent_dim: self.latent_dim(),
            clusters: self.clusters(),
            cluster_to_mode: self.cluster_to_mode.clone(),
            input: self.input.clone(),
            meta: self.meta.clone(),
            params: self.blob().len(),
        };
        let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for v in self.blob() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, path: &str) -> Result<Self, GmvaeError> {
        let fmt = |reason: String| GmvaeError::Format { path: path.into(), reason };
        let io = |source| GmvaeError::Io { path: path.into(), source };
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(io)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 24 {
            return Err(fmt(format!("header length {len} is implausible")));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(io)?;
        let h: ModelHeader = serde_json::from_slice(&json).map_err(|e| fmt(e.to_string()))?;
        if h.format != MODEL_FORMAT {
            return Err(fmt(format!("unknown format {}", h.format)));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(io)?;
        if bytes.len() != 8 * h.params {
            return Err(fmt(format!("expected {} parameters, found {} bytes", h.params, bytes.len())));
        }
        let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
        let mut encoder = Mlp::zeros(&h.encoder_widths)?;
        let mut decoder = Mlp::zeros(&h.decoder_widths)?;
        let (c, l) = (h.clusters, h.latent_dim);
        let expected = encoder.param_count() + decoder.param_count() + c + 2 * c * l;
        if expected != h.params {
            return Err(fmt("header shapes do not match parameter count".into()));
        }
        for p in encoder.params_mut().chain(decoder.params_mut()) {
            *p = vals.next().expect("count checked");
        }
        let pi: Vec<f64> = vals.by_ref().take(c).collect();
        let mu = DMatrix::from_iterator(c, l, vals.by_ref().take(c * l));
        let sigma2 = DMatrix::from_iterator(c, l, vals.by_ref().take(c * l));
        let model = Self {
            encoder,
            decoder,
            latent: GmmLatent { pi, mu, sigma2 },
            cluster_to_mode: h.cluster_to_mode,
            input: h.input,
            meta: h.meta,
        };
        model.validate().map_err(|e| fmt(e.to_string()))?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), GmvaeError> {
        let io = |source| GmvaeError::Io { path: path.display().to_string(), source };
        let f = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, GmvaeError> {
        let name = path.display().to_string();
        let f = std::fs::File::open(path).map_err(|source| GmvaeError::Io { path: name.clone(), source })?;
        Self::read_from(std::io::BufReader::new(f), &name)
    }
}

const MODEL_FORMAT: &str = "gmvae-v1";

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    encoder_widths: Vec<usize>,
    decoder_widths: Vec<usize>,
    latent_dim: usize,
    clusters: usize,
    cluster_to_mode: Vec<TrajectoryMode>,
    input: Option<InputSpec>,
    meta: ModelMeta,
    params: usize,
}

/// Column-major batch from row-per-sample data.
pub fn batch_from_rows(rows: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.ncols(), indices.len(), |j, i| rows[(indices[i], j)])
}
