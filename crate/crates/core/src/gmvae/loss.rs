use nalgebra::DMatrix;

use super::{GmvaeError, GmvaeModel, Mlp};

/// Per-sample averages of the loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub reconstruction: f64,
    /// Responsibility-weighted KL from the posterior to each cluster prior
    /// (standard-normal KL in VAE mode).
    pub kl_latent: f64,
    /// KL from the responsibilities to the mixture weights.
    pub kl_cluster: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.encoder.params_mut().chain(self.decoder.params_mut()).zip(other.encoder.params().chain(other.decoder.params())) {
            *a += b;
        }
    }
}

enum Prior<'a> {
    Standard { beta: f64 },
    Mixture { gamma: Option<&'a DMatrix<f64>> },
}

/// Negative ELBO on a column-wise batch `x` with reparameterization noise
/// `eta` (`l x batch`).
///
/// Responsibilities come from `gamma` (`batch x c`) when given, otherwise
/// from the encoder means under the current mixture; either way they are
/// held constant in the gradient.
pub fn elbo_loss(
    model: &GmvaeModel,
    x: &DMatrix<f64>,
    eta: &DMatrix<f64>,
    gamma: Option<&DMatrix<f64>>,
) -> Result<(LossParts, Gradients), GmvaeError> {
    loss_sum(model, x, eta, Prior::Mixture { gamma }, x.ncols() as f64)
}

/// Reconstruction plus `beta_kl` times the KL to a standard-normal prior.
pub fn vae_loss(
    model: &GmvaeModel,
    x: &DMatrix<f64>,
    eta: &DMatrix<f64>,
    beta_kl: f64,
) -> Result<(LossParts, Gradients), GmvaeError> {
    loss_sum(model, x, eta, Prior::Standard { beta: beta_kl }, x.ncols() as f64)
}

pub(crate) fn elbo_loss_scaled(
    model: &GmvaeModel,
    x: &DMatrix<f64>,
    eta: &DMatrix<f64>,
    vae_beta: Option<f64>,
    denom: f64,
) -> Result<(LossParts, Gradients), GmvaeError> {
    let prior = match vae_beta {
        Some(beta) => Prior::Standard { beta },
        None => Prior::Mixture { gamma: None },
    };
    loss_sum(model, x, eta, prior, denom)
}

fn loss_sum(
    model: &GmvaeModel,
    x: &DMatrix<f64>,
    eta: &DMatrix<f64>,
    prior: Prior<'_>,
    denom: f64,
) -> Result<(LossParts, Gradients), GmvaeError> {
    let b = x.ncols();
    let l = model.latent_dim();
    if b == 0 {
        return Err(GmvaeError::Shape("empty batch".into()));
    }
    if eta.nrows() != l || eta.ncols() != b {
        return Err(GmvaeError::Shape(format!("noise is {}x{}, expected {l}x{b}", eta.nrows(), eta.ncols())));
    }
    let (enc_out, enc_cache) = model.encoder.forward_cached(x)?;
    let mu = enc_out.rows(0, l);
    let lv = enc_out.rows(l, l);
    let std = lv.map(|v| (0.5 * v).exp());
    let z = &mu + std.component_mul(eta);
    let (recon, dec_cache) = model.decoder.forward_cached(&z)?;

    let diff = &recon - x;
    let rec = 0.5 * diff.norm_squared();
    let d_recon = diff / denom;

    let mut d_mu = DMatrix::zeros(l, b);
    let mut d_lv = DMatrix::zeros(l, b);
    let (mut kl_latent, mut kl_cluster) = (0.0, 0.0);
    let mut weight = 1.0;
    match prior {
        Prior::Standard { beta } => {
            weight = beta;
            for i in 0..b {
                for j in 0..l {
                    let (m, v) = (mu[(j, i)], lv[(j, i)]);
                    kl_latent += 0.5 * (v.exp() + m * m - 1.0 - v);
                    d_mu[(j, i)] = beta * m / denom;
                    d_lv[(j, i)] = beta * 0.5 * (v.exp() - 1.0) / denom;
                }
            }
        }
        Prior::Mixture { gamma } => {
            let gmm = &model.latent;
            let c = gmm.clusters();
            let owned;
            let gamma = match gamma {
                Some(g) => {
                    if g.nrows() != b || g.ncols() != c {
                        return Err(GmvaeError::Shape("responsibilities do not match the batch".into()));
                    }
                    g
                }
                None => {
                    owned = gmm.responsibilities_batch(&mu.into_owned());
                    &owned
                }
            };
            for i in 0..b {
                for k in 0..c {
                    let g = gamma[(i, k)];
                    if g > 0.0 {
                        kl_cluster += g * (g.ln() - gmm.pi[k].ln());
                    }
                    for j in 0..l {
                        let (m, v) = (mu[(j, i)], lv[(j, i)]);
                        let (mc, s2) = (gmm.mu[(k, j)], gmm.sigma2[(k, j)]);
                        let d = m - mc;
                        kl_latent += g * 0.5 * (s2.ln() - v + (v.exp() + d * d) / s2 - 1.0);
                        d_mu[(j, i)] += g * d / s2 / denom;
                        d_lv[(j, i)] += g * 0.5 * (v.exp() / s2 - 1.0) / denom;
                    }
                }
            }
        }
    }

    let (dec_grad, d_z) = model.decoder.backward(&dec_cache, d_recon);
    // z = mu + exp(lv / 2) * eta
    d_mu += &d_z;
    d_lv += d_z.component_mul(&std).component_mul(eta) * 0.5;
    let mut d_enc = DMatrix::zeros(2 * l, b);
    d_enc.rows_mut(0, l).copy_from(&d_mu);
    d_enc.rows_mut(l, l).copy_from(&d_lv);
    let (enc_grad, _) = model.encoder.backward(&enc_cache, d_enc);

    let parts = LossParts {
        reconstruction: rec / denom,
        kl_latent: kl_latent / denom,
        kl_cluster: kl_cluster / denom,
        total: (rec + weight * kl_latent + kl_cluster) / denom,
    };
    Ok((parts, Gradients { encoder: enc_grad, decoder: dec_grad }))
}
