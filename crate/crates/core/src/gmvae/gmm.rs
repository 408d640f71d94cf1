use nalgebra::DMatrix;
use rand::Rng;

use super::GmvaeError;

/// Smallest allowed cluster variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Total responsibility below which a cluster counts as empty.
pub const EMPTY_CLUSTER: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal Gaussian mixture prior over the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmLatent {
    pub pi: Vec<f64>,
    /// `c x l` cluster means.
    pub mu: DMatrix<f64>,
    /// `c x l` diagonal variances.
    pub sigma2: DMatrix<f64>,
}

impl GmmLatent {
    /// Uniform weights, the given means and unit variances.
    pub fn with_means(mu: DMatrix<f64>) -> Self {
        let c = mu.nrows();
        let sigma2 = DMatrix::from_element(c, mu.ncols(), 1.0);
        Self { pi: vec![1.0 / c as f64; c], mu, sigma2 }
    }

    pub fn clusters(&self) -> usize {
        self.pi.len()
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }

    pub fn validate(&self) -> Result<(), GmvaeError> {
        let c = self.pi.len();
        if c == 0 || self.mu.nrows() != c || self.sigma2.nrows() != c || self.sigma2.ncols() != self.mu.ncols() {
            return Err(GmvaeError::Shape("mixture parameter shapes disagree".into()));
        }
        if self.pi.iter().any(|p| !(*p >= 0.0)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(GmvaeError::Shape("mixture weights must be non-negative and sum to 1".into()));
        }
        if self.sigma2.iter().any(|s| !(*s > 0.0)) || self.mu.iter().any(|m| !m.is_finite()) {
            return Err(GmvaeError::Shape("mixture variances must be positive and means finite".into()));
        }
        Ok(())
    }

    /// `log pi_c + log N(z | mu_c, sigma2_c)` for every cluster.
    pub fn log_joint(&self, z: &[f64]) -> Vec<f64> {
        (0..self.clusters())
            .map(|c| {
                let mut s = 0.0;
                for (j, zj) in z.iter().enumerate() {
                    let v = self.sigma2[(c, j)];
                    let d = zj - self.mu[(c, j)];
                    s += LN_2PI + v.ln() + d * d / v;
                }
                self.pi[c].ln() - 0.5 * s
            })
            .collect()
    }

    /// Posterior cluster probabilities `p(c | z)`.
    pub fn responsibilities(&self, z: &[f64]) -> Vec<f64> {
        let lj = self.log_joint(z);
        let lse = log_sum_exp(&lj);
        let mut g: Vec<f64> = lj.iter().map(|v| (v - lse).exp()).collect();
        let s: f64 = g.iter().sum();
        for v in &mut g {
            *v /= s;
        }
        g
    }

    /// Responsibilities for every column of `z` (`l x n`), returned `n x c`.
    pub fn responsibilities_batch(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(z.ncols(), self.clusters());
        for (i, col) in z.column_iter().enumerate() {
            let g = self.responsibilities(col.as_slice());
            for (c, v) in g.into_iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        out
    }

    /// Total mixture log-likelihood of the columns of `z`.
    pub fn log_likelihood(&self, z: &DMatrix<f64>) -> f64 {
        z.column_iter().map(|col| log_sum_exp(&self.log_joint(col.as_slice()))).sum()
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Weighted M-step. `z` is `l x n`, `gamma` is `n x c` with rows summing to 1.
/// Returns the updated mixture and the indices of re-seeded empty clusters.
pub fn em_update<R: Rng>(
    latent: &GmmLatent,
    z: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<(GmmLatent, Vec<usize>), GmvaeError> {
    em_update_with_variance(latent, z, None, gamma, rng)
}

/// M-step on encoder posteriors `N(z, posterior_var)`: the cluster variances
/// also absorb the posterior variances, which is the exact update for the
/// expected log-likelihood. Without it, fitting the mixture to the means
/// alone lets the clusters and the encodings shrink each other to a point.
pub fn em_update_with_variance<R: Rng>(
    latent: &GmmLatent,
    z: &DMatrix<f64>,
    posterior_var: Option<&DMatrix<f64>>,
    gamma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<(GmmLatent, Vec<usize>), GmvaeError> {
    let (l, n) = (z.nrows(), z.ncols());
    if posterior_var.is_some_and(|v| v.shape() != z.shape()) {
        return Err(GmvaeError::Shape("posterior variances must match the encodings".into()));
    }
    let pv = |j: usize, i: usize| posterior_var.map_or(0.0, |v| v[(j, i)]);
    let c = latent.clusters();
    if n == 0 || gamma.nrows() != n || gamma.ncols() != c || l != latent.dim() {
        return Err(GmvaeError::Shape(format!("em_update: z is {l}x{n}, gamma is {}x{}", gamma.nrows(), gamma.ncols())));
    }
    let mut pi = vec![0.0; c];
    let mut mu = DMatrix::zeros(c, l);
    let mut sigma2 = DMatrix::zeros(c, l);
    let mut reseeded = Vec::new();

    // Global per-dimension variance, used for re-seeded clusters.
    let mean: Vec<f64> = (0..l).map(|j| z.row(j).sum() / n as f64).collect();
    let global_var: Vec<f64> = (0..l)
        .map(|j| ((0..n).map(|i| (z[(j, i)] - mean[j]).powi(2) + pv(j, i)).sum::<f64>() / n as f64).max(VARIANCE_FLOOR))
        .collect();

    for k in 0..c {
        let nk: f64 = gamma.column(k).sum();
        if nk < EMPTY_CLUSTER {
            let pick = rng.random_range(0..n);
            for j in 0..l {
                mu[(k, j)] = z[(j, pick)];
                sigma2[(k, j)] = global_var[j];
            }
            pi[k] = 1.0 / n as f64;
            reseeded.push(k);
            continue;
        }
        pi[k] = nk / n as f64;
        for j in 0..l {
            let m = (0..n).map(|i| gamma[(i, k)] * z[(j, i)]).sum::<f64>() / nk;
            let v = (0..n).map(|i| gamma[(i, k)] * ((z[(j, i)] - m).powi(2) + pv(j, i))).sum::<f64>() / nk;
            mu[(k, j)] = m;
            sigma2[(k, j)] = v.max(VARIANCE_FLOOR);
        }
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    Ok((GmmLatent { pi, mu, sigma2 }, reseeded))
}
