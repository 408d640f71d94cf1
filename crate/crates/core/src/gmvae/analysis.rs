use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{EnergyDataset, GmvaeError, GmvaeModel};
use crate::dynamics::TrajectoryMode;

/// Singular values of the mean-centred sample matrix, descending.
pub fn svd_analysis(samples: &DMatrix<f64>) -> Result<Vec<f64>, GmvaeError> {
    if samples.nrows() < 2 {
        return Err(GmvaeError::Shape("need at least two samples".into()));
    }
    let mut centred = samples.clone();
    for mut col in centred.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let mut s: Vec<f64> = centred.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Maps every cluster to the mode whose samples lie at the smallest mean
/// diagonal Mahalanobis distance from it, then makes sure every mode present
/// in the labels owns at least one cluster when there are enough clusters.
pub fn assign_clusters(model: &GmvaeModel, data: &EnergyDataset) -> Result<Vec<TrajectoryMode>, GmvaeError> {
    for m in [TrajectoryMode::Capture, data.failure_mode] {
        if !data.labels.contains(&m) {
            return Err(GmvaeError::MissingMode(m));
        }
    }
    let modes: Vec<TrajectoryMode> = TrajectoryMode::ALL.into_iter().filter(|m| data.labels.contains(m)).collect();
    let (mu, _) = model.encode(&data.columns())?;
    let gmm = &model.latent;
    let c = gmm.clusters();
    // dist[k][m]: mean distance from cluster k to the samples of mode m.
    let mut dist = vec![vec![0.0; modes.len()]; c];
    for (mi, mode) in modes.iter().enumerate() {
        let idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == *mode).collect();
        for (k, row) in dist.iter_mut().enumerate() {
            let total: f64 = idx
                .iter()
                .map(|&i| {
                    (0..gmm.dim())
                        .map(|j| (mu[(j, i)] - gmm.mu[(k, j)]).powi(2) / gmm.sigma2[(k, j)])
                        .sum::<f64>()
                        .sqrt()
                })
                .sum();
            row[mi] = total / idx.len() as f64;
        }
    }
    let argmin = |row: &[f64]| row.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let mut assign: Vec<usize> = dist.iter().map(|row| argmin(row)).collect();
    for mi in 0..modes.len() {
        if assign.contains(&mi) {
            continue;
        }
        let counts = |a: &[usize], m: usize| a.iter().filter(|&&x| x == m).count();
        let donor = (0..c)
            .filter(|&k| counts(&assign, assign[k]) > 1)
            .min_by(|&a, &b| (dist[a][mi] - dist[a][assign[a]]).total_cmp(&(dist[b][mi] - dist[b][assign[b]])));
        if let Some(k) = donor {
            assign[k] = mi;
        }
    }
    Ok(assign.into_iter().map(|mi| modes[mi]).collect())
}

/// Mode of the most responsible cluster for every sample.
pub fn predict_modes(model: &GmvaeModel, data: &EnergyDataset) -> Result<Vec<TrajectoryMode>, GmvaeError> {
    let (mu, _) = model.encode(&data.columns())?;
    Ok(mu
        .column_iter()
        .map(|z| {
            let g = model.latent.responsibilities(z.as_slice());
            let k = g.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0);
            model.cluster_to_mode[k]
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassification {
    /// `(mode, samples, percent misassigned)` for every mode in the labels.
    pub per_mode: Vec<(TrajectoryMode, usize, f64)>,
    /// Mean of the per-mode percentages.
    pub mean: f64,
}

pub fn misclassification(model: &GmvaeModel, data: &EnergyDataset) -> Result<Misclassification, GmvaeError> {
    let pred = predict_modes(model, data)?;
    let mut per_mode = Vec::new();
    for mode in TrajectoryMode::ALL {
        let n = data.labels.iter().filter(|&&m| m == mode).count();
        if n == 0 {
            continue;
        }
        let wrong = data.labels.iter().zip(&pred).filter(|(t, p)| **t == mode && **p != mode).count();
        per_mode.push((mode, n, 100.0 * wrong as f64 / n as f64));
    }
    let mean = if per_mode.is_empty() { 0.0 } else { per_mode.iter().map(|p| p.2).sum::<f64>() / per_mode.len() as f64 };
    Ok(Misclassification { per_mode, mean })
}

/// Total variance of the reconstructions over total variance of the inputs.
pub fn variance_ratio(model: &GmvaeModel, data: &EnergyDataset) -> Result<f64, GmvaeError> {
    let x = data.columns();
    let (mu, _) = model.encode(&x)?;
    let rec = model.decode(&mu)?;
    let total_var = |m: &DMatrix<f64>| {
        m.row_iter()
            .map(|r| {
                let mean = r.mean();
                r.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
    };
    Ok(total_var(&rec) / total_var(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmvae::{time_grid, GmmLatent};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rank_one_data_has_one_singular_value() {
        let base: Vec<f64> = (0..8).map(|j| (j as f64).sin() + 0.3).collect();
        let x = DMatrix::from_fn(6, 8, |i, j| (i as f64 - 2.5) * base[j]);
        let s = svd_analysis(&x).unwrap();
        assert!(s[0] > 1.0);
        assert!(s[1..].iter().all(|v| *v < 1e-12 * s[0]));
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn constructed_rank_shows_a_drop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = |r, c| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let x: DMatrix<f64> = g(200, 5) * g(5, 64) + g(200, 64) * 1e-3;
        let s = svd_analysis(&x).unwrap();
        assert!(s[4] > 100.0 * s[5], "{:?}", &s[..7]);
    }

    // Identity encoder on 2-D data: latent means equal the inputs.
    fn identity_model(means: &[[f64; 2]], modes: &[TrajectoryMode]) -> GmvaeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = GmvaeModel::new(2, &[2], 2, means.len(), &mut rng).unwrap();
        let l0 = &mut m.encoder.layers[0];
        l0.w.fill(0.0);
        l0.b.fill(0.0);
        // gelu(x + 10) - 10 ~ x for moderate x
        l0.w[(0, 0)] = 1.0;
        l0.w[(1, 1)] = 1.0;
        l0.b.fill(10.0);
        let l1 = &mut m.encoder.layers[1];
        l1.w.fill(0.0);
        l1.b.fill(0.0);
        l1.w[(0, 0)] = 1.0;
        l1.w[(1, 1)] = 1.0;
        l1.b[0] = -10.0;
        l1.b[1] = -10.0;
        let flat: Vec<f64> = means.iter().flat_map(|r| r.iter().copied()).collect();
        m.latent = GmmLatent::with_means(DMatrix::from_row_slice(means.len(), 2, &flat));
        m.latent.sigma2.fill(0.25);
        m.cluster_to_mode = modes.to_vec();
        m
    }

    fn blobs(centres: &[([f64; 2], TrajectoryMode)], per: usize) -> EnergyDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut raw = Vec::new();
        let mut labels = Vec::new();
        for (c, mode) in centres {
            for _ in 0..per {
                raw.push(vec![c[0] + rng.random_range(-0.2..0.2), c[1] + rng.random_range(-0.2..0.2)]);
                labels.push(*mode);
            }
        }
        let mut ds = EnergyDataset::from_raw(raw.clone(), labels, crate::gmvae::Normalization::Population, time_grid(1.0, 2), "t".into(), TrajectoryMode::Escape).unwrap();
        // Keep the inputs in latent units.
        ds.samples = DMatrix::from_fn(raw.len(), 2, |i, j| raw[i][j]);
        ds
    }

    #[test]
    fn separated_clusters_map_to_their_modes() {
        use TrajectoryMode::*;
        let centres = [([1.0, 1.0], Capture), ([-2.0, 0.5], Escape), ([3.0, -2.0], Capture)];
        let ds = blobs(&centres, 30);
        let means: Vec<[f64; 2]> = centres.iter().map(|c| c.0).collect();
        let m = identity_model(&means, &[Impact; 3]);
        let map = assign_clusters(&m, &ds).unwrap();
        assert_eq!(map, vec![Capture, Escape, Capture]);
        assert_eq!(assign_clusters(&m, &ds).unwrap(), map);

        let m = GmvaeModel { cluster_to_mode: map, ..m };
        let mis = misclassification(&m, &ds).unwrap();
        assert_eq!(mis.mean, 0.0);
    }

    #[test]
    fn constant_prediction_on_balanced_set_is_fifty_percent() {
        use TrajectoryMode::*;
        let ds = blobs(&[([1.0, 1.0], Capture), ([-2.0, 0.5], Escape)], 20);
        let m = identity_model(&[[1.0, 1.0], [-2.0, 0.5]], &[Capture, Capture]);
        assert_eq!(misclassification(&m, &ds).unwrap().mean, 50.0);
    }

    #[test]
    fn every_mode_gets_a_cluster() {
        use TrajectoryMode::*;
        // Both clusters sit on the capture blob; escape must still own one.
        let ds = blobs(&[([1.0, 1.0], Capture), ([-2.0, 0.5], Escape)], 20);
        let m = identity_model(&[[1.0, 1.0], [0.9, 1.1]], &[Capture, Capture]);
        let map = assign_clusters(&m, &ds).unwrap();
        assert!(map.contains(&Capture) && map.contains(&Escape));
    }

    #[test]
    fn missing_failure_mode_is_an_error() {
        use TrajectoryMode::*;
        let ds = blobs(&[([1.0, 1.0], Capture)], 10);
        let m = identity_model(&[[1.0, 1.0]], &[Capture]);
        assert!(matches!(assign_clusters(&m, &ds), Err(GmvaeError::MissingMode(Escape))));
    }
}
