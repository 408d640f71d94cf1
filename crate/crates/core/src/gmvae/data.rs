use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::GmvaeError;
use crate::dynamics::{Trajectory, TrajectoryMode};

pub const GRID_POINTS: usize = 64;

/// `n` evenly spaced times from 0 to `t_end` inclusive.
pub fn time_grid(t_end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Linear interpolation of `(times, values)` at `grid`, holding the end values outside.
pub fn resample(times: &[f64], values: &[f64], grid: &[f64]) -> Result<Vec<f64>, GmvaeError> {
    if times.is_empty() || times.len() != values.len() {
        return Err(GmvaeError::Shape(format!("series has {} times and {} values", times.len(), values.len())));
    }
    let last = times.len() - 1;
    let mut k = 0;
    Ok(grid
        .iter()
        .map(|&t| {
            if t <= times[0] {
                return values[0];
            }
            if t >= times[last] {
                return values[last];
            }
            while times[k + 1] < t {
                k += 1;
            }
            let (t0, t1) = (times[k], times[k + 1]);
            if t1 == t0 {
                return values[k + 1];
            }
            let f = (t - t0) / (t1 - t0);
            values[k] + f * (values[k + 1] - values[k])
        })
        .collect())
}

/// Energy series resampled on `grid` and divided by `norm_constant`.
pub fn preprocess_series(times: &[f64], energy: &[f64], grid: &[f64], norm_constant: f64) -> Result<Vec<f64>, GmvaeError> {
    if !(norm_constant > 0.0) {
        return Err(GmvaeError::Config(format!("norm constant {norm_constant} must be positive")));
    }
    let mut v = resample(times, energy, grid)?;
    v.iter_mut().for_each(|x| *x /= norm_constant);
    Ok(v)
}

pub fn preprocess(traj: &Trajectory, grid: &[f64], norm_constant: f64) -> Result<Vec<f64>, GmvaeError> {
    let times: Vec<f64> = traj.times().collect();
    preprocess_series(&times, &traj.energy_series, grid, norm_constant)
}

/// How energy histories are scaled to O(1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Each history is divided by the magnitude of its own first sample.
    #[default]
    PerSample,
    /// Every history is divided by the population norm constant.
    Population,
}

impl Normalization {
    /// Divisor for a resampled history.
    pub fn scale(self, row: &[f64], norm_constant: f64) -> f64 {
        match self {
            Normalization::PerSample => row.first().map_or(0.0, |v| v.abs()),
            Normalization::Population => norm_constant,
        }
    }
}

/// Resamples on `grid` and scales according to `normalization`.
pub fn preprocess_normalized(
    times: &[f64],
    energy: &[f64],
    grid: &[f64],
    normalization: Normalization,
    norm_constant: f64,
) -> Result<Vec<f64>, GmvaeError> {
    let raw = resample(times, energy, grid)?;
    let k = normalization.scale(&raw, norm_constant);
    if !(k > 0.0) {
        return Err(GmvaeError::Config(format!("normalization divisor {k} must be positive")));
    }
    Ok(raw.into_iter().map(|v| v / k).collect())
}

/// Metadata stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub scenario: String,
    pub norm_constant: f64,
    pub time_grid: Vec<f64>,
    pub failure_mode: TrajectoryMode,
    #[serde(default)]
    pub normalization: Normalization,
    pub rows: usize,
    /// Rows per mode in [`TrajectoryMode::ALL`] order.
    pub mode_counts: [usize; 3],
    /// Trials whose mode was outside the scenario pair and were left out.
    pub skipped_trials: usize,
    pub master_seed: u64,
    pub config_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDataset {
    /// One normalized history per row.
    pub samples: DMatrix<f64>,
    pub labels: Vec<TrajectoryMode>,
    /// Population mean of the initial energy magnitude.
    pub norm_constant: f64,
    pub normalization: Normalization,
    pub time_grid: Vec<f64>,
    pub scenario: String,
    pub failure_mode: TrajectoryMode,
}

impl EnergyDataset {
    /// Scales raw resampled energies; `norm_constant` is always the
    /// population mean initial magnitude.
    pub fn from_raw(
        raw: Vec<Vec<f64>>,
        labels: Vec<TrajectoryMode>,
        normalization: Normalization,
        time_grid: Vec<f64>,
        scenario: String,
        failure_mode: TrajectoryMode,
    ) -> Result<Self, GmvaeError> {
        if raw.is_empty() || raw.len() != labels.len() {
            return Err(GmvaeError::Shape(format!("{} rows with {} labels", raw.len(), labels.len())));
        }
        let d = time_grid.len();
        if raw.iter().any(|r| r.len() != d) {
            return Err(GmvaeError::Shape(format!("every row needs {d} entries")));
        }
        let norm_constant = raw.iter().map(|r| r[0].abs()).sum::<f64>() / raw.len() as f64;
        if !(norm_constant > 0.0) {
            return Err(GmvaeError::Config("initial energies are all zero".into()));
        }
        let scales: Vec<f64> = raw.iter().map(|r| normalization.scale(r, norm_constant)).collect();
        if scales.iter().any(|k| !(*k > 0.0)) {
            return Err(GmvaeError::Config("a history starts at zero energy".into()));
        }
        let samples = DMatrix::from_fn(raw.len(), d, |i, j| raw[i][j] / scales[i]);
        Ok(Self { samples, labels, norm_constant, normalization, time_grid, scenario, failure_mode })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn mode_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for m in &self.labels {
            c[m.index()] += 1;
        }
        c
    }

    /// Rows `range` as a new dataset with the same normalization.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            samples: self.samples.rows(start, len).into_owned(),
            labels: self.labels[start..start + len].to_vec(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            samples: DMatrix::zeros(0, self.dim()),
            labels: Vec::new(),
            norm_constant: self.norm_constant,
            normalization: self.normalization,
            time_grid: self.time_grid.clone(),
            scenario: self.scenario.clone(),
            failure_mode: self.failure_mode,
        }
    }

    /// Train, validation and test parts by row order.
    pub fn split(&self, sizes: (usize, usize, usize)) -> Result<(Self, Self, Self), GmvaeError> {
        let (a, b, c) = sizes;
        if a + b + c != self.len() {
            return Err(GmvaeError::Config(format!("split {a}/{b}/{c} does not cover {} rows", self.len())));
        }
        Ok((self.slice(0, a), self.slice(a, b), self.slice(a + b, c)))
    }

    /// Samples as a column-wise batch.
    pub fn columns(&self) -> DMatrix<f64> {
        self.samples.transpose()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},label", header.join(","))?;
        for (i, label) in self.labels.iter().enumerate() {
            for v in self.samples.row(i).iter() {
                write!(w, "{v:?},")?;
            }
            writeln!(w, "{}", label.as_str())?;
        }
        Ok(())
    }

    /// Reads rows written by [`write_csv`](Self::write_csv); `#` lines are skipped.
    pub fn read_csv<R: BufRead>(r: R, sidecar: &DatasetSidecar) -> Result<Self, GmvaeError> {
        let bad = |reason: String| GmvaeError::Format { path: "dataset".into(), reason };
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut header_seen = false;
        for line in r.lines() {
            let line = line.map_err(|source| GmvaeError::Io { path: "dataset".into(), source })?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let mut fields: Vec<&str> = line.split(',').collect();
            let label = fields.pop().ok_or_else(|| bad("empty row".into()))?;
            let mode: TrajectoryMode = label.parse().map_err(|_| bad(format!("unknown label {label}")))?;
            let vals: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let vals = vals.map_err(|e| bad(e.to_string()))?;
            if vals.len() != sidecar.time_grid.len() {
                return Err(bad(format!("row has {} values, grid has {}", vals.len(), sidecar.time_grid.len())));
            }
            rows.push(vals);
            labels.push(mode);
        }
        if rows.is_empty() {
            return Err(bad("no rows".into()));
        }
        let d = sidecar.time_grid.len();
        Ok(Self {
            samples: DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]),
            labels,
            norm_constant: sidecar.norm_constant,
            normalization: sidecar.normalization,
            time_grid: sidecar.time_grid.clone(),
            scenario: sidecar.scenario.clone(),
            failure_mode: sidecar.failure_mode,
        })
    }

    /// Loads `<stem>.csv` with its `<stem>.json` sidecar.
    pub fn load(csv: &Path) -> Result<(Self, DatasetSidecar), GmvaeError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |source| GmvaeError::Io { path: p.clone(), source }
        };
        let side_path = csv.with_extension("json");
        let text = std::fs::read_to_string(&side_path).map_err(io(&side_path))?;
        let sidecar: DatasetSidecar = serde_json::from_str(&text)
            .map_err(|e| GmvaeError::Format { path: side_path.display().to_string(), reason: e.to_string() })?;
        let f = std::fs::File::open(csv).map_err(io(csv))?;
        let ds = Self::read_csv(std::io::BufReader::new(f), &sidecar).map_err(|e| match e {
            GmvaeError::Format { reason, .. } => GmvaeError::Format { path: csv.display().to_string(), reason },
            other => other,
        })?;
        Ok((ds, sidecar))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_spans_the_flight() {
        let g = time_grid(1500.0, GRID_POINTS);
        assert_eq!(g.len(), 64);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[63], 1500.0);
    }

    #[test]
    fn on_grid_samples_pass_through_scaled() {
        let g = time_grid(630.0, 64);
        let e: Vec<f64> = g.iter().map(|t| 5.0 - t * t).collect();
        let out = preprocess_series(&g, &e, &g, 2.0).unwrap();
        for (o, v) in out.iter().zip(&e) {
            assert_eq!(*o, v / 2.0);
        }
    }

    #[test]
    fn short_series_is_padded_with_its_last_value() {
        let g = time_grid(630.0, 64);
        let t = &g[..=40];
        let e: Vec<f64> = t.iter().map(|t| -t).collect();
        let out = preprocess_series(t, &e, &g, 1.0).unwrap();
        assert!(out[41..].iter().all(|v| *v == e[40]));
    }

    #[test]
    fn interpolates_linearly_between_samples() {
        let out = resample(&[0.0, 10.0], &[1.0, 3.0], &[2.5, 5.0]).unwrap();
        assert_eq!(out, vec![1.5, 2.0]);
    }

    #[test]
    fn empty_series_is_an_error() {
        assert!(resample(&[], &[], &[0.0]).is_err());
        assert!(preprocess_series(&[0.0], &[1.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn population_normalization_centres_first_column() {
        let g = time_grid(10.0, 4);
        let raw = vec![vec![2.0, 1.0, 0.0, -1.0], vec![4.0, 3.0, 2.0, 1.0]];
        let ds = EnergyDataset::from_raw(raw, vec![TrajectoryMode::Capture; 2], Normalization::Population, g, "t".into(), TrajectoryMode::Escape).unwrap();
        assert_eq!(ds.norm_constant, 3.0);
        assert_eq!(ds.samples[(1, 0)], 4.0 / 3.0);
    }

    #[test]
    fn csv_round_trip() {
        let g = time_grid(10.0, 3);
        let raw = vec![vec![0.1, 1.0 / 3.0, -2.0], vec![1e-17, 5.0, 6.0]];
        let labels = vec![TrajectoryMode::Capture, TrajectoryMode::Impact];
        let ds = EnergyDataset::from_raw(raw, labels, Normalization::Population, g.clone(), "near-impact".into(), TrajectoryMode::Impact).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let side = DatasetSidecar {
            scenario: ds.scenario.clone(),
            norm_constant: ds.norm_constant,
            time_grid: g,
            failure_mode: TrajectoryMode::Impact,
            normalization: Normalization::Population,
            rows: 2,
            mode_counts: ds.mode_counts(),
            skipped_trials: 0,
            master_seed: 1,
            config_hash: String::new(),
            tool_version: String::new(),
        };
        let back = EnergyDataset::read_csv(buf.as_slice(), &side).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn split_sizes_must_cover_rows() {
        let g = time_grid(1.0, 2);
        let raw = vec![vec![1.0, 0.0]; 10];
        let ds = EnergyDataset::from_raw(raw, vec![TrajectoryMode::Capture; 10], Normalization::Population, g, "x".into(), TrajectoryMode::Escape).unwrap();
        let (a, b, c) = ds.split((6, 2, 2)).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (6, 2, 2));
        assert!(ds.split((6, 2, 1)).is_err());
    }

    proptest! {
        #[test]
        fn resampled_values_stay_within_series_range(vals in proptest::collection::vec(-1e3f64..1e3, 2..40), n in 2usize..80) {
            let times: Vec<f64> = (0..vals.len()).map(|i| i as f64 * 1.7).collect();
            let g = time_grid(times.last().unwrap() * 1.3, n);
            let out = resample(&times, &vals, &g).unwrap();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out.iter().all(|v| *v >= lo - 1e-9 && *v <= hi + 1e-9));
        }
    }
}
