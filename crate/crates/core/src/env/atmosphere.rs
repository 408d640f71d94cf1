use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EnvError;

/// Which placement of the nine coefficients the rational fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyForm {
    /// Numerator c1 + c3 h + c5 h^2 + c7 h^3 + c9 h^4,
    /// denominator 1 + c2 h + c4 h^2 + c6 h^3 + c8 h^4.
    OddEven,
    /// Numerator c1 + c3 h + c2 h^2 + c7 h^3 + c9 h^4 as typeset in the source
    /// table; c5 unused. Kept for comparison only.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltitudeUnit {
    Meters,
    Kilometers,
}

impl AltitudeUnit {
    fn scale(self) -> f64 {
        match self {
            AltitudeUnit::Meters => 1.0,
            AltitudeUnit::Kilometers => 1e-3,
        }
    }
}

/// Onboard density model: `ln rho` is a rational quartic in altitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyAtmosphere {
    pub coefficients: [f64; 9],
    /// Fit validity bounds [m]; queries outside are clamped.
    pub h_min: f64,
    pub h_max: f64,
    pub form: PolyForm,
    pub unit: AltitudeUnit,
}

pub const URANUS_POLY_COEFFICIENTS: [f64; 9] = [
    -1.01e+00, 1.18e+07, -8.47e+07, -3.61e+01, 1.81e+02, 4.10e-05, -4.78e-05, 1.86e-11, -7.03e-10,
];

impl PolyAtmosphere {
    /// Uranus fit between 200 and 2000 km. The altitude unit is chosen by a
    /// positivity/monotonicity sweep: meters first, kilometers as fallback.
    pub fn uranus() -> Self {
        Self::with_resolved_unit(URANUS_POLY_COEFFICIENTS, 200e3, 2000e3, PolyForm::OddEven)
    }

    pub fn with_resolved_unit(coefficients: [f64; 9], h_min: f64, h_max: f64, form: PolyForm) -> Self {
        let mut atm = Self { coefficients, h_min, h_max, form, unit: AltitudeUnit::Meters };
        if !atm.is_monotone_on_fit_range(100.0) {
            atm.unit = AltitudeUnit::Kilometers;
        }
        atm
    }

    /// `ln rho` without clamping. Errors when the denominator vanishes.
    pub fn log_density_raw(&self, h: f64) -> Result<f64, EnvError> {
        let x = h * self.unit.scale();
        let c = &self.coefficients;
        let num = match self.form {
            PolyForm::OddEven => c[0] + x * (c[2] + x * (c[4] + x * (c[6] + x * c[8]))),
            PolyForm::Printed => c[0] + x * (c[2] + x * (c[1] + x * (c[6] + x * c[8]))),
        };
        let den = 1.0 + x * (c[1] + x * (c[3] + x * (c[5] + x * c[7])));
        if den.abs() < 1e-12 {
            return Err(EnvError::SingularFit(h));
        }
        Ok(num / den)
    }

    /// Density at altitude `h` [m]. Returns the value and whether `h` was
    /// clamped into the fit range.
    pub fn density(&self, h: f64) -> Result<(f64, bool), EnvError> {
        let hc = h.clamp(self.h_min, self.h_max);
        let rho = self.log_density_raw(hc)?.exp();
        Ok((rho, hc != h))
    }

    #[inline]
    pub(crate) fn density_fast(&self, h: f64) -> f64 {
        let x = h.clamp(self.h_min, self.h_max) * self.unit.scale();
        let c = &self.coefficients;
        let num = match self.form {
            PolyForm::OddEven => c[0] + x * (c[2] + x * (c[4] + x * (c[6] + x * c[8]))),
            PolyForm::Printed => c[0] + x * (c[2] + x * (c[1] + x * (c[6] + x * c[8]))),
        };
        let den = 1.0 + x * (c[1] + x * (c[3] + x * (c[5] + x * c[7])));
        (num / den).exp()
    }

    /// Dense sweep over the fit range: finite, positive and strictly decreasing.
    pub fn is_monotone_on_fit_range(&self, step: f64) -> bool {
        let mut prev = f64::INFINITY;
        let mut h = self.h_min;
        while h <= self.h_max {
            match self.log_density_raw(h) {
                Ok(l) if l.is_finite() && l.exp() > 0.0 && l < prev => prev = l,
                _ => return false,
            }
            h += step;
        }
        true
    }
}

/// Density profile on an altitude grid with linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedAtmosphere {
    altitudes: Vec<f64>,
    densities: Vec<f64>,
    seed: u64,
    // Set when the grid is uniform so lookups skip the binary search.
    uniform_step: Option<f64>,
}

impl TabulatedAtmosphere {
    pub fn new(altitudes: Vec<f64>, densities: Vec<f64>, seed: u64) -> Result<Self, EnvError> {
        if altitudes.is_empty() {
            return Err(EnvError::InvalidTable("empty table".into()));
        }
        if altitudes.len() != densities.len() {
            return Err(EnvError::InvalidTable(format!(
                "{} altitudes but {} densities",
                altitudes.len(),
                densities.len()
            )));
        }
        if altitudes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(EnvError::InvalidTable("altitude grid must be strictly increasing".into()));
        }
        if densities.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(EnvError::InvalidTable("densities must be finite and positive".into()));
        }
        let uniform_step = if altitudes.len() > 1 {
            let step = (altitudes[altitudes.len() - 1] - altitudes[0]) / (altitudes.len() - 1) as f64;
            let uniform = altitudes
                .iter()
                .enumerate()
                .all(|(i, h)| (h - (altitudes[0] + step * i as f64)).abs() <= 1e-9 * step.max(1.0));
            uniform.then_some(step)
        } else {
            None
        };
        Ok(Self { altitudes, densities, seed, uniform_step })
    }

    pub fn altitudes(&self) -> &[f64] {
        &self.altitudes
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Linear interpolation; clamps to the endpoint densities outside the grid.
    pub fn density(&self, h: f64) -> f64 {
        let n = self.altitudes.len();
        if n == 1 || h <= self.altitudes[0] {
            return self.densities[0];
        }
        if h >= self.altitudes[n - 1] {
            return self.densities[n - 1];
        }
        let i = match self.uniform_step {
            Some(step) => (((h - self.altitudes[0]) / step) as usize).min(n - 2),
            None => self.altitudes.partition_point(|&a| a <= h) - 1,
        };
        let (h0, h1) = (self.altitudes[i], self.altitudes[i + 1]);
        let w = (h - h0) / (h1 - h0);
        self.densities[i] + w * (self.densities[i + 1] - self.densities[i])
    }

    /// Two-column CSV `altitude_m,density_kg_m3`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "altitude_m,density_kg_m3")?;
        for (h, d) in self.altitudes.iter().zip(&self.densities) {
            writeln!(w, "{h:?},{d:?}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, seed: u64) -> Result<Self, EnvError> {
        let mut hs = Vec::new();
        let mut ds = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| EnvError::InvalidTable(e.to_string()))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64, EnvError> {
                s.and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| EnvError::InvalidTable(format!("bad row {}: {line}", i + 1)))
            };
            hs.push(parse(parts.next())?);
            ds.push(parse(parts.next())?);
        }
        Self::new(hs, ds, seed)
    }

    /// Writes `<stem>.csv` and `<stem>.json` (seed and generator spec).
    pub fn save(&self, stem: &Path, spec: Option<&PerturbationSpec>) -> std::io::Result<()> {
        let csv = stem.with_extension("csv");
        let f = std::fs::File::create(&csv)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let sidecar = ProfileSidecar { seed: self.seed, spec: spec.cloned() };
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

/// Metadata stored next to an exported atmosphere profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSidecar {
    pub seed: u64,
    pub spec: Option<PerturbationSpec>,
}

/// Parameters of the synthetic perturbed-atmosphere generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    pub delta_p: f64,
    /// e-folding altitude of the log-density noise correlation [m].
    pub correlation_length: f64,
    /// Log-density noise standard deviation at `delta_p = 1`.
    pub sigma_base: f64,
    pub altitude_range: (f64, f64),
    pub grid_step: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            delta_p: 2.0,
            correlation_length: 60e3,
            sigma_base: 0.15,
            altitude_range: (0.0, 5000e3),
            grid_step: 1e3,
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.delta_p >= 0.0) {
            return Err(EnvError::InvalidPerturbation("delta_p must be non-negative"));
        }
        if !(self.correlation_length > 0.0) {
            return Err(EnvError::InvalidPerturbation("correlation length must be positive"));
        }
        if !(self.grid_step > 0.0) {
            return Err(EnvError::InvalidPerturbation("grid step must be positive"));
        }
        if !(self.sigma_base >= 0.0) {
            return Err(EnvError::InvalidPerturbation("sigma_base must be non-negative"));
        }
        if !(self.altitude_range.1 > self.altitude_range.0) {
            return Err(EnvError::InvalidPerturbation("altitude range is empty"));
        }
        Ok(())
    }

    fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.altitude_range;
        let n = ((hi - lo) / self.grid_step).floor() as usize + 1;
        (0..n).map(|i| lo + self.grid_step * i as f64).collect()
    }
}

/// Perturbed truth profile: the mean log-density plus a stationary AR(1)
/// sequence along altitude, scaled by `delta_p * sigma_base`.
pub fn generate_truth_atmosphere(
    mean: &PolyAtmosphere,
    spec: &PerturbationSpec,
    seed: u64,
) -> Result<TabulatedAtmosphere, EnvError> {
    spec.validate()?;
    let grid = spec.grid();
    let a = (-spec.grid_step / spec.correlation_length).exp();
    let innovation = (1.0 - a * a).sqrt();
    let amplitude = spec.delta_p * spec.sigma_base;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: f64 = StandardNormal.sample(&mut rng);
    let mut densities = Vec::with_capacity(grid.len());
    for (i, &h) in grid.iter().enumerate() {
        if i > 0 {
            let xi: f64 = StandardNormal.sample(&mut rng);
            x = a * x + innovation * xi;
        }
        let (rho_mean, _) = mean.density(h)?;
        densities.push(if amplitude == 0.0 { rho_mean } else { (rho_mean.ln() + amplitude * x).exp() });
    }
    TabulatedAtmosphere::new(grid, densities, seed)
}

/// Atmosphere seen by the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub enum AtmosphereModel {
    Polynomial(PolyAtmosphere),
    Tabulated(TabulatedAtmosphere),
    /// Zero density everywhere.
    Vacuum,
}

impl AtmosphereModel {
    #[inline]
    pub fn density(&self, h: f64) -> f64 {
        match self {
            AtmosphereModel::Polynomial(p) => p.density_fast(h),
            AtmosphereModel::Tabulated(t) => t.density(h),
            AtmosphereModel::Vacuum => 0.0,
        }
    }
}
