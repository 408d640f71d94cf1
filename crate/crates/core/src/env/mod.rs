//! Planetary constants, zonal gravity and atmosphere models.

mod atmosphere;

pub use atmosphere::{
    generate_truth_atmosphere, AltitudeUnit, AtmosphereModel, PerturbationSpec, PolyAtmosphere,
    PolyForm, ProfileSidecar, TabulatedAtmosphere, URANUS_POLY_COEFFICIENTS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard Earth gravity, used for acceleration thresholds quoted in g.
pub const EARTH_G0: f64 = 9.806_65;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("invalid planet constants: {0}")]
    InvalidPlanet(&'static str),
    #[error("rational density fit has a vanishing denominator at h = {0} m")]
    SingularFit(f64),
    #[error("invalid atmosphere table: {0}")]
    InvalidTable(String),
    #[error("invalid perturbation spec: {0}")]
    InvalidPerturbation(&'static str),
}

/// Gravitational and rotational constants of the central body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanetModel {
    /// Gravitational parameter [m^3/s^2].
    pub mu: f64,
    /// Equatorial radius [m].
    pub re: f64,
    pub j2: f64,
    /// Rotation rate [rad/s].
    pub omega: f64,
}

impl PlanetModel {
    /// Uranus (JPL GM and reference radius, J2 at 25,559 km, 17.24 h sidereal day).
    pub const fn uranus() -> Self {
        Self {
            mu: 5.793_951_322e15,
            re: 25_559_000.0,
            j2: 3.510_68e-3,
            omega: 1.012_37e-4,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.mu > 0.0) {
            return Err(EnvError::InvalidPlanet("mu must be positive"));
        }
        if !(self.re > 0.0) {
            return Err(EnvError::InvalidPlanet("equatorial radius must be positive"));
        }
        if !(self.omega >= 0.0) {
            return Err(EnvError::InvalidPlanet("rotation rate must be non-negative"));
        }
        if !(self.j2 >= 0.0) {
            return Err(EnvError::InvalidPlanet("J2 must be non-negative"));
        }
        Ok(())
    }

    /// Reference gravity `mu / Re^2` used for nondimensionalization.
    pub fn g0(&self) -> f64 {
        self.mu / (self.re * self.re)
    }

    /// Velocity scale `sqrt(Re * g0)`.
    pub fn velocity_scale(&self) -> f64 {
        (self.re * self.g0()).sqrt()
    }

    pub fn altitude(&self, r: f64) -> f64 {
        r - self.re
    }
}

impl Default for PlanetModel {
    fn default() -> Self {
        Self::uranus()
    }
}

/// Radial and latitudinal gravity components including the J2 zonal term.
///
/// Returns `(g_r, g_phi)` in m/s^2.
pub fn gravity(planet: &PlanetModel, r: f64, phi: f64) -> Result<(f64, f64), EnvError> {
    if !(r > 0.0) {
        return Err(EnvError::NonPositiveRadius(r));
    }
    Ok(gravity_unchecked(planet, r, phi))
}

#[inline]
pub(crate) fn gravity_unchecked(planet: &PlanetModel, r: f64, phi: f64) -> (f64, f64) {
    let base = planet.mu / (r * r);
    let ratio = planet.re / r;
    let k = planet.j2 * ratio * ratio;
    let (s, c) = phi.sin_cos();
    let g_r = base * (1.0 + k * (1.5 - 4.5 * s * s));
    let g_phi = 3.0 * base * k * s * c;
    (g_r, g_phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn point_mass_when_j2_off() {
        let p = PlanetModel { j2: 0.0, ..PlanetModel::uranus() };
        let r = 2.7e7;
        let (gr, gphi) = gravity(&p, r, 0.4).unwrap();
        assert_eq!(gr, p.mu / (r * r));
        assert_eq!(gphi, 0.0);
    }

    #[test]
    fn equator_has_no_latitudinal_component() {
        let p = PlanetModel::uranus();
        let (_, gphi) = gravity(&p, 2.6e7, 0.0).unwrap();
        assert_eq!(gphi, 0.0);
    }

    #[test]
    fn pole_value() {
        let p = PlanetModel::uranus();
        let r = 2.6e7;
        let (gr, gphi) = gravity(&p, r, FRAC_PI_2).unwrap();
        let ratio = p.re / r;
        let expected = p.mu / (r * r) * (1.0 - 3.0 * p.j2 * ratio * ratio);
        assert!((gr - expected).abs() <= 1e-12 * expected);
        assert!(gphi.abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_radius() {
        let p = PlanetModel::uranus();
        assert_eq!(gravity(&p, 0.0, 0.0), Err(EnvError::NonPositiveRadius(0.0)));
        assert!(gravity(&p, -1.0, 0.0).is_err());
    }

    #[test]
    fn uranus_constants_validate() {
        PlanetModel::uranus().validate().unwrap();
        let bad = PlanetModel { mu: -1.0, ..PlanetModel::uranus() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn point_mass_randomized(r in 2.0e7f64..1.0e9, phi in -1.5f64..1.5) {
            let p = PlanetModel { j2: 0.0, ..PlanetModel::uranus() };
            let (gr, gphi) = gravity(&p, r, phi).unwrap();
            prop_assert!((gr - p.mu / (r * r)).abs() <= 1e-15 * gr);
            prop_assert_eq!(gphi, 0.0);
        }

        #[test]
        fn latitudinal_component_is_odd(r in 2.0e7f64..1.0e8, phi in 0.0f64..1.5) {
            let p = PlanetModel::uranus();
            let (gr_n, gphi_n) = gravity(&p, r, phi).unwrap();
            let (gr_s, gphi_s) = gravity(&p, r, -phi).unwrap();
            prop_assert_eq!(gphi_n, -gphi_s);
            prop_assert_eq!(gr_n, gr_s);
        }
    }
}
