use serde::{Deserialize, Serialize};

/// Modeled forces below this are too small to form a ratio.
const FORCE_FLOOR: f64 = 1e-9;

/// First-order fading-memory estimates of the true/modeled lift and drag ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingFilter {
    pub rho_l: f64,
    pub rho_d: f64,
    pub chi: f64,
}

impl FadingFilter {
    pub fn new(chi: f64) -> Self {
        Self { rho_l: 1.0, rho_d: 1.0, chi }
    }

    /// Folds in one measurement. Returns `false` and leaves the estimates
    /// alone when either modeled force is below the numeric floor.
    pub fn update(&mut self, lift: f64, drag: f64, lift_model: f64, drag_model: f64) -> bool {
        if !(lift_model > FORCE_FLOOR && drag_model > FORCE_FLOOR) {
            return false;
        }
        let gain = 1.0 - self.chi;
        self.rho_l += gain * (lift / lift_model - self.rho_l);
        self.rho_d += gain * (drag / drag_model - self.rho_d);
        true
    }
}
