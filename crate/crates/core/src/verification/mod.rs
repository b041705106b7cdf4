//! Executable statements of the well-posedness properties, evaluated on
//! discrete trajectories.

mod entropy;
mod negative;
mod properties;
mod scenarios;
mod transport;

pub use entropy::{entropy_residual, EntropyOptions};
pub use negative::{negative_controls, anti_diffusive_trajectory};
pub use properties::{
    check_comparison, check_contraction, check_one_phase, check_stability, comparison_margins,
    contraction_margins, energy_stability, one_phase_margins, stability_margins, EnergyStability,
};
pub use scenarios::{
    comparison_pack, congestion_free_scenario, compressive_scenario, crowd_inflow_scenario, ScenarioPair,
};
pub use transport::{
    check_congestion_free, congestion_margins, congestion_refinement, transport_oracle, CongestionOptions,
    RefinementStudy,
};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::scalar::Real;
use serde::Serialize;
use std::collections::BTreeMap;

/// Default checker tolerance (solver limited).
pub const TOL_C: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub scenario: String,
    /// Worst signed margin; the report passes iff it is `>= -tolerance`.
    pub worst_margin: f64,
    pub tolerance: f64,
    /// Margin after each time step (or each perturbation size).
    pub margins: Vec<f64>,
    pub passed: bool,
    /// Set on negative controls, which are expected to fail.
    pub expected_fail: bool,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

impl PropertyReport {
    pub fn from_margins(property: &str, scenario: &str, margins: Vec<f64>, tolerance: f64) -> Self {
        // a NaN margin poisons the verdict
        let worst = margins
            .iter()
            .copied()
            .fold(f64::INFINITY, |a, m| if a.is_nan() || m.is_nan() { f64::NAN } else { a.min(m) });
        let worst = if margins.is_empty() { 0.0 } else { worst };
        Self {
            property: property.into(),
            scenario: scenario.into(),
            worst_margin: worst,
            tolerance,
            passed: worst >= -tolerance,
            margins,
            expected_fail: false,
            details: BTreeMap::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }

    pub fn expect_fail(mut self) -> Self {
        self.expected_fail = true;
        self
    }

    /// Verdict counted by suites: negative controls count when they fail.
    pub fn as_expected(&self) -> bool {
        self.passed != self.expected_fail
    }
}

/// Both trajectories must live on the same grid, drift and time steps.
pub(crate) fn ensure_comparable<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>) -> Result<()> {
    if !a.grid().same_layout(b.grid()) {
        return Err(Error::InvalidComparison("trajectories live on different grids".into()));
    }
    if a.velocity().face_values() != b.velocity().face_values() {
        return Err(Error::InvalidComparison("trajectories use different drifts".into()));
    }
    if a.tau() != b.tau() || a.n_steps() != b.n_steps() {
        return Err(Error::InvalidComparison("trajectories use different time steps".into()));
    }
    Ok(())
}
