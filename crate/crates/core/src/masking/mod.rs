//! Masking: sub-optimal responses that hide the radar's utility from the
//! adversary's revealed-preference test.

pub mod deterministic;
pub mod projection;
pub mod stochastic;

use serde::{Deserialize, Serialize};

use crate::dataset::validate_probes;
use crate::error::Result;
use crate::radar::naive_response;
use crate::utility::{UtilityFamily, UtilityModel};

pub use deterministic::{epsilon_max, mask_deterministic, mask_deterministic_from, DetMaskConfig};
pub use projection::{budget_residual, project_budget};
pub use stochastic::{estimate_cost, mask_stochastic, spsa_gradient, CostSign, SpsaConfig, SpsaRecord, SpsaTrace, StepSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingResult {
    pub masked: Vec<Vec<f64>>,
    pub naive: Vec<Vec<f64>>,
    /// `sum_k |masked_k - naive_k|^2`
    pub perturbation: f64,
    /// `sum_k u(naive_k) - u(masked_k)`
    pub utility_loss: f64,
    /// Pass-margin of the masked responses, gradients anchored at the naive ones.
    pub achieved_margin: f64,
    pub feasible: bool,
    /// Best objective found by each start.
    pub diagnostics: Vec<f64>,
}

/// Naive responses for every probe.
pub fn naive_sequence(u: &UtilityModel, probes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    validate_probes(probes)?;
    probes.iter().map(|a| naive_response(u, a)).collect()
}

pub(crate) fn perturbation(masked: &[Vec<f64>], naive: &[Vec<f64>]) -> f64 {
    masked
        .iter()
        .zip(naive)
        .map(|(b, n)| b.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum()
}

pub(crate) fn utility_loss(u: &UtilityModel, masked: &[Vec<f64>], naive: &[Vec<f64>]) -> f64 {
    masked
        .iter()
        .zip(naive)
        .map(|(b, n)| u.eval_extended(n) - u.eval_extended(b))
        .sum()
}

/// Header of the masking result table.
pub const RESULT_HEADER: &str = "epsilon,utility_family,perturbation_l2,utility_loss,achieved_margin,feasible";

/// One result row (no trailing newline) in [`RESULT_HEADER`] order.
pub fn result_row(epsilon: f64, family: UtilityFamily, r: &MaskingResult) -> String {
    format!(
        "{epsilon},{family},{},{},{},{}",
        r.perturbation, r.utility_loss, r.achieved_margin, r.feasible
    )
}
