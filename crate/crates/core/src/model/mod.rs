//! Household model: parameters, state trajectories, cost terms and the
//! constraint checker.

mod cost;
mod dynamics;
mod feasibility;
mod types;

pub use cost::cost_breakdown;
pub use dynamics::{battery_trajectory, thermal_free_response, thermal_gain, thermal_trajectory};
pub use feasibility::{check_feasibility, check_market, max_trade_mismatch, ConstraintId, Violation, ViolationReport};
pub use types::{
    AcParams, BatteryParams, CostBreakdown, ExogenousSeries, FlexParams, Horizon, Schedule, Tariff, UserId, UserProfile,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standalone operation (no trading) or cooperative operation with P2P
/// trades.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Standalone,
    Cooperative,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("length mismatch for {what}: got {got}, expected {want}")]
    Dimension { what: String, got: usize, want: usize },
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("model is infeasible: {0}")]
    Infeasible(String),
}

impl ModelError {
    pub(crate) fn invalid(field: &str, reason: &str) -> Self {
        ModelError::Invalid {
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }
}
