//! Scenario files, synthetic data and result tables.
//!
//! A scenario directory looks like
//!
//! ```text
//! scenario.conf            horizon, days, tariff scalars, algorithm and network settings
//! tariff.csv               slot, pi_dr, pi_as            (one day, repeated)
//! users/<id>/user.conf     physical parameters of one household
//! users/<id>/traces.csv    slot, renewable_cap, t_out, inflexible, flex_ref[, flex_lo, flex_hi]
//! ```
//!
//! Trace files cover all days back to back. Optional keys and their
//! defaults: `ac.decay = exp(-1/(r_thermal c_thermal))`, `ac.t_init = ac.tau`,
//! `battery.b_init = 0`, `algo.trade_bound` = largest fuse limit, per-slot
//! `flex_lo = flex.lo` and `flex_hi = flex.hi`.

mod conf;
mod results;
mod scenario;
mod synth;

pub use results::{
    read_schedules_csv, write_comparison_csv, write_results, write_schedule_csv, ComparisonRow, DayResult, RunResults,
};
pub use scenario::{load_scenario, write_scenario, Scenario};
pub use synth::gen_synthetic;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {source}", file.display())]
    Io { file: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {msg}", file.display())]
    Syntax { file: PathBuf, line: usize, msg: String },
    #[error("{}: missing field `{field}`", file.display())]
    Missing { file: PathBuf, field: String },
    #[error("{}: field `{field}`: {msg}", file.display())]
    Invalid { file: PathBuf, field: String, msg: String },
    #[error("{}: column `{field}` has {got} rows, expected {want}", file.display())]
    Length {
        file: PathBuf,
        field: String,
        got: usize,
        want: usize,
    },
}

impl ScenarioError {
    pub(crate) fn io(file: &Path, source: std::io::Error) -> Self {
        ScenarioError::Io {
            file: file.to_path_buf(),
            source,
        }
    }

    pub(crate) fn invalid(file: &Path, field: &str, msg: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            file: file.to_path_buf(),
            field: field.to_string(),
            msg: msg.into(),
        }
    }

    /// File the error refers to.
    pub fn file(&self) -> &Path {
        match self {
            ScenarioError::Io { file, .. }
            | ScenarioError::Syntax { file, .. }
            | ScenarioError::Missing { file, .. }
            | ScenarioError::Invalid { file, .. }
            | ScenarioError::Length { file, .. } => file,
        }
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
