//! Day-ahead microgrid scheduling with an embedded battery-degradation
//! network.
//!
//! Time runs over intervals `t = 0..H` of `dt` hours. Stored energy `E_t` is
//! the value at the end of interval `t`; the value before the first interval
//! is the unit's initial energy and the last one must return to it.

mod build;
mod report;
mod scenario;

use thiserror::Error;

pub use build::{
    assemble_objective, attach_degradation, build_base_mds, feature_box, BessVars,
    DegradationAttachment, GeneratorVars, MdsOptions, MdsVars,
};
pub use report::{
    audit_schedule, realized_features, verify_real_degradation, BessState, GeneratorState,
    IntervalSchedule, NnbdModel, ScheduleAudit, ScheduleReport,
};
pub use scenario::{
    load_scenario, params_to_json, parse_params, parse_series_csv, save_scenario, series_to_csv,
    BessParams, DeviceParams, GeneratorParams, IntervalData, MicrogridScenario, PARAMS_FORMAT,
    SERIES_HEADER,
};

use crate::encoding::EncodingError;
use crate::milp::SolverError;

#[derive(Debug, Error)]
pub enum MdsError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}
