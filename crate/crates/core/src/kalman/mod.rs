//! Kalman correction of receiver positions.
//!
//! Two modes:
//!
//! * pseudorange mode: state `[Gx, Gy, Gz, b_u]` in ECEF meters, identity
//!   transition, measurement rows re-linearized about the predicted state at
//!   every epoch;
//! * position mode: a 2-state random walk in local east/north meters driven by
//!   the coordinates a `$GPRMC` fix carries, for stations that never see raw
//!   pseudoranges.

mod position;
mod pseudorange;

use thiserror::Error;

pub use position::{run_position_filter, PositionFilter, PositionState};
pub use pseudorange::{
    measurement_row, predict, run_pseudorange_filter, update, EcefState, FilterConfig,
    FilteredEpoch, PseudorangeFilter, PseudorangeRun,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KalmanError {
    #[error("satellite within 1 m of the receiver estimate; line of sight undefined")]
    DegenerateRange,
    #[error("innovation covariance is singular")]
    SingularInnovationCovariance,
    #[error("epoch carries no satellite measurements")]
    EmptyEpoch,
    #[error("filter initialization failed: {0}")]
    InitializationFailed(String),
    #[error("no input fixes")]
    EmptyInput,
}
