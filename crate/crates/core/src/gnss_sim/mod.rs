//! Synthetic GNSS measurements for desk-scale verification.
//!
//! A run pairs a ground-truth trajectory with a static satellite
//! constellation. Each epoch produces exact pseudoranges corrupted by white
//! noise, a random-walk receiver clock and optional multipath bursts, plus the
//! `$GPRMC` line a receiver would emit from a single-epoch least-squares fix
//! of those noisy ranges.

mod constellation;
mod lsq;
mod simulate;
mod trajectory;

use nalgebra::{Dyn, Matrix4, OMatrix, U4};
use thiserror::Error;

use crate::geodesy::EcefPoint;

pub use constellation::{
    build_constellation, dops, elevation_deg, Constellation, Dops, Satellite, MAX_GDOP,
    MIN_ELEVATION_DEG,
};
pub use lsq::{least_squares_fix, LsqFix};
pub use simulate::{pr_sigma_for_2drms, Multipath, NoiseModel, SimEpoch, Simulator};
pub use trajectory::{TrajectoryConfig, TrajectoryKind, TruthState};

/// Fewest satellites that fix position and clock.
pub const MIN_SATELLITES: usize = 4;

/// Nominal GPS orbit radius, meters.
pub const GPS_ORBIT_RADIUS_M: f64 = 26_560_000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("need at least {MIN_SATELLITES} satellites, got {0}")]
    TooFewSatellites(usize),
    #[error("could not build a constellation with GDOP < {max_gdop} after {attempts} attempts")]
    CannotSatisfyGeometry { attempts: usize, max_gdop: f64 },
    #[error("satellite geometry is singular")]
    SingularGeometry,
    #[error("least squares did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One measured pseudorange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudorangeEntry {
    pub satellite_id: u32,
    pub satellite_pos: EcefPoint,
    pub pseudorange_m: f64,
}

/// All pseudoranges observed at one epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudorangeEpoch {
    pub epoch: u64,
    pub t_s: f64,
    pub entries: Vec<PseudorangeEntry>,
}

impl PseudorangeEpoch {
    pub fn is_usable(&self) -> bool {
        self.entries.len() >= MIN_SATELLITES
    }

    /// Copy with `offset_m` added to every pseudorange.
    pub fn shifted(&self, offset_m: f64) -> Self {
        let mut e = self.clone();
        for entry in &mut e.entries {
            entry.pseudorange_m += offset_m;
        }
        e
    }
}

/// Smallest singular-value ratio of a geometry matrix treated as full rank.
const RANK_TOLERANCE: f64 = 1e-9;

/// `(HᵀH)⁻¹` for an n×4 geometry matrix, or `None` when `H` is rank deficient.
pub(crate) fn normal_inverse(h: &OMatrix<f64, Dyn, U4>) -> Option<Matrix4<f64>> {
    let sv = h.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if max.is_nan() || max <= 0.0 || min / max < RANK_TOLERANCE {
        return None;
    }
    (h.transpose() * h).try_inverse()
}

/// Geometric range plus receiver clock offset (both in meters).
pub fn true_pseudorange(sat: &EcefPoint, rec: &EcefPoint, clock_bias_m: f64) -> f64 {
    sat.distance(rec) + clock_bias_m
}
