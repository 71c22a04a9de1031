use nalgebra::{Dyn, OMatrix, OVector, U4};

use super::{normal_inverse, PseudorangeEpoch, SimError, MIN_SATELLITES};
use crate::geodesy::EcefPoint;

const MAX_ITERATIONS: usize = 20;
const STEP_TOLERANCE_M: f64 = 1e-4;

/// Single-epoch position and clock solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsqFix {
    pub pos: EcefPoint,
    pub clock_bias_m: f64,
    pub iterations: usize,
}

/// Gauss–Newton on the pseudorange residuals `PR - (|S - G| + b)`, starting
/// from `guess` with zero clock bias. Stops once the position step is below
/// 0.1 mm.
pub fn least_squares_fix(epoch: &PseudorangeEpoch, guess: &EcefPoint) -> Result<LsqFix, SimError> {
    let n = epoch.entries.len();
    if n < MIN_SATELLITES {
        return Err(SimError::TooFewSatellites(n));
    }
    let mut g = [guess.x, guess.y, guess.z];
    let mut b = 0.0;
    let mut h = OMatrix::<f64, Dyn, U4>::zeros(n);
    let mut resid = OVector::<f64, Dyn>::zeros(n);

    for iter in 1..=MAX_ITERATIONS {
        for (i, e) in epoch.entries.iter().enumerate() {
            let s = e.satellite_pos;
            let d = [s.x - g[0], s.y - g[1], s.z - g[2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r < 1.0 {
                return Err(SimError::SingularGeometry);
            }
            h[(i, 0)] = -d[0] / r;
            h[(i, 1)] = -d[1] / r;
            h[(i, 2)] = -d[2] / r;
            h[(i, 3)] = 1.0;
            resid[i] = e.pseudorange_m - (r + b);
        }
        let inv = normal_inverse(&h).ok_or(SimError::SingularGeometry)?;
        let step = inv * (h.transpose() * &resid);
        g[0] += step[0];
        g[1] += step[1];
        g[2] += step[2];
        b += step[3];
        let moved = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
        if !moved.is_finite() {
            return Err(SimError::NoConvergence(iter));
        }
        if moved < STEP_TOLERANCE_M {
            return Ok(LsqFix {
                pos: EcefPoint::new(g[0], g[1], g[2]),
                clock_bias_m: b,
                iterations: iter,
            });
        }
    }
    Err(SimError::NoConvergence(MAX_ITERATIONS))
}
