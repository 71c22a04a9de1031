use nalgebra::{Dyn, OMatrix, U4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SimError, GPS_ORBIT_RADIUS_M, MIN_SATELLITES};
use crate::geodesy::{enu_to_ecef_vector, EcefPoint, GeodeticPoint};

pub const MIN_ELEVATION_DEG: f64 = 15.0;
pub const MAX_GDOP: f64 = 10.0;
const MAX_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Satellite {
    pub id: u32,
    pub pos: EcefPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub satellites: Vec<Satellite>,
    /// Dilution of precision at the origin the constellation was built for.
    pub dops: Dops,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dops {
    pub gdop: f64,
    pub pdop: f64,
    pub hdop: f64,
    pub vdop: f64,
    pub tdop: f64,
}

/// Elevation of `sat` above the local horizon at `origin`, degrees.
pub fn elevation_deg(origin: &GeodeticPoint, sat: &EcefPoint) -> f64 {
    let o = origin.to_ecef();
    let d = [sat.x - o.x, sat.y - o.y, sat.z - o.z];
    let up = enu_to_ecef_vector(origin, 0.0, 0.0, 1.0);
    let range = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    ((d[0] * up.x + d[1] * up.y + d[2] * up.z) / range)
        .asin()
        .to_degrees()
}

/// DOP values from the receiver-to-satellite geometry at `origin`, with the
/// position block rotated into local east/north/up.
pub fn dops(origin: &GeodeticPoint, sats: &[EcefPoint]) -> Result<Dops, SimError> {
    if sats.len() < MIN_SATELLITES {
        return Err(SimError::TooFewSatellites(sats.len()));
    }
    let o = origin.to_ecef();
    let axes = [
        enu_to_ecef_vector(origin, 1.0, 0.0, 0.0),
        enu_to_ecef_vector(origin, 0.0, 1.0, 0.0),
        enu_to_ecef_vector(origin, 0.0, 0.0, 1.0),
    ];
    let mut h = OMatrix::<f64, Dyn, U4>::zeros(sats.len());
    for (i, s) in sats.iter().enumerate() {
        let r = s.distance(&o);
        let los = [(s.x - o.x) / r, (s.y - o.y) / r, (s.z - o.z) / r];
        for (j, a) in axes.iter().enumerate() {
            h[(i, j)] = -(los[0] * a.x + los[1] * a.y + los[2] * a.z);
        }
        h[(i, 3)] = 1.0;
    }
    let cov = super::normal_inverse(&h).ok_or(SimError::SingularGeometry)?;
    let d = |i: usize| cov[(i, i)];
    if (0..4).any(|i| !d(i).is_finite() || d(i) <= 0.0) {
        return Err(SimError::SingularGeometry);
    }
    Ok(Dops {
        gdop: (d(0) + d(1) + d(2) + d(3)).sqrt(),
        pdop: (d(0) + d(1) + d(2)).sqrt(),
        hdop: (d(0) + d(1)).sqrt(),
        vdop: d(2).sqrt(),
        tdop: d(3).sqrt(),
    })
}

/// Place `n` satellites on the GPS orbit sphere, each at least
/// [`MIN_ELEVATION_DEG`] above the horizon of `origin`, retrying until the
/// geometry gives GDOP below [`MAX_GDOP`].
pub fn build_constellation(
    n: usize,
    origin: &GeodeticPoint,
    seed: u64,
) -> Result<Constellation, SimError> {
    if n < MIN_SATELLITES {
        return Err(SimError::TooFewSatellites(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = origin.to_ecef();
    let sin_min = MIN_ELEVATION_DEG.to_radians().sin();

    for _ in 0..MAX_ATTEMPTS {
        let satellites: Vec<Satellite> = (0..n)
            .map(|i| {
                let az = rng.gen_range(0.0..std::f64::consts::TAU);
                // Uniform in sin(elevation) spreads satellites evenly over the sky cap.
                let el = rng.gen_range(sin_min..1.0f64).asin();
                let (se, ce) = el.sin_cos();
                let u = enu_to_ecef_vector(origin, ce * az.sin(), ce * az.cos(), se);
                // Solve |o + t u| = R for the positive root t.
                let b = o.x * u.x + o.y * u.y + o.z * u.z;
                let c = o.x * o.x + o.y * o.y + o.z * o.z - GPS_ORBIT_RADIUS_M.powi(2);
                let t = -b + (b * b - c).sqrt();
                Satellite {
                    id: i as u32 + 1,
                    pos: EcefPoint::new(o.x + t * u.x, o.y + t * u.y, o.z + t * u.z),
                }
            })
            .collect();
        let positions: Vec<EcefPoint> = satellites.iter().map(|s| s.pos).collect();
        match dops(origin, &positions) {
            Ok(d) if d.gdop < MAX_GDOP => {
                return Ok(Constellation {
                    satellites,
                    dops: d,
                })
            }
            _ => continue,
        }
    }
    Err(SimError::CannotSatisfyGeometry {
        attempts: MAX_ATTEMPTS,
        max_gdop: MAX_GDOP,
    })
}
