//! WGS-84 geodetic/ECEF conversions and local tangent-plane offsets.
//!
//! Receiver and satellite positions live in ECEF; NMEA sentences and KML use
//! geodetic degrees. Accuracy statistics are expressed as east/north meters
//! about a reference point using the ellipsoid curvature radii.

use std::f64::consts::PI;

use thiserror::Error;

/// Semi-major axis, meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// Flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);
/// Semi-minor axis, meters.
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);

/// Largest per-coordinate separation (degrees) for which the tangent-plane
/// approximation is accepted.
pub const MAX_LOCAL_SPAN_DEG: f64 = 1.0;

const AXIS_TOLERANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeodesyError {
    #[error("point lies within {AXIS_TOLERANCE_M} m of the polar axis; longitude undefined")]
    NearSingularAxis(GeodeticPoint),
    #[error("points too far apart for a local offset ({dlat_deg:.4} deg, {dlon_deg:.4} deg)")]
    TooFarApart { dlat_deg: f64, dlon_deg: f64 },
    #[error("coordinate out of range: lat {lat_deg}, lon {lon_deg}")]
    OutOfRange { lat_deg: f64, lon_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeodeticPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
}

impl GeodeticPoint {
    pub fn new(lat_deg: f64, lon_deg: f64, alt_m: f64) -> Self {
        Self {
            lat_deg,
            lon_deg,
            alt_m,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lat_deg.is_finite()
            && self.lon_deg.is_finite()
            && self.alt_m.is_finite()
            && (-90.0..=90.0).contains(&self.lat_deg)
            && (-180.0..=180.0).contains(&self.lon_deg)
    }

    pub fn validate(&self) -> Result<(), GeodesyError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(GeodesyError::OutOfRange {
                lat_deg: self.lat_deg,
                lon_deg: self.lon_deg,
            })
        }
    }

    pub fn to_ecef(&self) -> EcefPoint {
        geodetic_to_ecef(self)
    }
}

/// Earth-centered Earth-fixed position, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EcefPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &EcefPoint) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn near_polar_axis(&self) -> bool {
        self.x.hypot(self.y) < AXIS_TOLERANCE_M
    }

    pub fn to_geodetic(&self) -> GeodeticPoint {
        ecef_to_geodetic(self)
    }
}

/// Prime-vertical radius of curvature N(φ).
pub fn prime_vertical_radius(lat_deg: f64) -> f64 {
    let s = lat_deg.to_radians().sin();
    WGS84_A / (1.0 - WGS84_E2 * s * s).sqrt()
}

/// Meridian radius of curvature M(φ).
pub fn meridian_radius(lat_deg: f64) -> f64 {
    let s = lat_deg.to_radians().sin();
    WGS84_A * (1.0 - WGS84_E2) / (1.0 - WGS84_E2 * s * s).powf(1.5)
}

pub fn geodetic_to_ecef(p: &GeodeticPoint) -> EcefPoint {
    let (sin_lat, cos_lat) = p.lat_deg.to_radians().sin_cos();
    let (sin_lon, cos_lon) = p.lon_deg.to_radians().sin_cos();
    let n = prime_vertical_radius(p.lat_deg);
    EcefPoint {
        x: (n + p.alt_m) * cos_lat * cos_lon,
        y: (n + p.alt_m) * cos_lat * sin_lon,
        z: (n * (1.0 - WGS84_E2) + p.alt_m) * sin_lat,
    }
}

/// Inverse transform. On the polar axis the longitude is reported as 0; use
/// [`ecef_to_geodetic_strict`] to have that case surfaced as an error.
pub fn ecef_to_geodetic(p: &EcefPoint) -> GeodeticPoint {
    let rho = p.x.hypot(p.y);
    let lon = if rho == 0.0 { 0.0 } else { p.y.atan2(p.x) };

    // Bowring's initial guess followed by fixed-point refinement of the
    // latitude; converges to machine precision in a handful of steps for
    // anything between the geoid and GNSS orbit.
    let mut lat = p.z.atan2(rho * (1.0 - WGS84_E2));
    for _ in 0..10 {
        let (s, c) = lat.sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * s * s).sqrt();
        let h = rho * c + p.z * s - WGS84_A * WGS84_A / n;
        let next = p.z.atan2(rho * (1.0 - WGS84_E2 * n / (n + h)));
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    let (s, c) = lat.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * s * s).sqrt();
    // Valid at every latitude, including the poles.
    let alt = rho * c + p.z * s - WGS84_A * WGS84_A / n;

    GeodeticPoint {
        lat_deg: lat.to_degrees(),
        lon_deg: lon.to_degrees(),
        alt_m: alt,
    }
}

pub fn ecef_to_geodetic_strict(p: &EcefPoint) -> Result<GeodeticPoint, GeodesyError> {
    let g = ecef_to_geodetic(p);
    if p.near_polar_axis() {
        Err(GeodesyError::NearSingularAxis(GeodeticPoint {
            lon_deg: 0.0,
            ..g
        }))
    } else {
        Ok(g)
    }
}

fn wrap_lon_delta(d: f64) -> f64 {
    let mut d = d % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    d
}

/// East/north offset in meters of `p` relative to `reference`, using the
/// curvature radii at the reference latitude.
pub fn enu_offset_m(
    reference: &GeodeticPoint,
    p: &GeodeticPoint,
) -> Result<(f64, f64), GeodesyError> {
    let dlat = p.lat_deg - reference.lat_deg;
    let dlon = wrap_lon_delta(p.lon_deg - reference.lon_deg);
    if dlat.abs() >= MAX_LOCAL_SPAN_DEG || dlon.abs() >= MAX_LOCAL_SPAN_DEG {
        return Err(GeodesyError::TooFarApart {
            dlat_deg: dlat,
            dlon_deg: dlon,
        });
    }
    let east = dlon
        * (PI / 180.0)
        * prime_vertical_radius(reference.lat_deg)
        * reference.lat_deg.to_radians().cos();
    let north = dlat * (PI / 180.0) * meridian_radius(reference.lat_deg);
    Ok((east, north))
}

/// Inverse of [`enu_offset_m`]: the point at the given east/north offset from
/// `reference`, at the reference altitude.
pub fn offset_to_geodetic(reference: &GeodeticPoint, east_m: f64, north_m: f64) -> GeodeticPoint {
    let dlat = north_m / meridian_radius(reference.lat_deg) * (180.0 / PI);
    let cos_lat = reference.lat_deg.to_radians().cos().max(1e-12);
    let dlon = east_m / (prime_vertical_radius(reference.lat_deg) * cos_lat) * (180.0 / PI);
    let mut lon = reference.lon_deg + dlon;
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    GeodeticPoint {
        lat_deg: (reference.lat_deg + dlat).clamp(-90.0, 90.0),
        lon_deg: lon,
        alt_m: reference.alt_m,
    }
}

/// Rotation taking a local east/north/up vector at `reference` into ECEF.
pub fn enu_to_ecef_vector(reference: &GeodeticPoint, east: f64, north: f64, up: f64) -> EcefPoint {
    let (sl, cl) = reference.lat_deg.to_radians().sin_cos();
    let (so, co) = reference.lon_deg.to_radians().sin_cos();
    EcefPoint {
        x: -so * east - sl * co * north + cl * co * up,
        y: co * east - sl * so * north + cl * so * up,
        z: cl * north + sl * up,
    }
}
