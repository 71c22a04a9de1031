//! Horizontal accuracy statistics: per-axis spread in meters and 2DRMS.

use std::fmt;

use thiserror::Error;

use crate::geodesy::{enu_offset_m, GeodesyError, GeodeticPoint};
use crate::track::Track;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccuracyError {
    #[error("tracks differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

/// What deviations are measured against.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// The track's own mean position (scatter).
    Mean,
    /// An epoch-aligned ground-truth track (error).
    Truth(&'a Track),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Mean,
    Truth,
}

impl ReferenceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mean => "mean",
            Self::Truth => "truth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReport {
    pub sigma_east_m: f64,
    pub sigma_north_m: f64,
    pub two_drms_m: f64,
    pub n_points: usize,
    pub reference: ReferenceKind,
}

impl AccuracyReport {
    pub const CSV_HEADER: &'static str =
        "label,reference,n_points,sigma_east_m,sigma_north_m,two_drms_m";

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{},{},{:.4},{:.4},{:.4}",
            self.reference.as_str(),
            self.n_points,
            self.sigma_east_m,
            self.sigma_north_m,
            self.two_drms_m
        )
    }
}

impl fmt::Display for AccuracyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} ({}-referenced): sigma_east={:.2} m, sigma_north={:.2} m, 2DRMS={:.2} m",
            self.n_points,
            self.reference.as_str(),
            self.sigma_east_m,
            self.sigma_north_m,
            self.two_drms_m
        )
    }
}

/// Twice the root-sum-square of the two horizontal standard deviations.
pub fn two_drms(sigma_east_m: f64, sigma_north_m: f64) -> f64 {
    2.0 * (sigma_east_m * sigma_east_m + sigma_north_m * sigma_north_m).sqrt()
}

fn mean_point(track: &Track) -> GeodeticPoint {
    let n = track.len() as f64;
    // Average longitudes relative to the first point so the antimeridian
    // does not split the cloud.
    let lon0 = track.samples[0].pos.lon_deg;
    let (mut lat, mut dlon, mut alt) = (0.0, 0.0, 0.0);
    for p in track.positions() {
        lat += p.lat_deg;
        let mut d = p.lon_deg - lon0;
        if d > 180.0 {
            d -= 360.0;
        } else if d < -180.0 {
            d += 360.0;
        }
        dlon += d;
        alt += p.alt_m;
    }
    let mut lon = lon0 + dlon / n;
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    GeodeticPoint::new(lat / n, lon, alt / n)
}

/// Per-axis deviation spread in meters, `sqrt(Σd² / (n - 1))`. Against the
/// mean this is the sample standard deviation.
pub fn axis_sigmas(track: &Track, reference: Reference<'_>) -> Result<(f64, f64), AccuracyError> {
    let n = track.len();
    if n < 2 {
        return Err(AccuracyError::TooFewPoints(n));
    }
    let (mut see, mut snn) = (0.0, 0.0);
    match reference {
        Reference::Mean => {
            let m = mean_point(track);
            let offsets = track
                .positions()
                .map(|p| enu_offset_m(&m, p))
                .collect::<Result<Vec<_>, _>>()?;
            // Center on the metric mean as well, so the result is the sample
            // standard deviation regardless of degree-to-meter nonlinearity.
            let me = offsets.iter().map(|o| o.0).sum::<f64>() / n as f64;
            let mn = offsets.iter().map(|o| o.1).sum::<f64>() / n as f64;
            for (e, nn) in offsets {
                see += (e - me).powi(2);
                snn += (nn - mn).powi(2);
            }
        }
        Reference::Truth(truth) => {
            if truth.len() != n {
                return Err(AccuracyError::LengthMismatch(n, truth.len()));
            }
            for (p, t) in track.positions().zip(truth.positions()) {
                let (e, nn) = enu_offset_m(t, p)?;
                see += e * e;
                snn += nn * nn;
            }
        }
    }
    let denom = (n - 1) as f64;
    Ok(((see / denom).sqrt(), (snn / denom).sqrt()))
}

pub fn report(track: &Track, reference: Reference<'_>) -> Result<AccuracyReport, AccuracyError> {
    let (se, sn) = axis_sigmas(track, reference)?;
    Ok(AccuracyReport {
        sigma_east_m: se,
        sigma_north_m: sn,
        two_drms_m: two_drms(se, sn),
        n_points: track.len(),
        reference: match reference {
            Reference::Mean => ReferenceKind::Mean,
            Reference::Truth(_) => ReferenceKind::Truth,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub raw: AccuracyReport,
    pub filtered: AccuracyReport,
    /// raw 2DRMS / filtered 2DRMS.
    pub improvement_ratio: f64,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "raw:      {}", self.raw)?;
        writeln!(f, "filtered: {}", self.filtered)?;
        write!(f, "improvement ratio: {:.3}", self.improvement_ratio)
    }
}

/// Side-by-side reports for raw and filtered tracks. Mean-referenced unless a
/// truth track is supplied.
pub fn compare(
    raw: &Track,
    filtered: &Track,
    truth: Option<&Track>,
) -> Result<Comparison, AccuracyError> {
    if raw.len() != filtered.len() {
        return Err(AccuracyError::LengthMismatch(raw.len(), filtered.len()));
    }
    let reference = truth.map_or(Reference::Mean, Reference::Truth);
    let raw = report(raw, reference)?;
    let filtered = report(filtered, reference)?;
    Ok(Comparison {
        raw,
        filtered,
        improvement_ratio: raw.two_drms_m / filtered.two_drms_m,
    })
}
