use chrono::{NaiveDate, NaiveDateTime};

use super::SimError;
use crate::geodesy::{enu_offset_m, offset_to_geodetic, GeodeticPoint};

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryKind {
    Static,
    /// Straight line from the origin along a fixed heading.
    Line {
        heading_deg: f64,
    },
    /// Counter-clockwise circle through the origin.
    Circle {
        radius_m: f64,
    },
    /// Polyline origin -> each waypoint in turn; the vehicle stops at the last one.
    Waypoints(Vec<GeodeticPoint>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub kind: TrajectoryKind,
    pub origin: GeodeticPoint,
    pub speed_kmh: f64,
    pub duration_epochs: usize,
    pub epoch_dt_s: f64,
    pub rng_seed: u64,
    /// UTC instant of epoch 0.
    pub start_time: NaiveDateTime,
}

impl TrajectoryConfig {
    pub fn new(
        kind: TrajectoryKind,
        origin: GeodeticPoint,
        speed_kmh: f64,
        duration_epochs: usize,
    ) -> Self {
        Self {
            kind,
            origin,
            speed_kmh,
            duration_epochs,
            epoch_dt_s: 1.0,
            rng_seed: 0,
            start_time: NaiveDate::from_ymd_opt(2024, 3, 23)
                .and_then(|d| d.and_hms_opt(12, 0, 0))
                .expect("valid constant date"),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.speed_kmh >= 0.0 && self.speed_kmh.is_finite()) {
            return bad("speed must be nonnegative");
        }
        if self.duration_epochs < 1 {
            return bad("duration must be at least one epoch");
        }
        if !(self.epoch_dt_s > 0.0 && self.epoch_dt_s.is_finite()) {
            return bad("epoch interval must be positive");
        }
        if !self.origin.is_valid() {
            return bad("origin out of range");
        }
        match &self.kind {
            TrajectoryKind::Circle { radius_m } if radius_m.is_nan() || *radius_m <= 0.0 => {
                bad("circle radius must be positive")
            }
            TrajectoryKind::Waypoints(w) if w.is_empty() => bad("waypoint list is empty"),
            TrajectoryKind::Waypoints(w) => {
                for p in w {
                    enu_offset_m(&self.origin, p)
                        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Ground truth at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub pos: GeodeticPoint,
    pub speed_kmh: f64,
    /// Direction of travel, degrees clockwise from north.
    pub course_deg: f64,
}

impl TrajectoryConfig {
    fn offset_at(&self, t_s: f64) -> (f64, f64, bool) {
        let speed = self.speed_kmh / 3.6;
        let s = speed * t_s;
        match &self.kind {
            TrajectoryKind::Static => (0.0, 0.0, false),
            TrajectoryKind::Line { heading_deg } => {
                let (sh, ch) = heading_deg.to_radians().sin_cos();
                (s * sh, s * ch, speed > 0.0)
            }
            TrajectoryKind::Circle { radius_m } => {
                // Center due east of the origin; start heading north.
                let theta = s / radius_m;
                (
                    radius_m * (1.0 - theta.cos()),
                    radius_m * theta.sin(),
                    speed > 0.0,
                )
            }
            TrajectoryKind::Waypoints(points) => {
                let mut prev = (0.0, 0.0);
                let mut left = s;
                for p in points {
                    let next = enu_offset_m(&self.origin, p).unwrap_or(prev);
                    let len = (next.0 - prev.0).hypot(next.1 - prev.1);
                    if left <= len && len > 0.0 {
                        let f = left / len;
                        return (
                            prev.0 + f * (next.0 - prev.0),
                            prev.1 + f * (next.1 - prev.1),
                            speed > 0.0,
                        );
                    }
                    left -= len;
                    prev = next;
                }
                (prev.0, prev.1, false)
            }
        }
    }

    pub fn truth_at(&self, epoch: usize) -> TruthState {
        let t = epoch as f64 * self.epoch_dt_s;
        let (e, n, moving) = self.offset_at(t);
        let pos = offset_to_geodetic(&self.origin, e, n);
        if !moving {
            return TruthState {
                pos,
                speed_kmh: 0.0,
                course_deg: 0.0,
            };
        }
        let dt = 1e-3 * self.epoch_dt_s;
        let (e2, n2, _) = self.offset_at(t + dt);
        let course = (e2 - e).atan2(n2 - n).to_degrees().rem_euclid(360.0);
        TruthState {
            pos,
            speed_kmh: self.speed_kmh,
            course_deg: if course >= 360.0 { 0.0 } else { course },
        }
    }

    pub fn time_at(&self, epoch: usize) -> NaiveDateTime {
        let micros = (epoch as f64 * self.epoch_dt_s * 1e6).round() as i64;
        self.start_time + chrono::Duration::microseconds(micros)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> GeodeticPoint {
        GeodeticPoint::new(31.95, 35.91, 800.0)
    }

    #[test]
    fn static_stays_put() {
        let cfg = TrajectoryConfig::new(TrajectoryKind::Static, origin(), 50.0, 10);
        let t = cfg.truth_at(9);
        assert_eq!(t.pos, origin());
        assert_eq!(t.speed_kmh, 0.0);
    }

    #[test]
    fn line_moves_along_heading() {
        let cfg = TrajectoryConfig::new(
            TrajectoryKind::Line { heading_deg: 90.0 },
            origin(),
            36.0,
            100,
        );
        let t = cfg.truth_at(10);
        let (e, n) = enu_offset_m(&origin(), &t.pos).unwrap();
        assert!((e - 100.0).abs() < 1e-6 && n.abs() < 1e-6);
        assert!((t.course_deg - 90.0).abs() < 1e-6);
        assert_eq!(t.speed_kmh, 36.0);
    }

    #[test]
    fn circle_returns_to_start() {
        let r = 100.0;
        let cfg =
            TrajectoryConfig::new(TrajectoryKind::Circle { radius_m: r }, origin(), 3.6, 1000);
        let lap = (std::f64::consts::TAU * r).round() as usize;
        let (e, n) = enu_offset_m(&origin(), &cfg.truth_at(lap).pos).unwrap();
        assert!(e.hypot(n) < 1.0);
        assert!(cfg.truth_at(0).course_deg < 1.0 || cfg.truth_at(0).course_deg > 359.0);
    }

    #[test]
    fn waypoints_stop_at_end() {
        let end = offset_to_geodetic(&origin(), 0.0, 50.0);
        let cfg = TrajectoryConfig::new(TrajectoryKind::Waypoints(vec![end]), origin(), 36.0, 100);
        let mid = cfg.truth_at(2);
        let (_, n) = enu_offset_m(&origin(), &mid.pos).unwrap();
        assert!((n - 20.0).abs() < 1e-6);
        let last = cfg.truth_at(99);
        assert_eq!(last.speed_kmh, 0.0);
        let (_, n) = enu_offset_m(&origin(), &last.pos).unwrap();
        assert!((n - 50.0).abs() < 1e-6);
    }

    #[test]
    fn validation() {
        let mut cfg = TrajectoryConfig::new(TrajectoryKind::Static, origin(), 0.0, 0);
        assert!(cfg.validate().is_err());
        cfg.duration_epochs = 1;
        assert!(cfg.validate().is_ok());
        cfg.speed_kmh = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn epoch_times() {
        let mut cfg = TrajectoryConfig::new(TrajectoryKind::Static, origin(), 0.0, 5);
        cfg.epoch_dt_s = 0.5;
        assert_eq!(
            cfg.time_at(3) - cfg.time_at(0),
            chrono::Duration::milliseconds(1500)
        );
    }
}
