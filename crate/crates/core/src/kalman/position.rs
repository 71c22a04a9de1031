use nalgebra::{Matrix2, Vector2};

use super::KalmanError;
use crate::geodesy::{enu_offset_m, offset_to_geodetic, GeodeticPoint};
use crate::nmea::GprmcFix;
use crate::track::{Track, TrackSample};

/// Once a fix is this far from the local reference (degrees) the filter
/// re-centers on its current estimate.
const REANCHOR_DEG: f64 = 0.5;

/// `[east_m, north_m]` about a reference point, with covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionState {
    pub x: Vector2<f64>,
    pub p: Matrix2<f64>,
}

/// Random-walk filter on local east/north coordinates: Φ = H = I₂,
/// Q = q²·I₂ per epoch, R = r²·I₂. The first fix initializes the state with
/// covariance R.
#[derive(Debug, Clone)]
pub struct PositionFilter {
    reference: GeodeticPoint,
    q_var: f64,
    r_var: f64,
    state: Option<PositionState>,
}

impl PositionFilter {
    pub fn new(reference: GeodeticPoint, q_pos_m: f64, r_pos_m: f64) -> Self {
        Self {
            reference,
            q_var: q_pos_m * q_pos_m,
            r_var: r_pos_m * r_pos_m,
            state: None,
        }
    }

    pub fn reference(&self) -> &GeodeticPoint {
        &self.reference
    }

    pub fn state(&self) -> Option<&PositionState> {
        self.state.as_ref()
    }

    pub fn estimate(&self) -> Option<GeodeticPoint> {
        self.state
            .map(|s| offset_to_geodetic(&self.reference, s.x[0], s.x[1]))
    }

    fn reanchor(&mut self, near: &GeodeticPoint) {
        let far = (near.lat_deg - self.reference.lat_deg).abs() >= REANCHOR_DEG || {
            let d = (near.lon_deg - self.reference.lon_deg).rem_euclid(360.0);
            d.min(360.0 - d) >= REANCHOR_DEG
        };
        if !far {
            return;
        }
        let new_ref = match self.estimate() {
            Some(est) if enu_offset_m(&est, near).is_ok() => est,
            _ => {
                // Estimate too far behind the fix; restart from the fix.
                self.state = None;
                *near
            }
        };
        self.reference = GeodeticPoint {
            alt_m: self.reference.alt_m,
            ..new_ref
        };
        if let Some(s) = &mut self.state {
            s.x = Vector2::zeros();
        }
    }

    /// Process one coordinate pair and return the corrected position.
    pub fn step_point(&mut self, measured: &GeodeticPoint) -> GeodeticPoint {
        self.reanchor(measured);
        let (e, n) = enu_offset_m(&self.reference, measured)
            .expect("reference re-centered within the local span");
        let z = Vector2::new(e, n);
        let r = Matrix2::identity() * self.r_var;
        let next = match self.state {
            None => PositionState { x: z, p: r },
            Some(s) => {
                let p_prior = s.p + Matrix2::identity() * self.q_var;
                let s_mat = p_prior + r;
                let gain = p_prior * s_mat.try_inverse().unwrap_or_else(Matrix2::zeros);
                let x = s.x + gain * (z - s.x);
                let p = (Matrix2::identity() - gain) * p_prior;
                PositionState {
                    x,
                    p: (p + p.transpose()) * 0.5,
                }
            }
        };
        self.state = Some(next);
        offset_to_geodetic(&self.reference, next.x[0], next.x[1])
    }

    pub fn step(&mut self, fix: &GprmcFix) -> GeodeticPoint {
        self.step_point(&GeodeticPoint::new(
            fix.lat_deg,
            fix.lon_deg,
            self.reference.alt_m,
        ))
    }
}

pub fn run_position_filter<'a, I>(
    fixes: I,
    q_pos_m: f64,
    r_pos_m: f64,
    reference: &GeodeticPoint,
) -> Result<Track, KalmanError>
where
    I: IntoIterator<Item = &'a GprmcFix>,
{
    let mut filter = PositionFilter::new(*reference, q_pos_m, r_pos_m);
    let track: Track = fixes
        .into_iter()
        .enumerate()
        .map(|(i, fix)| TrackSample {
            epoch: i as u64,
            time: Some(fix.timestamp()),
            pos: filter.step(fix),
        })
        .collect();
    if track.is_empty() {
        return Err(KalmanError::EmptyInput);
    }
    Ok(track)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{NaiveDate, NaiveTime};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn fix(lat: f64, lon: f64) -> GprmcFix {
        GprmcFix {
            utc_time: NaiveTime::from_hms_opt(10, 0, 0).unwrap(),
            valid: true,
            lat_deg: lat,
            lon_deg: lon,
            speed_knots: 0.0,
            course_deg: 0.0,
            date: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            magnetic_variation_deg: None,
        }
    }

    fn reference() -> GeodeticPoint {
        GeodeticPoint::new(31.95, 35.91, 0.0)
    }

    #[test]
    fn constant_fixes_converge_monotonically() {
        let target = offset_to_geodetic(&reference(), 40.0, -25.0);
        let mut f = PositionFilter::new(reference(), 1.0, 10.0);
        // Seed the state somewhere else first.
        f.step_point(&reference());
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let est = f.step(&fix(target.lat_deg, target.lon_deg));
            let (e, n) = enu_offset_m(&target, &est).unwrap();
            let err = e.hypot(n);
            assert!(err <= last + 1e-12);
            last = err;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn exact_measurement_at_estimate_is_fixed_point() {
        let mut f = PositionFilter::new(reference(), 2.0, 15.0);
        let p = offset_to_geodetic(&reference(), 3.0, 4.0);
        let a = f.step_point(&p);
        let b = f.step_point(&a);
        let (e, n) = enu_offset_m(&a, &b).unwrap();
        assert!(e.abs() < 1e-9 && n.abs() < 1e-9);
    }

    #[test]
    fn negligible_process_noise_gives_running_mean() {
        // r = 1e6·q: process noise is negligible, so with P0 = R the gain at
        // step k is ≈ 1/k and the output is the running mean of all fixes.
        let q = 1.0;
        let offsets: Vec<(f64, f64)> = (0..50)
            .map(|i| (-30.0 + 1.7 * i as f64, 20.0 - 0.9 * (i % 7) as f64))
            .collect();
        let fixes: Vec<_> = offsets
            .iter()
            .map(|&(e, n)| {
                let p = offset_to_geodetic(&reference(), e, n);
                fix(p.lat_deg, p.lon_deg)
            })
            .collect();
        let track = run_position_filter(&fixes, q, 1e6 * q, &reference()).unwrap();
        let (mut se, mut sn) = (0.0, 0.0);
        for (k, (s, &(e, n))) in track.samples.iter().zip(&offsets).enumerate() {
            se += e;
            sn += n;
            let kf = (k + 1) as f64;
            let (fe, fn_) = enu_offset_m(&reference(), &s.pos).unwrap();
            assert!(
                (fe - se / kf).abs() < 1e-3 && (fn_ - sn / kf).abs() < 1e-3,
                "step {k}"
            );
        }
    }

    #[test]
    fn empty_input_rejected() {
        let none: Vec<GprmcFix> = Vec::new();
        assert_eq!(
            run_position_filter(&none, 1.0, 1.0, &reference()),
            Err(KalmanError::EmptyInput)
        );
    }

    #[test]
    fn steady_state_matches_riccati() {
        let (q, r, sigma): (f64, f64, f64) = (0.5, 15.0, 15.0);
        // Scalar steady-state Riccati oracle: prior variance m solves
        // m = q² + m r² / (m + r²), steady gain K = m / (m + r²).
        let (q2, r2) = (q * q, r * r);
        let m = (q2 + (q2 * q2 + 4.0 * q2 * r2).sqrt()) / 2.0;
        let gain = m / (m + r2);
        // Static truth, white noise of variance σ²: the estimate is an
        // exponential average with variance K σ² / (2 - K).
        let expected_sd = (gain * sigma * sigma / (2.0 - gain)).sqrt();

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut f = PositionFilter::new(reference(), q, r);
        let mut errs = Vec::new();
        for i in 0..40_000 {
            let p =
                offset_to_geodetic(&reference(), noise.sample(&mut rng), noise.sample(&mut rng));
            let est = f.step_point(&p);
            if i >= 2_000 {
                errs.push(enu_offset_m(&reference(), &est).unwrap());
            }
        }
        let sd = |sel: fn(&(f64, f64)) -> f64| {
            (errs.iter().map(|v| sel(v).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt()
        };
        let (se, sn) = (sd(|v| v.0), sd(|v| v.1));
        assert!(se < 6.0 && sn < 6.0, "{se} {sn}");
        assert!(
            (se / expected_sd - 1.0).abs() < 0.1,
            "{se} vs {expected_sd}"
        );
        assert!(
            (sn / expected_sd - 1.0).abs() < 0.1,
            "{sn} vs {expected_sd}"
        );
    }

    #[test]
    fn reanchors_on_long_drives() {
        let mut f = PositionFilter::new(reference(), 50.0, 5.0);
        let mut last = reference();
        for i in 0..400 {
            let p = GeodeticPoint::new(
                reference().lat_deg + i as f64 * 0.005,
                reference().lon_deg,
                0.0,
            );
            last = f.step_point(&p);
            let (_, n) = enu_offset_m(&p, &last).unwrap();
            assert!(n.abs() < 100.0);
        }
        assert!(last.lat_deg > reference().lat_deg + 1.5);
    }
}
