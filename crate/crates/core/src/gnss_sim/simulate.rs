use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{
    least_squares_fix, true_pseudorange, LsqFix, PseudorangeEntry, PseudorangeEpoch, Satellite,
    SimError, TrajectoryConfig, TruthState, MIN_SATELLITES,
};
use crate::geodesy::{EcefPoint, GeodeticPoint};
use crate::nmea::{self, GprmcFix};
use crate::telemetry::{EngineStatus, TelemetryRecord};

const KNOTS_PER_KMH: f64 = 1.0 / 1.852;

/// Multipath: an additive bias applied to one randomly chosen satellite for a
/// burst of consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multipath {
    pub bias_m: f64,
    pub burst_len_epochs: usize,
    /// Chance per epoch that a burst starts when none is active.
    pub burst_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseModel {
    pub pr_sigma_m: f64,
    pub clock_offset0_m: f64,
    pub clock_walk_m: f64,
    pub multipath: Option<Multipath>,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn white(pr_sigma_m: f64) -> Self {
        Self {
            pr_sigma_m,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.pr_sigma_m)
            || !nonneg(self.clock_walk_m)
            || !self.clock_offset0_m.is_finite()
        {
            return Err(SimError::InvalidConfig(
                "noise sigmas must be finite and nonnegative".into(),
            ));
        }
        if let Some(m) = self.multipath {
            if !(0.0..=1.0).contains(&m.burst_prob) || !m.bias_m.is_finite() {
                return Err(SimError::InvalidConfig(
                    "multipath burst probability must be in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Pseudorange sigma giving an expected horizontal 2DRMS of `target_m` for a
/// geometry with the given HDOP (2DRMS = 2 · HDOP · σ).
pub fn pr_sigma_for_2drms(target_m: f64, hdop: f64) -> f64 {
    target_m / (2.0 * hdop)
}

/// Everything produced for one epoch of a simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEpoch {
    pub epoch: u64,
    pub time: NaiveDateTime,
    pub truth: TruthState,
    pub truth_ecef: EcefPoint,
    pub clock_bias_m: f64,
    pub pseudoranges: PseudorangeEpoch,
    /// Receiver's own single-epoch solution from the noisy pseudoranges.
    pub receiver_fix: LsqFix,
    pub receiver_pos: GeodeticPoint,
    pub fix: GprmcFix,
    pub nmea: String,
    pub status: EngineStatus,
}

impl SimEpoch {
    pub fn record(&self, vehicle_id: &str) -> TelemetryRecord {
        TelemetryRecord {
            vehicle_id: vehicle_id.to_string(),
            fix: self.fix.clone(),
            status: self.status,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Burst {
    sat_index: usize,
    remaining: usize,
}

/// Epoch-by-epoch generator for one run. Owns its RNG; identical inputs give
/// bit-identical output.
#[derive(Debug, Clone)]
pub struct Simulator {
    traj: TrajectoryConfig,
    sats: Vec<Satellite>,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    next_epoch: usize,
    clock_bias_m: f64,
    burst: Option<Burst>,
    last_fix: EcefPoint,
}

impl Simulator {
    pub fn new(
        traj: TrajectoryConfig,
        sats: Vec<Satellite>,
        noise: NoiseModel,
    ) -> Result<Self, SimError> {
        traj.validate()?;
        noise.validate()?;
        if sats.len() < MIN_SATELLITES {
            return Err(SimError::TooFewSatellites(sats.len()));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(traj.rng_seed),
            clock_bias_m: noise.clock_offset0_m,
            traj,
            sats,
            noise,
            next_epoch: 0,
            burst: None,
            // Cold start from the Earth's center, like a receiver with no almanac.
            last_fix: EcefPoint::default(),
        })
    }

    pub fn trajectory(&self) -> &TrajectoryConfig {
        &self.traj
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        sigma * z
    }

    fn engine_status(&mut self, truth: &TruthState, epoch: usize) -> EngineStatus {
        let t = epoch as f64 * self.traj.epoch_dt_s;
        let v = truth.speed_kmh;
        let jitter = Normal::new(0.0, 1.0).expect("unit normal");
        let raw = EngineStatus {
            rpm: (780.0 + 32.0 * v + 12.0 * jitter.sample(&mut self.rng)).clamp(0.0, 16_383.75),
            // Warm-up from ambient towards thermostat temperature.
            coolant_c: (90.0 - 65.0 * (-t / 300.0).exp()).clamp(-40.0, 215.0),
            speed_kmh: v.clamp(0.0, 255.0),
            throttle_pct: (14.0 + 0.45 * v + 0.8 * jitter.sample(&mut self.rng)).clamp(0.0, 100.0),
        };
        raw.quantized()
    }

    fn step(&mut self) -> Result<SimEpoch, SimError> {
        let k = self.next_epoch;
        self.next_epoch += 1;

        let truth = self.traj.truth_at(k);
        let truth_ecef = truth.pos.to_ecef();
        let time = self.traj.time_at(k);
        if k > 0 {
            let walk = self.gauss(self.noise.clock_walk_m);
            self.clock_bias_m += walk;
        }

        if let Some(mp) = self.noise.multipath {
            if self.burst.is_none() && mp.burst_len_epochs > 0 && self.rng.gen_bool(mp.burst_prob) {
                self.burst = Some(Burst {
                    sat_index: self.rng.gen_range(0..self.sats.len()),
                    remaining: mp.burst_len_epochs,
                });
            }
        }
        let burst_sat = self.burst.map(|b| b.sat_index);

        let mut entries = Vec::with_capacity(self.sats.len());
        for i in 0..self.sats.len() {
            let sat = self.sats[i];
            let mut pr = true_pseudorange(&sat.pos, &truth_ecef, self.clock_bias_m);
            pr += self.gauss(self.noise.pr_sigma_m);
            if burst_sat == Some(i) {
                pr += self.noise.multipath.map_or(0.0, |m| m.bias_m);
            }
            entries.push(PseudorangeEntry {
                satellite_id: sat.id,
                satellite_pos: sat.pos,
                pseudorange_m: pr,
            });
        }
        if let Some(b) = &mut self.burst {
            b.remaining -= 1;
            if b.remaining == 0 {
                self.burst = None;
            }
        }

        let pseudoranges = PseudorangeEpoch {
            epoch: k as u64,
            t_s: k as f64 * self.traj.epoch_dt_s,
            entries,
        };
        let receiver_fix = least_squares_fix(&pseudoranges, &self.last_fix)?;
        self.last_fix = receiver_fix.pos;
        let receiver_pos = receiver_fix.pos.to_geodetic();

        let fix = GprmcFix {
            utc_time: time.time(),
            valid: true,
            lat_deg: receiver_pos.lat_deg,
            lon_deg: receiver_pos.lon_deg,
            speed_knots: truth.speed_kmh * KNOTS_PER_KMH,
            course_deg: truth.course_deg,
            date: time.date(),
            magnetic_variation_deg: None,
        };
        let nmea =
            nmea::serialize_gprmc(&fix).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let status = self.engine_status(&truth, k);

        Ok(SimEpoch {
            epoch: k as u64,
            time,
            truth,
            truth_ecef,
            clock_bias_m: self.clock_bias_m,
            pseudoranges,
            receiver_fix,
            receiver_pos,
            fix,
            nmea,
            status,
        })
    }
}

impl Iterator for Simulator {
    type Item = Result<SimEpoch, SimError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_epoch >= self.traj.duration_epochs {
            return None;
        }
        Some(self.step())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.traj.duration_epochs.saturating_sub(self.next_epoch);
        (left, Some(left))
    }
}
