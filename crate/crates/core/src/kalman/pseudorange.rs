use log::debug;
use nalgebra::{DMatrix, DVector, Matrix4, RowVector4, Vector4};

use super::KalmanError;
use crate::geodesy::{EcefPoint, GeodeticPoint};
use crate::gnss_sim::{least_squares_fix, PseudorangeEpoch, MIN_SATELLITES};
use crate::track::{Track, TrackSample};

/// Filter state `[Gx, Gy, Gz, b_u]` (meters) and its covariance (m²).
#[derive(Debug, Clone, PartialEq)]
pub struct EcefState {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
}

impl EcefState {
    pub fn new(x: Vector4<f64>, p: Matrix4<f64>) -> Self {
        Self { x, p }
    }

    pub fn position(&self) -> EcefPoint {
        EcefPoint::new(self.x[0], self.x[1], self.x[2])
    }

    pub fn clock_bias_m(&self) -> f64 {
        self.x[3]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Process noise added per epoch.
    pub q: Matrix4<f64>,
    /// Variance of each pseudorange measurement, m².
    pub r_per_sat: f64,
    /// Initial state; taken from a least-squares fix of the first epoch when unset.
    pub x0: Option<Vector4<f64>>,
    pub p0: Matrix4<f64>,
}

impl FilterConfig {
    pub fn with_process_noise(mut self, q_pos_m: f64, q_clk_m: f64) -> Self {
        let (p, c) = (q_pos_m * q_pos_m, q_clk_m * q_clk_m);
        self.q = Matrix4::from_diagonal(&Vector4::new(p, p, p, c));
        self
    }

    pub fn with_measurement_sigma(mut self, sigma_m: f64) -> Self {
        self.r_per_sat = sigma_m * sigma_m;
        self
    }
}

impl Default for FilterConfig {
    /// q_pos = 2 m and q_clk = 5 m per epoch, σ_pr = 10 m,
    /// P0 = diag(100², 100², 100², 1000²).
    fn default() -> Self {
        Self {
            q: Matrix4::zeros(),
            r_per_sat: 100.0,
            x0: None,
            p0: Matrix4::from_diagonal(&Vector4::new(1e4, 1e4, 1e4, 1e6)),
        }
        .with_process_noise(2.0, 5.0)
    }
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Time update with Φ = I: the state is unchanged and P grows by Q.
pub fn predict(s: &EcefState, cfg: &FilterConfig) -> EcefState {
    EcefState {
        x: s.x,
        p: symmetrize(&(s.p + cfg.q)),
    }
}

/// Linearized pseudorange row `[-(S - G)/|R|, 1]` at the receiver estimate.
pub fn measurement_row(
    sat: &EcefPoint,
    est_pos: &EcefPoint,
) -> Result<RowVector4<f64>, KalmanError> {
    let d = [sat.x - est_pos.x, sat.y - est_pos.y, sat.z - est_pos.z];
    let range = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if range.is_nan() || range <= 1.0 {
        return Err(KalmanError::DegenerateRange);
    }
    Ok(RowVector4::new(
        -d[0] / range,
        -d[1] / range,
        -d[2] / range,
        1.0,
    ))
}

/// Measurement update. The innovation uses the full nonlinear predicted
/// pseudorange `|S - G| + b_u` at the prior estimate.
pub fn update(
    s: &EcefState,
    epoch: &PseudorangeEpoch,
    cfg: &FilterConfig,
) -> Result<(EcefState, DVector<f64>), KalmanError> {
    let n = epoch.entries.len();
    if n == 0 {
        return Err(KalmanError::EmptyEpoch);
    }
    let prior_pos = s.position();
    // Rows in satellite-id order so the result does not depend on entry order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| epoch.entries[i].satellite_id);
    let mut h = DMatrix::<f64>::zeros(n, 4);
    let mut innovations = DVector::<f64>::zeros(n);
    for (row, &i) in order.iter().enumerate() {
        let e = &epoch.entries[i];
        h.set_row(row, &measurement_row(&e.satellite_pos, &prior_pos)?);
        let predicted = e.satellite_pos.distance(&prior_pos) + s.clock_bias_m();
        innovations[row] = e.pseudorange_m - predicted;
    }

    let p_prior = DMatrix::from_column_slice(4, 4, s.p.as_slice());
    let ht = h.transpose();
    let mut innov_cov = &h * &p_prior * &ht;
    for i in 0..n {
        innov_cov[(i, i)] += cfg.r_per_sat;
    }
    let innov_cov_inv = innov_cov
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| innov_cov.try_inverse())
        .ok_or(KalmanError::SingularInnovationCovariance)?;
    let gain = &p_prior * &ht * innov_cov_inv;

    let dx = &gain * &innovations;
    let x = s.x + Vector4::new(dx[0], dx[1], dx[2], dx[3]);
    let i_kh = DMatrix::<f64>::identity(4, 4) - &gain * &h;
    // Joseph form keeps P positive semi-definite when R is small against P.
    let p = &i_kh * &p_prior * i_kh.transpose() + &gain * &gain.transpose() * cfg.r_per_sat;
    let p = Matrix4::from_column_slice(p.as_slice());

    // Innovations are reported in entry order.
    let mut by_entry = DVector::<f64>::zeros(n);
    for (row, &i) in order.iter().enumerate() {
        by_entry[i] = innovations[row];
    }
    Ok((
        EcefState {
            x,
            p: symmetrize(&p),
        },
        by_entry,
    ))
}

/// Output of one filter epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredEpoch {
    pub epoch: u64,
    pub ecef: EcefPoint,
    pub pos: GeodeticPoint,
    pub clock_bias_m: f64,
    /// True when the epoch had too few satellites and only the time update ran.
    pub predicted_only: bool,
    pub innovations: Vec<f64>,
}

/// Streaming predict/update loop for one receiver.
#[derive(Debug, Clone)]
pub struct PseudorangeFilter {
    cfg: FilterConfig,
    state: Option<EcefState>,
}

impl PseudorangeFilter {
    pub fn new(cfg: FilterConfig) -> Self {
        let state = cfg.x0.map(|x0| EcefState::new(x0, cfg.p0));
        Self { cfg, state }
    }

    pub fn state(&self) -> Option<&EcefState> {
        self.state.as_ref()
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    fn initialize(&mut self, epoch: &PseudorangeEpoch) -> Result<(), KalmanError> {
        if epoch.entries.len() < MIN_SATELLITES {
            return Err(KalmanError::InitializationFailed(format!(
                "first epoch has {} satellites, need {MIN_SATELLITES}",
                epoch.entries.len()
            )));
        }
        let fix = least_squares_fix(epoch, &EcefPoint::default())
            .map_err(|e| KalmanError::InitializationFailed(e.to_string()))?;
        let x0 = Vector4::new(fix.pos.x, fix.pos.y, fix.pos.z, fix.clock_bias_m);
        self.state = Some(EcefState::new(x0, self.cfg.p0));
        Ok(())
    }

    /// Run one predict/update cycle. The very first epoch seeds the state
    /// (from least squares when no `x0` is configured) and is then updated
    /// like any other.
    pub fn step(&mut self, epoch: &PseudorangeEpoch) -> Result<FilteredEpoch, KalmanError> {
        let first = self.state.is_none();
        if first {
            self.initialize(epoch)?;
        }
        let current = self.state.as_ref().expect("initialized above");
        let prior = if first {
            current.clone()
        } else {
            predict(current, &self.cfg)
        };

        let (posterior, innovations, predicted_only) = if epoch.entries.len() >= MIN_SATELLITES {
            let (post, innov) = update(&prior, epoch, &self.cfg)?;
            (post, innov.iter().copied().collect(), false)
        } else {
            debug!(
                "epoch {}: {} satellites, predict only",
                epoch.epoch,
                epoch.entries.len()
            );
            (prior, Vec::new(), true)
        };
        let ecef = posterior.position();
        let out = FilteredEpoch {
            epoch: epoch.epoch,
            ecef,
            pos: ecef.to_geodetic(),
            clock_bias_m: posterior.clock_bias_m(),
            predicted_only,
            innovations,
        };
        self.state = Some(posterior);
        Ok(out)
    }
}

/// Whole-run result of the pseudorange filter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PseudorangeRun {
    pub epochs: Vec<FilteredEpoch>,
}

impl PseudorangeRun {
    pub fn track(&self) -> Track {
        self.epochs
            .iter()
            .map(|e| TrackSample {
                epoch: e.epoch,
                time: None,
                pos: e.pos,
            })
            .collect()
    }

    pub fn clock_series(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.clock_bias_m).collect()
    }

    pub fn predicted_only_count(&self) -> usize {
        self.epochs.iter().filter(|e| e.predicted_only).count()
    }
}

pub fn run_pseudorange_filter<'a, I>(
    epochs: I,
    cfg: &FilterConfig,
) -> Result<PseudorangeRun, KalmanError>
where
    I: IntoIterator<Item = &'a PseudorangeEpoch>,
{
    let mut filter = PseudorangeFilter::new(cfg.clone());
    let mut out = PseudorangeRun::default();
    for epoch in epochs {
        out.epochs.push(filter.step(epoch)?);
    }
    Ok(out)
}
