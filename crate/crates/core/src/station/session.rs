use std::path::{Path, PathBuf};

use log::{debug, warn};

use crate::accuracy::{self, AccuracyReport, Reference};
use crate::geodesy::GeodeticPoint;
use crate::kalman::PositionFilter;
use crate::kml::{self, CsvAppender, CsvRow, KmlError, Source, TrackPoint};
use crate::telemetry::TelemetryRecord;
use crate::track::{Track, TrackSample};

/// How a session derives its filtered positions.
#[derive(Debug, Clone)]
pub(crate) enum SessionFilter {
    Off,
    Position {
        q_m: f64,
        r_m: f64,
        filter: Option<PositionFilter>,
    },
    /// Positions looked up from a precomputed pseudorange run.
    Lookup,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionCounters {
    pub accepted: u64,
    /// Messages from this vehicle rejected for range or layout problems
    /// (checksum failures never reach a session).
    pub rejected: u64,
}

/// Per-vehicle state: counters, tracks and open output files.
pub struct VehicleSession {
    vehicle_id: String,
    counters: SessionCounters,
    raw: Track,
    filtered: Track,
    points: Vec<TrackPoint>,
    csv: CsvAppender,
    kml_path: PathBuf,
    kml_every_n: usize,
    since_kml: usize,
    filter: SessionFilter,
}

impl VehicleSession {
    pub(crate) fn create(
        vehicle_id: &str,
        out_dir: &Path,
        kml_every_n: usize,
        filter: SessionFilter,
    ) -> Result<Self, KmlError> {
        let csv_path = out_dir.join(format!("{vehicle_id}.csv"));
        let kml_path = out_dir.join(format!("{vehicle_id}.kml"));
        debug!("new session {vehicle_id}: {}", csv_path.display());
        Ok(Self {
            vehicle_id: vehicle_id.to_string(),
            counters: SessionCounters::default(),
            raw: Track::new(),
            filtered: Track::new(),
            points: Vec::new(),
            csv: CsvAppender::create(&csv_path, vehicle_id)?,
            kml_path,
            kml_every_n: kml_every_n.max(1),
            since_kml: 0,
            filter,
        })
    }

    pub fn vehicle_id(&self) -> &str {
        &self.vehicle_id
    }

    pub fn counters(&self) -> SessionCounters {
        self.counters
    }

    pub fn raw_track(&self) -> &Track {
        &self.raw
    }

    pub fn filtered_track(&self) -> &Track {
        &self.filtered
    }

    pub(crate) fn note_rejected(&mut self) {
        self.counters.rejected += 1;
    }

    pub(crate) fn accept(
        &mut self,
        rec: &TelemetryRecord,
        looked_up: Option<GeodeticPoint>,
    ) -> Result<(), KmlError> {
        let time = rec.fix.timestamp();
        let raw = GeodeticPoint::new(rec.fix.lat_deg, rec.fix.lon_deg, 0.0);
        let filtered = match &mut self.filter {
            SessionFilter::Off => None,
            SessionFilter::Position { q_m, r_m, filter } => {
                let f = filter.get_or_insert_with(|| PositionFilter::new(raw, *q_m, *r_m));
                Some(f.step_point(&raw))
            }
            SessionFilter::Lookup => looked_up,
        };

        let epoch = self.counters.accepted;
        self.counters.accepted += 1;
        self.raw.push(TrackSample {
            epoch,
            time: Some(time),
            pos: raw,
        });
        self.points.push(TrackPoint {
            time,
            pos: raw,
            status: rec.status,
            source: Source::Raw,
        });
        if let Some(pos) = filtered {
            self.filtered.push(TrackSample {
                epoch,
                time: Some(time),
                pos,
            });
            self.points.push(TrackPoint {
                time,
                pos,
                status: rec.status,
                source: Source::Filtered,
            });
        }
        self.csv.append(&CsvRow {
            time,
            raw,
            filtered,
            status: rec.status,
        })?;

        self.since_kml += 1;
        if self.since_kml >= self.kml_every_n {
            self.flush_outputs()?;
        }
        Ok(())
    }

    /// Flush the CSV and rewrite the KML document.
    pub(crate) fn flush_outputs(&mut self) -> Result<(), KmlError> {
        self.since_kml = 0;
        self.csv.flush()?;
        if self.points.is_empty() {
            return Ok(());
        }
        let doc = kml::emit_track_document(&self.vehicle_id, &self.points)?;
        kml::write_document(&self.kml_path, &doc)
    }

    /// Mean-referenced reports for the raw and (when present) filtered tracks.
    pub fn accuracy(&self) -> (Option<AccuracyReport>, Option<AccuracyReport>) {
        let rep = |t: &Track, label: &str| match accuracy::report(t, Reference::Mean) {
            Ok(r) => Some(r),
            Err(e) => {
                if !t.is_empty() {
                    warn!("{}: no {label} accuracy report: {e}", self.vehicle_id);
                }
                None
            }
        };
        (rep(&self.raw, "raw"), rep(&self.filtered, "filtered"))
    }
}
