//! Monitoring station: ingests telemetry messages, keeps one session per
//! vehicle and maintains `<id>.csv` / `<id>.kml` in an output directory.

mod session;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use chrono::NaiveDateTime;
use log::{debug, error, info, warn};
use thiserror::Error;

use crate::accuracy::AccuracyReport;
use crate::geodesy::GeodeticPoint;
use crate::gnss_sim::TrajectoryConfig;
use crate::io::{self as fileio, IoError};
use crate::kalman::{run_pseudorange_filter, FilterConfig, KalmanError};
use crate::kml::KmlError;
use crate::telemetry::{decode_record, sniff_vehicle_id, TelemetryError};

use session::SessionFilter;
pub use session::{SessionCounters, VehicleSession};

pub const DEFAULT_KML_EVERY_N: usize = 10;
pub const ACCURACY_FILE: &str = "accuracy.csv";

const POLL_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Error)]
pub enum StationError {
    #[error(transparent)]
    Output(#[from] KmlError),
    #[error(transparent)]
    Input(#[from] IoError),
    #[error("pseudorange filter: {0}")]
    Filter(#[from] KalmanError),
    #[error("{context}: {cause}")]
    Io { context: String, cause: io::Error },
}

fn io_ctx(context: impl Into<String>) -> impl FnOnce(io::Error) -> StationError {
    let context = context.into();
    move |cause| StationError::Io { context, cause }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSource {
    File(PathBuf),
    Stdin,
    Tcp(u16),
}

impl std::str::FromStr for InputSource {
    type Err = String;

    /// `file:PATH`, `stdin` or `tcp:PORT`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "stdin" || s == "-" {
            Ok(InputSource::Stdin)
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(InputSource::File(PathBuf::from(p)))
        } else if let Some(p) = s.strip_prefix("tcp:") {
            p.parse()
                .map(InputSource::Tcp)
                .map_err(|_| format!("bad port in {s:?}"))
        } else {
            Err(format!("expected file:PATH, stdin or tcp:PORT, got {s:?}"))
        }
    }
}

#[derive(Debug, Clone)]
pub enum FilterMode {
    Off,
    /// Per-vehicle east/north random-walk filter on the reported fixes.
    Position {
        q_m: f64,
        r_m: f64,
    },
    /// Pseudorange filter fed from a side-channel CSV. A message at UTC time
    /// `t` is matched to epoch `round((t - start_time) / epoch_dt_s)`.
    Pseudorange {
        pseudoranges: PathBuf,
        config: Box<FilterConfig>,
        start_time: NaiveDateTime,
        epoch_dt_s: f64,
    },
}

impl FilterMode {
    /// Pseudorange mode with the simulator's default epoch timing.
    pub fn pseudorange(pseudoranges: PathBuf, config: FilterConfig) -> Self {
        let t = TrajectoryConfig::new(
            crate::gnss_sim::TrajectoryKind::Static,
            GeodeticPoint::default(),
            0.0,
            1,
        );
        FilterMode::Pseudorange {
            pseudoranges,
            config: Box::new(config),
            start_time: t.start_time,
            epoch_dt_s: t.epoch_dt_s,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StationConfig {
    pub input: InputSource,
    pub output_dir: PathBuf,
    pub filter: FilterMode,
    pub kml_every_n: usize,
}

impl StationConfig {
    pub fn new(input: InputSource, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input,
            output_dir: output_dir.into(),
            filter: FilterMode::Position {
                q_m: 2.0,
                r_m: 15.0,
            },
            kml_every_n: DEFAULT_KML_EVERY_N,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Checksum,
    Malformed,
    Range,
}

impl RejectReason {
    fn of(e: &TelemetryError) -> Self {
        match e {
            TelemetryError::ChecksumMismatch { .. } => RejectReason::Checksum,
            TelemetryError::RangeViolation(_) => RejectReason::Range,
            _ => RejectReason::Malformed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestOutcome {
    Accepted { vehicle_id: String },
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StationCounters {
    pub received: u64,
    pub accepted: u64,
    pub rejected_checksum: u64,
    pub rejected_malformed: u64,
    pub rejected_range: u64,
}

impl StationCounters {
    pub fn rejected(&self) -> u64 {
        self.rejected_checksum + self.rejected_malformed + self.rejected_range
    }

    /// Every received message is either accepted or rejected for one reason.
    pub fn is_conserved(&self) -> bool {
        self.received == self.accepted + self.rejected()
    }
}

#[derive(Debug, Default)]
struct AtomicCounters {
    received: AtomicU64,
    accepted: AtomicU64,
    rejected_checksum: AtomicU64,
    rejected_malformed: AtomicU64,
    rejected_range: AtomicU64,
}

impl AtomicCounters {
    fn snapshot(&self) -> StationCounters {
        StationCounters {
            received: self.received.load(Ordering::SeqCst),
            accepted: self.accepted.load(Ordering::SeqCst),
            rejected_checksum: self.rejected_checksum.load(Ordering::SeqCst),
            rejected_malformed: self.rejected_malformed.load(Ordering::SeqCst),
            rejected_range: self.rejected_range.load(Ordering::SeqCst),
        }
    }

    fn reject(&self, r: RejectReason) {
        let c = match r {
            RejectReason::Checksum => &self.rejected_checksum,
            RejectReason::Malformed => &self.rejected_malformed,
            RejectReason::Range => &self.rejected_range,
        };
        c.fetch_add(1, Ordering::SeqCst);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSummary {
    pub vehicle_id: String,
    pub counters: SessionCounters,
    pub raw: Option<AccuracyReport>,
    pub filtered: Option<AccuracyReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationSummary {
    pub counters: StationCounters,
    pub vehicles: Vec<VehicleSummary>,
}

type SharedSession = Arc<Mutex<VehicleSession>>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panic in another ingest thread leaves the data usable.
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Shared ingestion state. All methods take `&self`, so one `Station` can be
/// fed from several connection threads.
pub struct Station {
    output_dir: PathBuf,
    kml_every_n: usize,
    filter: FilterMode,
    lookup: Option<(HashMap<u64, GeodeticPoint>, NaiveDateTime, f64)>,
    sessions: Mutex<BTreeMap<String, SharedSession>>,
    counters: AtomicCounters,
}

impl Station {
    pub fn new(config: &StationConfig) -> Result<Self, StationError> {
        fs::create_dir_all(&config.output_dir)
            .map_err(io_ctx(format!("creating {}", config.output_dir.display())))?;
        let lookup = match &config.filter {
            FilterMode::Pseudorange {
                pseudoranges,
                config: cfg,
                start_time,
                epoch_dt_s,
            } => {
                let epochs = fileio::read_pseudorange_csv(pseudoranges)?;
                let run = run_pseudorange_filter(&epochs, cfg)?;
                info!(
                    "pseudorange side channel: {} epochs, {} predict-only",
                    run.epochs.len(),
                    run.predicted_only_count()
                );
                let map = run.epochs.iter().map(|e| (e.epoch, e.pos)).collect();
                Some((map, *start_time, *epoch_dt_s))
            }
            _ => None,
        };
        Ok(Self {
            output_dir: config.output_dir.clone(),
            kml_every_n: config.kml_every_n,
            filter: config.filter.clone(),
            lookup,
            sessions: Mutex::new(BTreeMap::new()),
            counters: AtomicCounters::default(),
        })
    }

    pub fn counters(&self) -> StationCounters {
        self.counters.snapshot()
    }

    pub fn vehicle_ids(&self) -> Vec<String> {
        lock(&self.sessions).keys().cloned().collect()
    }

    /// Run `f` against a vehicle's session, if it exists.
    pub fn with_session<R>(
        &self,
        vehicle_id: &str,
        f: impl FnOnce(&VehicleSession) -> R,
    ) -> Option<R> {
        let s = lock(&self.sessions).get(vehicle_id).cloned()?;
        let guard = lock(&s);
        Some(f(&guard))
    }

    fn session_filter(&self) -> SessionFilter {
        match self.filter {
            FilterMode::Off => SessionFilter::Off,
            FilterMode::Position { q_m, r_m } => SessionFilter::Position {
                q_m,
                r_m,
                filter: None,
            },
            FilterMode::Pseudorange { .. } => SessionFilter::Lookup,
        }
    }

    fn session(
        &self,
        vehicle_id: &str,
        create: bool,
    ) -> Result<Option<SharedSession>, StationError> {
        let mut map = lock(&self.sessions);
        if let Some(s) = map.get(vehicle_id) {
            return Ok(Some(s.clone()));
        }
        if !create {
            return Ok(None);
        }
        let s = VehicleSession::create(
            vehicle_id,
            &self.output_dir,
            self.kml_every_n,
            self.session_filter(),
        )?;
        let s = Arc::new(Mutex::new(s));
        map.insert(vehicle_id.to_string(), s.clone());
        Ok(Some(s))
    }

    fn lookup(&self, t: NaiveDateTime) -> Option<GeodeticPoint> {
        let (map, start, dt) = self.lookup.as_ref()?;
        let secs = (t - *start).num_milliseconds() as f64 / 1000.0;
        let k = (secs / dt).round();
        if k < 0.0 {
            return None;
        }
        let hit = map.get(&(k as u64)).copied();
        if hit.is_none() {
            debug!("no pseudorange epoch for {t}");
        }
        hit
    }

    /// Classify one line. Output files are only touched for accepted messages;
    /// a checksum rejection changes nothing but the station counters.
    pub fn ingest_line(&self, line: &str) -> Result<IngestOutcome, StationError> {
        self.counters.received.fetch_add(1, Ordering::SeqCst);
        let line = line.trim_end_matches(['\r', '\n']);
        let decoded = if line.trim().is_empty() {
            Err(TelemetryError::MalformedLayout("blank line".into()))
        } else {
            decode_record(line)
        };
        match decoded {
            Ok(rec) => {
                let session = self
                    .session(&rec.vehicle_id, true)?
                    .expect("created on demand");
                let looked_up = self.lookup(rec.fix.timestamp());
                lock(&session).accept(&rec, looked_up)?;
                self.counters.accepted.fetch_add(1, Ordering::SeqCst);
                Ok(IngestOutcome::Accepted {
                    vehicle_id: rec.vehicle_id,
                })
            }
            Err(e) => {
                let reason = RejectReason::of(&e);
                self.counters.reject(reason);
                debug!("rejected ({reason:?}): {e}");
                if reason != RejectReason::Checksum {
                    if let Some(id) = sniff_vehicle_id(line) {
                        if let Some(s) = self.session(&id, false)? {
                            lock(&s).note_rejected();
                        }
                    }
                }
                Ok(IngestOutcome::Rejected(reason))
            }
        }
    }

    /// Ingest every line of `reader` until EOF or `shutdown`. Lines that are
    /// not valid UTF-8 are rejected as malformed.
    pub fn ingest_reader<R: BufRead>(
        &self,
        mut reader: R,
        shutdown: &AtomicBool,
    ) -> Result<(), StationError> {
        let mut buf = Vec::new();
        while !shutdown.load(Ordering::SeqCst) {
            buf.clear();
            let n = match reader.read_until(b'\n', &mut buf) {
                Ok(n) => n,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => {
                    return Err(StationError::Io {
                        context: "reading input".into(),
                        cause: e,
                    })
                }
            };
            if n == 0 {
                break;
            }
            self.ingest_line(&String::from_utf8_lossy(&buf))?;
        }
        Ok(())
    }

    /// Accept connections until `shutdown`, one thread per connection.
    pub fn serve_tcp(
        self: &Arc<Self>,
        listener: TcpListener,
        shutdown: Arc<AtomicBool>,
    ) -> Result<(), StationError> {
        listener
            .set_nonblocking(true)
            .map_err(io_ctx("configuring listener"))?;
        let mut workers = Vec::new();
        while !shutdown.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    info!("connection from {peer}");
                    let station = Arc::clone(self);
                    let stop = Arc::clone(&shutdown);
                    workers.push(thread::spawn(move || {
                        if let Err(e) = station.serve_connection(stream, &stop) {
                            error!("connection {peer}: {e}");
                        }
                    }));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL_INTERVAL),
                Err(e) => warn!("accept failed: {e}"),
            }
            workers.retain(|w| !w.is_finished());
        }
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }

    fn serve_connection(
        &self,
        stream: TcpStream,
        shutdown: &AtomicBool,
    ) -> Result<(), StationError> {
        stream
            .set_nonblocking(false)
            .map_err(io_ctx("configuring connection"))?;
        stream
            .set_read_timeout(Some(POLL_INTERVAL))
            .map_err(io_ctx("configuring connection"))?;
        let mut reader = BufReader::new(stream);
        let mut buf = Vec::new();
        while !shutdown.load(Ordering::SeqCst) {
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) => break,
                Ok(_) if buf.ends_with(b"\n") => {
                    self.ingest_line(&String::from_utf8_lossy(&buf))?;
                    buf.clear();
                }
                Ok(_) => {}
                Err(e)
                    if matches!(
                        e.kind(),
                        ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted
                    ) => {}
                Err(e) => {
                    return Err(StationError::Io {
                        context: "reading connection".into(),
                        cause: e,
                    })
                }
            }
        }
        if !buf.is_empty() {
            self.ingest_line(&String::from_utf8_lossy(&buf))?;
        }
        Ok(())
    }

    /// Flush every session, write `accuracy.csv` and return the summary.
    pub fn finish(&self) -> Result<StationSummary, StationError> {
        let sessions: Vec<SharedSession> = lock(&self.sessions).values().cloned().collect();
        let mut vehicles = Vec::with_capacity(sessions.len());
        for s in sessions {
            let mut s = lock(&s);
            s.flush_outputs()?;
            let (raw, filtered) = s.accuracy();
            vehicles.push(VehicleSummary {
                vehicle_id: s.vehicle_id().to_string(),
                counters: s.counters(),
                raw,
                filtered,
            });
        }
        self.write_accuracy(&vehicles)?;
        Ok(StationSummary {
            counters: self.counters(),
            vehicles,
        })
    }

    fn write_accuracy(&self, vehicles: &[VehicleSummary]) -> Result<(), StationError> {
        let path = self.output_dir.join(ACCURACY_FILE);
        let mut out = String::new();
        out.push_str(AccuracyReport::CSV_HEADER);
        out.push('\n');
        for v in vehicles {
            for (kind, rep) in [("raw", &v.raw), ("filtered", &v.filtered)] {
                if let Some(r) = rep {
                    out.push_str(&r.csv_row(&format!("{}:{kind}", v.vehicle_id)));
                    out.push('\n');
                }
            }
        }
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(io_ctx(format!("writing {}", path.display())))
    }
}

/// Run a station to completion: until EOF for file and stdin input, until
/// `shutdown` is raised for TCP.
pub fn run(
    config: &StationConfig,
    shutdown: Arc<AtomicBool>,
) -> Result<StationSummary, StationError> {
    let station = Arc::new(Station::new(config)?);
    match &config.input {
        InputSource::File(path) => {
            let f = fs::File::open(path).map_err(io_ctx(format!("opening {}", path.display())))?;
            station.ingest_reader(BufReader::new(f), &shutdown)?;
        }
        InputSource::Stdin => {
            station.ingest_reader(io::stdin().lock(), &shutdown)?;
        }
        InputSource::Tcp(port) => {
            let listener = TcpListener::bind(("0.0.0.0", *port))
                .map_err(io_ctx(format!("binding port {port}")))?;
            info!(
                "listening on {}",
                listener.local_addr().map_err(io_ctx("listener address"))?
            );
            station.serve_tcp(listener, shutdown)?;
        }
    }
    let summary = station.finish()?;
    let c = summary.counters;
    info!(
        "received {} accepted {} rejected checksum {} malformed {} range {}",
        c.received, c.accepted, c.rejected_checksum, c.rejected_malformed, c.rejected_range
    );
    Ok(summary)
}

/// Convenience for tests and tools: run a station over an in-memory message list.
pub fn run_lines<I, S>(
    lines: I,
    output_dir: &Path,
    filter: FilterMode,
    kml_every_n: usize,
) -> Result<StationSummary, StationError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let config = StationConfig {
        input: InputSource::Stdin,
        output_dir: output_dir.to_path_buf(),
        filter,
        kml_every_n,
    };
    let station = Station::new(&config)?;
    for l in lines {
        station.ingest_line(l.as_ref())?;
    }
    station.finish()
}
