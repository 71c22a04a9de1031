//! Vehicle tracking core: NMEA and telemetry codecs, WGS-84 geodesy, a GNSS
//! pseudorange simulator, Kalman correction, accuracy statistics, KML/CSV
//! output and the monitoring station.

pub mod accuracy;
pub mod geodesy;
pub mod gnss_sim;
pub mod io;
pub mod kalman;
pub mod kml;
pub mod nmea;
pub mod station;
pub mod telemetry;
pub mod track;

pub use accuracy::{AccuracyError, AccuracyReport, Comparison, Reference};
pub use geodesy::{EcefPoint, GeodesyError, GeodeticPoint};
pub use gnss_sim::{PseudorangeEntry, PseudorangeEpoch, SimError};
pub use kalman::{FilterConfig, KalmanError};
pub use kml::{KmlError, Source, TrackPoint};
pub use nmea::{GprmcFix, NmeaError};
pub use station::{StationConfig, StationError};
pub use telemetry::{EngineStatus, TelemetryError, TelemetryRecord};
pub use track::{Track, TrackSample};
