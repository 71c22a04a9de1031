//! KML 2.2 documents and per-vehicle CSV logs.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};
use thiserror::Error;

use crate::geodesy::GeodeticPoint;
use crate::telemetry::EngineStatus;

pub const KML_NAMESPACE: &str = "http://www.opengis.net/kml/2.2";

pub const CSV_HEADER: [&str; 10] = [
    "timestamp_utc",
    "vehicle_id",
    "lat_raw",
    "lon_raw",
    "lat_filtered",
    "lon_filtered",
    "rpm",
    "coolant_c",
    "speed_kmh",
    "throttle_pct",
];

#[derive(Debug, Error)]
pub enum KmlError {
    #[error("track has no points")]
    EmptyTrack,
    #[error("{path}: {message}")]
    IoFailure { path: String, message: String },
}

impl KmlError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        KmlError::IoFailure {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Raw,
    Filtered,
}

impl Source {
    fn style_id(self) -> &'static str {
        match self {
            Source::Raw => "raw",
            Source::Filtered => "filtered",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub time: NaiveDateTime,
    pub pos: GeodeticPoint,
    pub status: EngineStatus,
    pub source: Source,
}

/// UTC timestamp with hundredths of a second, e.g. `2024-03-23T12:00:01.50Z`.
pub fn format_timestamp(t: &NaiveDateTime) -> String {
    let centis = (t.nanosecond() % 1_000_000_000) / 10_000_000;
    format!("{}.{centis:02}Z", t.format("%Y-%m-%dT%H:%M:%S"))
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let body = s.strip_suffix('Z')?;
    NaiveDateTime::parse_from_str(body, "%Y-%m-%dT%H:%M:%S%.f").ok()
}

/// Up to 7 decimals, trailing zeros dropped, no negative zero.
fn coord(v: f64) -> String {
    let s = format!("{v:.7}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".to_string(),
        _ => s.to_string(),
    }
}

fn coordinates(p: &GeodeticPoint) -> String {
    format!("{},{},0", coord(p.lon_deg), coord(p.lat_deg))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn description(status: &EngineStatus) -> String {
    format!(
        "Engine speed: {:.2} rpm\nCoolant temperature: {:.0} °C\nVehicle speed: {:.0} km/h\nThrottle position: {:.1} %",
        status.rpm, status.coolant_c, status.speed_kmh, status.throttle_pct
    )
}

/// A single `<Placemark>` with a `<Point>` at `point`.
pub fn emit_placemark(vehicle_id: &str, point: &TrackPoint) -> String {
    format!(
        "<Placemark>\n  <name>{}</name>\n  <styleUrl>#{}</styleUrl>\n  <TimeStamp><when>{}</when></TimeStamp>\n  <description>{}</description>\n  <Point><coordinates>{}</coordinates></Point>\n</Placemark>",
        escape(vehicle_id),
        point.source.style_id(),
        format_timestamp(&point.time),
        escape(&description(&point.status)),
        coordinates(&point.pos),
    )
}

fn style(source: Source) -> String {
    // KML colors are aabbggrr.
    let (color, width) = match source {
        Source::Raw => ("ff0000ff", 2),
        Source::Filtered => ("ffff0000", 3),
    };
    format!(
        "<Style id=\"{id}\"><LineStyle><color>{color}</color><width>{width}</width></LineStyle><IconStyle><color>{color}</color></IconStyle></Style>",
        id = source.style_id()
    )
}

fn line_string(vehicle_id: &str, source: Source, points: &[&TrackPoint]) -> String {
    let coords: Vec<String> = points.iter().map(|p| coordinates(&p.pos)).collect();
    let times: Vec<String> = points.iter().map(|p| format_timestamp(&p.time)).collect();
    format!(
        "<Placemark>\n  <name>{} {}</name>\n  <styleUrl>#{}</styleUrl>\n  <TimeSpan><begin>{}</begin><end>{}</end></TimeSpan>\n  <ExtendedData><Data name=\"timestamps\"><value>{}</value></Data></ExtendedData>\n  <LineString><tessellate>1</tessellate><coordinates>{}</coordinates></LineString>\n</Placemark>",
        escape(vehicle_id),
        source.style_id(),
        source.style_id(),
        times.first().map(String::as_str).unwrap_or_default(),
        times.last().map(String::as_str).unwrap_or_default(),
        times.join(" "),
        coords.join(" "),
    )
}

/// Full KML document: one styled `LineString` per source present, plus one
/// `Point` placemark at the latest fix (the filtered one when both sources
/// share the latest time). Points keep their input order within a source.
pub fn emit_track_document(vehicle_id: &str, points: &[TrackPoint]) -> Result<String, KmlError> {
    let latest = points
        .iter()
        .max_by(|a, b| a.time.cmp(&b.time).then(a.source.cmp(&b.source)))
        .ok_or(KmlError::EmptyTrack)?;

    let mut doc = String::new();
    doc.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(doc, "<kml xmlns=\"{KML_NAMESPACE}\">");
    doc.push_str("<Document>\n");
    let _ = writeln!(doc, "<name>{}</name>", escape(vehicle_id));

    for source in [Source::Raw, Source::Filtered] {
        let pts: Vec<&TrackPoint> = points.iter().filter(|p| p.source == source).collect();
        if pts.is_empty() {
            continue;
        }
        doc.push_str(&style(source));
        doc.push('\n');
        doc.push_str(&line_string(vehicle_id, source, &pts));
        doc.push('\n');
    }
    doc.push_str(&emit_placemark(vehicle_id, latest));
    doc.push_str("\n</Document>\n</kml>\n");
    Ok(doc)
}

/// One CSV line's worth of data (the vehicle id is supplied separately).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub time: NaiveDateTime,
    pub raw: GeodeticPoint,
    pub filtered: Option<GeodeticPoint>,
    pub status: EngineStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRecord {
    pub vehicle_id: String,
    pub row: CsvRow,
}

fn csv_fields(vehicle_id: &str, r: &CsvRow) -> [String; 10] {
    let (lat_f, lon_f) = match r.filtered {
        Some(p) => (format!("{:.7}", p.lat_deg), format!("{:.7}", p.lon_deg)),
        None => (String::new(), String::new()),
    };
    [
        format_timestamp(&r.time),
        vehicle_id.to_string(),
        format!("{:.7}", r.raw.lat_deg),
        format!("{:.7}", r.raw.lon_deg),
        lat_f,
        lon_f,
        format!("{:.2}", r.status.rpm),
        format!("{:.0}", r.status.coolant_c),
        format!("{:.0}", r.status.speed_kmh),
        format!("{:.1}", r.status.throttle_pct),
    ]
}

/// Incremental writer for a vehicle's CSV log. `create` truncates and writes
/// the header; `open_append` continues an existing file.
pub struct CsvAppender {
    path: String,
    vehicle_id: String,
    writer: csv::Writer<BufWriter<File>>,
    rows: usize,
}

impl CsvAppender {
    pub fn create(path: &Path, vehicle_id: &str) -> Result<Self, KmlError> {
        let file = File::create(path).map_err(|e| KmlError::io(path, e))?;
        let mut me = Self::from_file(path, vehicle_id, file);
        me.writer
            .write_record(CSV_HEADER)
            .map_err(|e| KmlError::io(path, e))?;
        Ok(me)
    }

    pub fn open_append(path: &Path, vehicle_id: &str) -> Result<Self, KmlError> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| KmlError::io(path, e))?;
        Ok(Self::from_file(path, vehicle_id, file))
    }

    fn from_file(path: &Path, vehicle_id: &str, file: File) -> Self {
        Self {
            path: path.display().to_string(),
            vehicle_id: vehicle_id.to_string(),
            writer: csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(BufWriter::new(file)),
            rows: 0,
        }
    }

    pub fn append(&mut self, row: &CsvRow) -> Result<(), KmlError> {
        let fields = csv_fields(&self.vehicle_id, row);
        self.writer.write_record(&fields).map_err(|e| self.err(e))?;
        self.rows += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), KmlError> {
        self.writer.flush().map_err(|e| self.err(e))
    }

    /// Rows appended through this writer.
    pub fn rows(&self) -> usize {
        self.rows
    }

    fn err(&self, e: impl std::fmt::Display) -> KmlError {
        KmlError::IoFailure {
            path: self.path.clone(),
            message: e.to_string(),
        }
    }
}

/// Write header plus one line per row; returns the row count.
pub fn write_csv(rows: &[CsvRow], vehicle_id: &str, path: &Path) -> Result<usize, KmlError> {
    let mut w = CsvAppender::create(path, vehicle_id)?;
    for r in rows {
        w.append(r)?;
    }
    w.flush()?;
    Ok(w.rows())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRecord>, KmlError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| KmlError::io(path, e))?;
    let header = rdr.headers().map_err(|e| KmlError::io(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(KmlError::io(path, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| KmlError::io(path, e))?;
        let bad = |what: &str| KmlError::io(path, format!("row {}: bad {what}", i + 1));
        let num =
            |k: usize| -> Result<f64, KmlError> { rec[k].parse().map_err(|_| bad(CSV_HEADER[k])) };
        let time = parse_timestamp(&rec[0]).ok_or_else(|| bad("timestamp_utc"))?;
        let filtered = if rec[4].is_empty() && rec[5].is_empty() {
            None
        } else {
            Some(GeodeticPoint::new(num(4)?, num(5)?, 0.0))
        };
        out.push(CsvRecord {
            vehicle_id: rec[1].to_string(),
            row: CsvRow {
                time,
                raw: GeodeticPoint::new(num(2)?, num(3)?, 0.0),
                filtered,
                status: EngineStatus {
                    rpm: num(6)?,
                    coolant_c: num(7)?,
                    speed_kmh: num(8)?,
                    throttle_pct: num(9)?,
                },
            },
        });
    }
    Ok(out)
}

/// Write `contents` to `path` atomically enough for a viewer polling the file:
/// a sibling temp file is renamed over the target.
pub fn write_document(path: &Path, contents: &str) -> Result<(), KmlError> {
    let tmp = path.with_extension("kml.tmp");
    let res: io::Result<()> = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    res.map_err(|e| KmlError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t(sec: u32, milli: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2024, 3, 23)
            .unwrap()
            .and_hms_milli_opt(12, 0, sec, milli)
            .unwrap()
    }

    fn status() -> EngineStatus {
        EngineStatus {
            rpm: 1726.5,
            coolant_c: 83.0,
            speed_kmh: 60.0,
            throttle_pct: 34.5,
        }
    }

    fn pt(sec: u32, lat: f64, lon: f64, source: Source) -> TrackPoint {
        TrackPoint {
            time: t(sec, 0),
            pos: GeodeticPoint::new(lat, lon, 0.0),
            status: status(),
            source,
        }
    }

    #[test]
    fn placemark_origin_is_lon_first() {
        let xml = emit_placemark("TRK-1", &pt(0, 0.0, 0.0, Source::Raw));
        assert!(xml.contains("<coordinates>0,0,0</coordinates>"), "{xml}");
        let xml = emit_placemark("TRK-1", &pt(0, 31.9539, 35.9106, Source::Raw));
        assert!(xml.contains("<coordinates>35.9106,31.9539,0</coordinates>"));
        assert!(xml.contains("<name>TRK-1</name>"));
        for unit in ["rpm", "°C", "km/h", "%"] {
            assert!(xml.contains(unit), "missing {unit}");
        }
    }

    #[test]
    fn coordinates_use_seven_decimals() {
        assert_eq!(coord(35.123456789), "35.1234568");
        assert_eq!(coord(-0.00000001), "0");
        assert_eq!(coord(-12.5), "-12.5");
    }

    #[test]
    fn document_parses_and_has_one_point() {
        let pts = vec![
            pt(0, 31.95, 35.91, Source::Raw),
            pt(1, 31.951, 35.911, Source::Raw),
            pt(0, 31.9501, 35.9101, Source::Filtered),
            pt(1, 31.9509, 35.9109, Source::Filtered),
        ];
        let xml = emit_track_document("BUS-7", &pts).unwrap();
        let doc = roxmltree::Document::parse(&xml).unwrap();
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "kml");
        assert_eq!(root.tag_name().namespace(), Some(KML_NAMESPACE));

        let count = |name: &str| doc.descendants().filter(|n| n.has_tag_name(name)).count();
        assert_eq!(count("Point"), 1);
        assert_eq!(count("LineString"), 2);
        assert_eq!(count("Style"), 2);

        let point = doc.descendants().find(|n| n.has_tag_name("Point")).unwrap();
        let placemark = point.parent().unwrap();
        let style = placemark
            .children()
            .find(|n| n.has_tag_name("styleUrl"))
            .unwrap();
        assert_eq!(style.text(), Some("#filtered"));
        let coords = point.first_element_child().unwrap().text().unwrap();
        assert_eq!(coords, "35.9109,31.9509,0");
    }

    #[test]
    fn every_line_point_has_a_timestamp() {
        let pts: Vec<_> = (0..5)
            .map(|i| pt(i, 10.0 + i as f64 * 1e-4, 20.0, Source::Raw))
            .collect();
        let xml = emit_track_document("V1", &pts).unwrap();
        let doc = roxmltree::Document::parse(&xml).unwrap();
        let line = doc
            .descendants()
            .find(|n| n.has_tag_name("LineString"))
            .unwrap();
        let n_coords = line
            .descendants()
            .find(|n| n.has_tag_name("coordinates"))
            .unwrap()
            .text()
            .unwrap()
            .split_whitespace()
            .count();
        let data = doc
            .descendants()
            .find(|n| n.has_tag_name("Data") && n.attribute("name") == Some("timestamps"))
            .unwrap();
        let stamps: Vec<_> = data
            .first_element_child()
            .unwrap()
            .text()
            .unwrap()
            .split(' ')
            .collect();
        assert_eq!(n_coords, 5);
        assert_eq!(stamps.len(), 5);
        assert!(stamps.iter().all(|s| parse_timestamp(s).is_some()));
    }

    #[test]
    fn empty_track_is_an_error() {
        assert!(matches!(
            emit_track_document("V1", &[]),
            Err(KmlError::EmptyTrack)
        ));
    }

    #[test]
    fn vehicle_id_is_escaped() {
        let xml = emit_placemark("a<&>b", &pt(0, 1.0, 2.0, Source::Raw));
        assert!(roxmltree::Document::parse(&xml).is_ok());
    }

    #[test]
    fn timestamp_format() {
        assert_eq!(format_timestamp(&t(1, 500)), "2024-03-23T12:00:01.50Z");
        assert_eq!(parse_timestamp("2024-03-23T12:00:01.50Z"), Some(t(1, 500)));
        assert_eq!(parse_timestamp("2024-03-23T12:00:01.50"), None);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("V1.csv");
        let rows = vec![
            CsvRow {
                time: t(0, 0),
                raw: GeodeticPoint::new(31.9539123, 35.9106456, 0.0),
                filtered: Some(GeodeticPoint::new(31.9539, 35.9106, 0.0)),
                status: status(),
            },
            CsvRow {
                time: t(1, 250),
                raw: GeodeticPoint::new(-1.0, -2.0, 0.0),
                filtered: None,
                status: status(),
            },
        ];
        assert_eq!(write_csv(&rows, "V1", &path).unwrap(), 2);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "2024-03-23T12:00:00.00Z,V1,31.9539123,35.9106456,31.9539000,35.9106000,1726.50,83,60,34.5"
        );
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].vehicle_id, "V1");
        assert_eq!(back[0].row, rows[0]);
        assert_eq!(back[1].row.filtered, None);
        assert_eq!(back[1].row.time, t(1, 250));
    }

    #[test]
    fn appender_continues_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("V2.csv");
        let row = CsvRow {
            time: t(0, 0),
            raw: GeodeticPoint::new(1.0, 2.0, 0.0),
            filtered: None,
            status: status(),
        };
        let mut w = CsvAppender::create(&path, "V2").unwrap();
        w.append(&row).unwrap();
        w.flush().unwrap();
        drop(w);
        let mut w = CsvAppender::open_append(&path, "V2").unwrap();
        w.append(&row).unwrap();
        w.flush().unwrap();
        assert_eq!(read_csv(&path).unwrap().len(), 2);
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("x.csv");
        assert!(matches!(
            write_csv(&[], "V", &path),
            Err(KmlError::IoFailure { .. })
        ));
    }
}
