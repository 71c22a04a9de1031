//! Plain-text file formats shared by the simulator, the filters and the CLI.
//!
//! * message files: one telemetry message per line;
//! * truth / track CSV: `epoch,lat,lon,alt`;
//! * pseudorange CSV: `epoch,sat_id,sx,sy,sz,pr_m`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::geodesy::{EcefPoint, GeodeticPoint};
use crate::gnss_sim::{PseudorangeEntry, PseudorangeEpoch};
use crate::track::{Track, TrackSample};

pub const TRACK_HEADER: [&str; 4] = ["epoch", "lat", "lon", "alt"];
pub const PSEUDORANGE_HEADER: [&str; 6] = ["epoch", "sat_id", "sx", "sy", "sz", "pr_m"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {cause}")]
    Io { path: String, cause: io::Error },
    #[error("{path}: {cause}")]
    Csv { path: String, cause: csv::Error },
    #[error("{path}: unexpected header {found:?}, expected {expected:?}")]
    Header {
        path: String,
        found: Vec<String>,
        expected: Vec<&'static str>,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |cause| IoError::Io {
        path: path.display().to_string(),
        cause,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |cause| IoError::Csv {
        path: path.display().to_string(),
        cause,
    }
}

pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<usize, IoError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut n = 0;
    for line in lines {
        writeln!(w, "{}", line.as_ref()).map_err(io_err(path))?;
        n += 1;
    }
    w.flush().map_err(io_err(path))?;
    Ok(n)
}

pub fn read_lines(path: &Path) -> Result<Vec<String>, IoError> {
    let f = File::open(path).map_err(io_err(path))?;
    BufReader::new(f)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))
}

fn check_header(
    path: &Path,
    rdr: &mut csv::Reader<File>,
    expected: &[&'static str],
) -> Result<(), IoError> {
    let found: Vec<String> = rdr
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(String::from)
        .collect();
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(IoError::Header {
            path: path.display().to_string(),
            found,
            expected: expected.to_vec(),
        });
    }
    Ok(())
}

pub fn write_track_csv(path: &Path, track: &Track) -> Result<usize, IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(TRACK_HEADER).map_err(csv_err(path))?;
    for s in &track.samples {
        w.write_record([
            s.epoch.to_string(),
            format!("{:.9}", s.pos.lat_deg),
            format!("{:.9}", s.pos.lon_deg),
            format!("{:.3}", s.pos.alt_m),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(track.len())
}

pub fn read_track_csv(path: &Path) -> Result<Track, IoError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    check_header(path, &mut rdr, &TRACK_HEADER)?;
    let mut track = Track::new();
    for row in rdr.deserialize::<(u64, f64, f64, f64)>() {
        let (epoch, lat, lon, alt) = row.map_err(csv_err(path))?;
        track.push(TrackSample {
            epoch,
            time: None,
            pos: GeodeticPoint::new(lat, lon, alt),
        });
    }
    Ok(track)
}

pub fn write_pseudorange_csv<'a, I>(path: &Path, epochs: I) -> Result<usize, IoError>
where
    I: IntoIterator<Item = &'a PseudorangeEpoch>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(PSEUDORANGE_HEADER).map_err(csv_err(path))?;
    let mut rows = 0;
    for e in epochs {
        for entry in &e.entries {
            let p = entry.satellite_pos;
            w.write_record([
                e.epoch.to_string(),
                entry.satellite_id.to_string(),
                format!("{:.4}", p.x),
                format!("{:.4}", p.y),
                format!("{:.4}", p.z),
                format!("{:.4}", entry.pseudorange_m),
            ])
            .map_err(csv_err(path))?;
            rows += 1;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(rows)
}

/// Rows grouped by epoch, in ascending epoch order.
pub fn read_pseudorange_csv(path: &Path) -> Result<Vec<PseudorangeEpoch>, IoError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    check_header(path, &mut rdr, &PSEUDORANGE_HEADER)?;
    let mut by_epoch: BTreeMap<u64, Vec<PseudorangeEntry>> = BTreeMap::new();
    for row in rdr.deserialize::<(u64, u32, f64, f64, f64, f64)>() {
        let (epoch, sat, x, y, z, pr) = row.map_err(csv_err(path))?;
        by_epoch.entry(epoch).or_default().push(PseudorangeEntry {
            satellite_id: sat,
            satellite_pos: EcefPoint::new(x, y, z),
            pseudorange_m: pr,
        });
    }
    Ok(by_epoch
        .into_iter()
        .map(|(epoch, entries)| PseudorangeEpoch {
            epoch,
            t_s: epoch as f64,
            entries,
        })
        .collect())
}
