use std::collections::BTreeMap;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use vtrack_core::accuracy::{compare, AccuracyReport};
use vtrack_core::geodesy::GeodeticPoint;
use vtrack_core::gnss_sim::{
    build_constellation, pr_sigma_for_2drms, Multipath, NoiseModel, Simulator, TrajectoryConfig,
    TrajectoryKind,
};
use vtrack_core::io::{
    read_lines, read_pseudorange_csv, read_track_csv, write_lines, write_pseudorange_csv,
    write_track_csv, TRACK_HEADER,
};
use vtrack_core::kalman::{run_pseudorange_filter, FilterConfig, PositionFilter};
use vtrack_core::kml::{emit_track_document, format_timestamp, write_document, Source, TrackPoint};
use vtrack_core::station::{self, FilterMode, StationConfig};
use vtrack_core::telemetry::{decode_record, TelemetryRecord};
use vtrack_core::track::{align_by_epoch, Track, TrackSample};

use crate::{
    DecodeArgs, EvalArgs, FilterArgs, FilterKind, FilterParams, KmlArgs, SimulateArgs, StationArgs,
    StationFilter, Status, Traj,
};

/// Decoded messages keyed by their 0-based line number, which doubles as the
/// epoch index for files written by `simulate`.
struct MessageFile {
    records: Vec<(u64, TelemetryRecord)>,
    lines: usize,
}

impl MessageFile {
    fn load(path: &Path) -> Result<Self> {
        let lines = read_lines(path)?;
        let mut records = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            match decode_record(line) {
                Ok(r) => records.push((i as u64, r)),
                Err(e) => warn!("{}:{}: {e}", path.display(), i + 1),
            }
        }
        info!(
            "{}: {} of {} lines decoded",
            path.display(),
            records.len(),
            lines.len()
        );
        Ok(Self {
            records,
            lines: lines.len(),
        })
    }

    fn all_rejected(&self) -> bool {
        self.lines > 0 && self.records.is_empty()
    }

    /// Records of one vehicle; `None` picks the only vehicle present.
    fn for_vehicle(&self, vehicle: Option<&str>) -> Result<Vec<&(u64, TelemetryRecord)>> {
        let id = match vehicle {
            Some(v) => v.to_string(),
            None => {
                let mut ids: Vec<&str> = self
                    .records
                    .iter()
                    .map(|(_, r)| r.vehicle_id.as_str())
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                match ids.as_slice() {
                    [] => return Ok(Vec::new()),
                    [one] => one.to_string(),
                    many => bail!(
                        "input holds several vehicles ({}); pick one with --vehicle",
                        many.join(", ")
                    ),
                }
            }
        };
        Ok(self
            .records
            .iter()
            .filter(|(_, r)| r.vehicle_id == id)
            .collect())
    }

    fn raw_track(&self, vehicle: Option<&str>) -> Result<Track> {
        Ok(self
            .for_vehicle(vehicle)?
            .into_iter()
            .map(|(epoch, r)| TrackSample {
                epoch: *epoch,
                time: Some(r.fix.timestamp()),
                pos: GeodeticPoint::new(r.fix.lat_deg, r.fix.lon_deg, 0.0),
            })
            .collect())
    }
}

fn pseudorange_config(p: &FilterParams) -> FilterConfig {
    FilterConfig::default()
        .with_process_noise(p.q_pos_m, p.q_clk_m)
        .with_measurement_sigma(p.pr_sigma_m)
}

pub fn simulate(a: SimulateArgs) -> Result<Status> {
    let origin = GeodeticPoint::new(a.lat, a.lon, a.alt);
    origin.validate().context("origin")?;
    let kind = match a.traj {
        Traj::Static => TrajectoryKind::Static,
        Traj::Line => TrajectoryKind::Line {
            heading_deg: a.heading_deg,
        },
        Traj::Circle => TrajectoryKind::Circle {
            radius_m: a.radius_m,
        },
    };
    let constellation = build_constellation(a.satellites, &origin, a.seed)?;
    let dops = constellation.dops;
    let pr_sigma_m = a
        .pr_sigma_m
        .unwrap_or_else(|| pr_sigma_for_2drms(a.target_2drms_m, dops.hdop));
    info!(
        "{} satellites, HDOP {:.2}, GDOP {:.2}, pseudorange sigma {pr_sigma_m:.2} m",
        a.satellites, dops.hdop, dops.gdop
    );

    let noise = NoiseModel {
        pr_sigma_m,
        clock_offset0_m: a.clock_offset_m,
        clock_walk_m: a.clock_walk_m,
        multipath: (a.multipath_m != 0.0).then_some(Multipath {
            bias_m: a.multipath_m,
            burst_len_epochs: 20,
            burst_prob: 0.01,
        }),
    };
    let traj = TrajectoryConfig::new(kind, origin, a.speed_kmh, a.epochs).with_seed(a.seed);
    let epochs =
        Simulator::new(traj, constellation.satellites, noise)?.collect::<Result<Vec<_>, _>>()?;

    let messages = epochs
        .iter()
        .map(|e| vtrack_core::telemetry::encode_record(&e.record(&a.vehicle)))
        .collect::<Result<Vec<_>, _>>()?;
    write_lines(&a.out_messages, &messages)?;
    let truth: Track = epochs
        .iter()
        .map(|e| TrackSample {
            epoch: e.epoch,
            time: Some(e.time),
            pos: e.truth.pos,
        })
        .collect();
    write_track_csv(&a.out_truth, &truth)?;
    if let Some(path) = &a.out_pseudoranges {
        write_pseudorange_csv(path, epochs.iter().map(|e| &e.pseudoranges))?;
    }
    println!(
        "simulated {} epochs: hdop={:.3} pr_sigma_m={:.3}",
        epochs.len(),
        dops.hdop,
        pr_sigma_m
    );
    Ok(Status::Ok)
}

pub fn decode(a: DecodeArgs) -> Result<Status> {
    let file = MessageFile::load(&a.input)?;
    match write_decoded(&file) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
        other => other?,
    }
    eprintln!("decoded {} of {} lines", file.records.len(), file.lines);
    Ok(if file.all_rejected() {
        Status::AllRejected
    } else {
        Status::Ok
    })
}

fn write_decoded(file: &MessageFile) -> io::Result<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "line,timestamp_utc,vehicle_id,lat,lon,speed_knots,course_deg,rpm,coolant_c,speed_kmh,throttle_pct")?;
    for (i, r) in &file.records {
        let s = &r.status;
        writeln!(
            out,
            "{},{},{},{:.7},{:.7},{:.2},{:.2},{:.2},{:.0},{:.0},{:.1}",
            i + 1,
            format_timestamp(&r.fix.timestamp()),
            r.vehicle_id,
            r.fix.lat_deg,
            r.fix.lon_deg,
            r.fix.speed_knots,
            r.fix.course_deg,
            s.rpm,
            s.coolant_c,
            s.speed_kmh,
            s.throttle_pct
        )?;
    }
    out.flush()
}

pub fn filter(a: FilterArgs) -> Result<Status> {
    let track = match a.mode {
        FilterKind::Position => {
            let input = a
                .input
                .as_deref()
                .context("--in is required in position mode")?;
            let file = MessageFile::load(input)?;
            if file.all_rejected() {
                return Ok(Status::AllRejected);
            }
            let records = file.for_vehicle(a.vehicle.as_deref())?;
            let Some((_, first)) = records.first() else {
                bail!("no messages to filter");
            };
            let reference = GeodeticPoint::new(first.fix.lat_deg, first.fix.lon_deg, 0.0);
            let mut f = PositionFilter::new(reference, a.params.q_m, a.params.r_m);
            records
                .iter()
                .map(|(epoch, r)| TrackSample {
                    epoch: *epoch,
                    time: Some(r.fix.timestamp()),
                    pos: f.step(&r.fix),
                })
                .collect()
        }
        FilterKind::Pseudorange => {
            let path = a
                .pseudoranges
                .as_deref()
                .context("--pseudoranges is required in pseudorange mode")?;
            let epochs = read_pseudorange_csv(path)?;
            if epochs.is_empty() {
                bail!("{}: no pseudorange rows", path.display());
            }
            let run = run_pseudorange_filter(&epochs, &pseudorange_config(&a.params))?;
            if run.predicted_only_count() > 0 {
                warn!(
                    "{} epochs had fewer than 4 satellites",
                    run.predicted_only_count()
                );
            }
            run.track()
        }
    };
    write_track_csv(&a.out, &track)?;
    println!(
        "wrote {} filtered positions to {}",
        track.len(),
        a.out.display()
    );
    Ok(Status::Ok)
}

/// A track CSV (detected by its header) or a message file.
fn load_any_track(path: &Path) -> Result<(Track, bool)> {
    let first = read_lines(path)?.into_iter().next().unwrap_or_default();
    if first.trim() == TRACK_HEADER.join(",") {
        return Ok((read_track_csv(path)?, false));
    }
    let file = MessageFile::load(path)?;
    Ok((file.raw_track(None)?, file.all_rejected()))
}

pub fn eval(a: EvalArgs) -> Result<Status> {
    let (raw, raw_rejected) = load_any_track(&a.raw)?;
    let (filtered, filt_rejected) = load_any_track(&a.filtered)?;
    if raw_rejected || filt_rejected {
        return Ok(Status::AllRejected);
    }
    let truth = a.truth.as_deref().map(read_track_csv).transpose()?;

    let mut inputs = vec![&raw, &filtered];
    inputs.extend(truth.as_ref());
    let aligned = align_by_epoch(&inputs);
    let dropped = raw.len().max(filtered.len()) - aligned[0].len();
    if dropped > 0 {
        info!("{dropped} epochs not present in every input were skipped");
    }
    let cmp = compare(&aligned[0], &aligned[1], aligned.get(2))?;
    println!("{cmp}");
    if let Some(out) = &a.out {
        let rows = [
            AccuracyReport::CSV_HEADER.to_string(),
            cmp.raw.csv_row("raw"),
            cmp.filtered.csv_row("filtered"),
        ];
        write_lines(out, rows)?;
    }
    Ok(Status::Ok)
}

pub fn kml(a: KmlArgs) -> Result<Status> {
    let file = MessageFile::load(&a.input)?;
    if file.all_rejected() {
        return Ok(Status::AllRejected);
    }
    let records = file.for_vehicle(a.vehicle.as_deref())?;
    let Some((_, first)) = records.first() else {
        bail!("no messages for the requested vehicle");
    };
    let vehicle_id = first.vehicle_id.clone();

    let mut points: Vec<TrackPoint> = records
        .iter()
        .map(|(_, r)| TrackPoint {
            time: r.fix.timestamp(),
            pos: GeodeticPoint::new(r.fix.lat_deg, r.fix.lon_deg, 0.0),
            status: r.status,
            source: Source::Raw,
        })
        .collect();
    if let Some(path) = &a.filtered {
        let by_epoch: BTreeMap<u64, &TelemetryRecord> =
            records.iter().map(|(e, r)| (*e, r)).collect();
        let filtered = read_track_csv(path)?;
        let before = points.len();
        points.extend(filtered.samples.iter().filter_map(|s| {
            by_epoch.get(&s.epoch).map(|r| TrackPoint {
                time: r.fix.timestamp(),
                pos: s.pos,
                status: r.status,
                source: Source::Filtered,
            })
        }));
        info!("{} filtered points matched", points.len() - before);
    }
    let doc = emit_track_document(&vehicle_id, &points)?;
    write_document(&a.out, &doc)?;
    println!("wrote {} to {}", vehicle_id, a.out.display());
    Ok(Status::Ok)
}

pub fn station(a: StationArgs) -> Result<Status> {
    let filter = match a.filter {
        StationFilter::Off => FilterMode::Off,
        StationFilter::Position => FilterMode::Position {
            q_m: a.params.q_m,
            r_m: a.params.r_m,
        },
        StationFilter::Pseudorange => {
            let path = a
                .pseudoranges
                .clone()
                .context("--pseudoranges is required with --filter pseudorange")?;
            FilterMode::pseudorange(path, pseudorange_config(&a.params))
        }
    };
    let config = StationConfig {
        filter,
        kml_every_n: a.kml_every_n,
        ..StationConfig::new(a.input, a.out_dir)
    };

    let shutdown = Arc::new(AtomicBool::new(false));
    {
        let flag = Arc::clone(&shutdown);
        ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst))
            .context("installing Ctrl-C handler")?;
    }
    let summary = station::run(&config, shutdown)?;

    let c = summary.counters;
    println!(
        "received={} accepted={} rejected_checksum={} rejected_malformed={} rejected_range={}",
        c.received, c.accepted, c.rejected_checksum, c.rejected_malformed, c.rejected_range
    );
    for v in &summary.vehicles {
        let fmt = |r: &Option<AccuracyReport>| {
            r.map_or("n/a".to_string(), |r| format!("{:.2}", r.two_drms_m))
        };
        println!(
            "{}: accepted={} rejected={} raw_2drms_m={} filtered_2drms_m={}",
            v.vehicle_id,
            v.counters.accepted,
            v.counters.rejected,
            fmt(&v.raw),
            fmt(&v.filtered)
        );
    }
    Ok(if c.received > 0 && c.accepted == 0 {
        Status::AllRejected
    } else {
        Status::Ok
    })
}
