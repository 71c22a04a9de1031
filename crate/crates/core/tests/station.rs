mod common;

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use common::{corrupt, messages, simulate};
use vtrack_core::gnss_sim::{NoiseModel, TrajectoryKind};
use vtrack_core::io::write_pseudorange_csv;
use vtrack_core::kalman::FilterConfig;
use vtrack_core::kml::read_csv;
use vtrack_core::station::{
    run, run_lines, FilterMode, IngestOutcome, InputSource, RejectReason, Station, StationConfig,
    ACCURACY_FILE,
};

fn position_filter() -> FilterMode {
    FilterMode::Position {
        q_m: 2.0,
        r_m: 15.0,
    }
}

fn sample_messages(n: usize, id: &str) -> Vec<String> {
    let (_, run) = simulate(
        TrajectoryKind::Line { heading_deg: 45.0 },
        n,
        7,
        NoiseModel::white(5.0),
        3,
    );
    messages(&run, id)
}

#[test]
fn counts_are_conserved_and_checksum_failures_touch_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = StationConfig {
        filter: position_filter(),
        ..StationConfig::new(InputSource::Stdin, dir.path())
    };
    let station = Station::new(&config).unwrap();

    let good = sample_messages(3, "VAN-1");
    assert_eq!(
        station
            .ingest_line(&corrupt(&sample_messages(1, "VAN-9")[0]))
            .unwrap(),
        IngestOutcome::Rejected(RejectReason::Checksum)
    );
    assert!(station.vehicle_ids().is_empty());
    assert!(!dir.path().join("VAN-9.csv").exists());

    for m in &good {
        assert!(matches!(
            station.ingest_line(m).unwrap(),
            IngestOutcome::Accepted { .. }
        ));
    }
    let before = station
        .with_session("VAN-1", |s| (s.counters(), s.raw_track().clone()))
        .unwrap();
    assert_eq!(
        station.ingest_line(&corrupt(&good[0])).unwrap(),
        IngestOutcome::Rejected(RejectReason::Checksum)
    );
    let after = station
        .with_session("VAN-1", |s| (s.counters(), s.raw_track().clone()))
        .unwrap();
    assert_eq!(before, after);

    assert_eq!(
        station.ingest_line("").unwrap(),
        IngestOutcome::Rejected(RejectReason::Malformed)
    );
    assert_eq!(
        station.ingest_line("hello").unwrap(),
        IngestOutcome::Rejected(RejectReason::Malformed)
    );

    let c = station.counters();
    assert_eq!(
        (
            c.received,
            c.accepted,
            c.rejected_checksum,
            c.rejected_malformed
        ),
        (7, 3, 2, 2)
    );
    assert!(c.is_conserved());
}

#[test]
fn range_violation_is_attributed_to_known_vehicle() {
    let dir = tempfile::tempdir().unwrap();
    let config = StationConfig::new(InputSource::Stdin, dir.path());
    let station = Station::new(&config).unwrap();
    station
        .ingest_line(&sample_messages(1, "CAR-2")[0])
        .unwrap();

    let payload = "OBD,CAR-2,99999.00,90,50,10.0";
    let obd = vtrack_core::nmea::frame(payload).unwrap();
    let gps = sample_messages(1, "CAR-2")[0]
        .split(';')
        .next()
        .unwrap()
        .to_string();
    let bad = format!("{gps};{obd}");
    assert_eq!(
        station.ingest_line(&bad).unwrap(),
        IngestOutcome::Rejected(RejectReason::Range)
    );
    let counters = station.with_session("CAR-2", |s| s.counters()).unwrap();
    assert_eq!((counters.accepted, counters.rejected), (1, 1));
    assert_eq!(station.counters().rejected_range, 1);
}

#[test]
fn kml_is_written_every_n_points_and_at_finish() {
    let dir = tempfile::tempdir().unwrap();
    let config = StationConfig {
        kml_every_n: 5,
        ..StationConfig::new(InputSource::Stdin, dir.path())
    };
    let station = Station::new(&config).unwrap();
    let msgs = sample_messages(7, "BUS-3");
    let kml = dir.path().join("BUS-3.kml");
    for m in &msgs[..4] {
        station.ingest_line(m).unwrap();
    }
    assert!(!kml.exists());
    station.ingest_line(&msgs[4]).unwrap();
    assert!(kml.exists());
    assert_eq!(read_csv(&dir.path().join("BUS-3.csv")).unwrap().len(), 5);

    for m in &msgs[5..] {
        station.ingest_line(m).unwrap();
    }
    let summary = station.finish().unwrap();
    assert_eq!(read_csv(&dir.path().join("BUS-3.csv")).unwrap().len(), 7);
    let text = std::fs::read_to_string(&kml).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let line = doc
        .descendants()
        .find(|n| n.has_tag_name("coordinates"))
        .unwrap();
    assert_eq!(line.text().unwrap().split_whitespace().count(), 7);

    let v = &summary.vehicles[0];
    assert!(v.raw.is_some() && v.filtered.is_some());
    let acc = std::fs::read_to_string(dir.path().join(ACCURACY_FILE)).unwrap();
    assert!(acc.contains("BUS-3:raw,mean,7,"));
    assert!(acc.contains("BUS-3:filtered,mean,7,"));
}

#[test]
fn reruns_are_byte_identical_and_truncate() {
    let dir = tempfile::tempdir().unwrap();
    let mut msgs = sample_messages(40, "A-1");
    msgs.extend(sample_messages(30, "B-2"));
    msgs[7] = corrupt(&msgs[7]);

    let read_all = || {
        let mut names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        names
            .iter()
            .map(|p| (p.clone(), std::fs::read(p).unwrap()))
            .collect::<Vec<_>>()
    };
    run_lines(&msgs, dir.path(), position_filter(), 10).unwrap();
    let first = read_all();
    run_lines(&msgs, dir.path(), position_filter(), 10).unwrap();
    assert_eq!(first, read_all());
    assert_eq!(first.len(), 5);
}

#[test]
fn file_input_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    let mut bytes = sample_messages(12, "T-9").join("\n").into_bytes();
    bytes.extend_from_slice(b"\n\xff\xfe garbage\n");
    std::fs::write(&input, bytes).unwrap();
    let out = dir.path().join("out");
    let config = StationConfig {
        filter: FilterMode::Off,
        ..StationConfig::new(InputSource::File(input), &out)
    };
    let summary = run(&config, Arc::new(AtomicBool::new(false))).unwrap();
    assert_eq!(summary.counters.accepted, 12);
    assert_eq!(summary.counters.rejected_malformed, 1);
    let rows = read_csv(&out.join("T-9.csv")).unwrap();
    assert!(rows.iter().all(|r| r.row.filtered.is_none()));
    assert!(summary.vehicles[0].filtered.is_none());
}

#[test]
fn pseudorange_side_channel_fills_filtered_column() {
    let dir = tempfile::tempdir().unwrap();
    let (_, sim) = simulate(TrajectoryKind::Static, 30, 8, NoiseModel::white(5.0), 11);
    let pr_path = dir.path().join("pr.csv");
    write_pseudorange_csv(&pr_path, sim.iter().map(|e| &e.pseudoranges)).unwrap();
    let mut msgs = messages(&sim, "PR-1");
    msgs.remove(4);

    let out = dir.path().join("out");
    let mode =
        FilterMode::pseudorange(pr_path, FilterConfig::default().with_measurement_sigma(5.0));
    run_lines(&msgs, &out, mode, 10).unwrap();
    let rows = read_csv(&out.join("PR-1.csv")).unwrap();
    assert_eq!(rows.len(), 29);
    for r in &rows {
        let f = r.row.filtered.expect("matched epoch");
        let (e, n) = vtrack_core::geodesy::enu_offset_m(&common::amman(), &f).unwrap();
        assert!(e.hypot(n) < 100.0);
    }
}

#[test]
fn tcp_connections_feed_one_station() {
    let dir = tempfile::tempdir().unwrap();
    let config = StationConfig::new(InputSource::Tcp(0), dir.path());
    let station = Arc::new(Station::new(&config).unwrap());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let shutdown = Arc::new(AtomicBool::new(false));
    let server = {
        let station = Arc::clone(&station);
        let shutdown = Arc::clone(&shutdown);
        thread::spawn(move || station.serve_tcp(listener, shutdown))
    };

    let senders: Vec<_> = ["NET-1", "NET-2"]
        .into_iter()
        .map(|id| {
            let msgs = sample_messages(20, id);
            thread::spawn(move || {
                let mut s = TcpStream::connect(addr).unwrap();
                for m in msgs {
                    writeln!(s, "{m}").unwrap();
                }
                writeln!(s, "junk").unwrap();
            })
        })
        .collect();
    for s in senders {
        s.join().unwrap();
    }
    for _ in 0..200 {
        if station.counters().received == 42 {
            break;
        }
        thread::sleep(Duration::from_millis(20));
    }
    shutdown.store(true, std::sync::atomic::Ordering::SeqCst);
    server.join().unwrap().unwrap();

    let summary = station.finish().unwrap();
    assert_eq!(summary.counters.received, 42);
    assert_eq!(summary.counters.accepted, 40);
    assert_eq!(summary.counters.rejected_malformed, 2);
    assert_eq!(station.vehicle_ids(), vec!["NET-1", "NET-2"]);
}

#[test]
fn input_source_parsing() {
    assert_eq!("stdin".parse::<InputSource>().unwrap(), InputSource::Stdin);
    assert_eq!(
        "tcp:5000".parse::<InputSource>().unwrap(),
        InputSource::Tcp(5000)
    );
    assert_eq!(
        "file:/tmp/x".parse::<InputSource>().unwrap(),
        InputSource::File("/tmp/x".into())
    );
    assert!("tcp:abc".parse::<InputSource>().is_err());
    assert!("ftp:x".parse::<InputSource>().is_err());
}
