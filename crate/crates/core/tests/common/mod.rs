#![allow(dead_code)]

use vtrack_core::geodesy::GeodeticPoint;
use vtrack_core::gnss_sim::{
    build_constellation, Constellation, NoiseModel, SimEpoch, Simulator, TrajectoryConfig,
    TrajectoryKind,
};

pub fn amman() -> GeodeticPoint {
    GeodeticPoint::new(31.9539, 35.9106, 780.0)
}

pub fn simulate(
    kind: TrajectoryKind,
    epochs: usize,
    n_sats: usize,
    noise: NoiseModel,
    seed: u64,
) -> (Constellation, Vec<SimEpoch>) {
    let constellation = build_constellation(n_sats, &amman(), seed).expect("constellation");
    let traj = TrajectoryConfig::new(kind, amman(), 40.0, epochs).with_seed(seed);
    let sim = Simulator::new(traj, constellation.satellites.clone(), noise).expect("simulator");
    let run = sim.collect::<Result<Vec<_>, _>>().expect("simulation");
    (constellation, run)
}

pub fn messages(run: &[SimEpoch], vehicle_id: &str) -> Vec<String> {
    run.iter()
        .map(|e| vtrack_core::telemetry::encode_record(&e.record(vehicle_id)).expect("encodable"))
        .collect()
}

/// Flip one character of the GPRMC body so its checksum no longer matches.
pub fn corrupt(msg: &str) -> String {
    let mut b = msg.as_bytes().to_vec();
    b[10] = if b[10] == b'9' { b'8' } else { b'9' };
    String::from_utf8(b).unwrap()
}
