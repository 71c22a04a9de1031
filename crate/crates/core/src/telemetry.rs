//! Tracking message codec: one `$GPRMC` fix plus four OBD-II engine
//! parameters, sized to fit a single 160-character SMS.
//!
//! Wire layout, one message per line:
//!
//! ```text
//! $GPRMC,...*hh;$OBD,<vehicle_id>,<rpm>,<coolant_c>,<speed_kmh>,<throttle_pct>*hh
//! ```
//!
//! Both segments carry their own NMEA-style checksum.

use thiserror::Error;

use crate::nmea::{self, GprmcFix, NmeaError};

/// Single-part GSM SMS limit (GSM 7-bit alphabet).
pub const MAX_MESSAGE_LEN: usize = 160;
pub const MAX_VEHICLE_ID_LEN: usize = 16;
pub const OBD_ID: &str = "OBD";

pub const PID_COOLANT_TEMP: u8 = 0x05;
pub const PID_ENGINE_RPM: u8 = 0x0C;
pub const PID_VEHICLE_SPEED: u8 = 0x0D;
pub const PID_THROTTLE_POS: u8 = 0x11;

pub const RPM_RANGE: (f64, f64) = (0.0, 16_383.75);
pub const COOLANT_RANGE: (f64, f64) = (-40.0, 215.0);
pub const SPEED_RANGE: (f64, f64) = (0.0, 255.0);
pub const THROTTLE_RANGE: (f64, f64) = (0.0, 100.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObdError {
    #[error("unsupported PID 0x{0:02X}")]
    UnknownPid(u8),
    #[error("PID 0x{pid:02X} expects {expected} data bytes, got {got}")]
    WrongLength {
        pid: u8,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TelemetryError {
    #[error("encoded message is {0} characters, exceeds one SMS ({MAX_MESSAGE_LEN})")]
    Overlength(usize),
    #[error("invalid vehicle id {0:?}")]
    InvalidVehicleId(String),
    #[error("checksum mismatch in {segment} segment")]
    ChecksumMismatch { segment: &'static str },
    #[error("malformed message: {0}")]
    MalformedLayout(String),
    #[error("value out of range: {0}")]
    RangeViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObdQuantity {
    EngineRpm,
    CoolantTempC,
    VehicleSpeedKmh,
    ThrottlePct,
}

impl ObdQuantity {
    pub fn unit(&self) -> &'static str {
        match self {
            Self::EngineRpm => "rpm",
            Self::CoolantTempC => "°C",
            Self::VehicleSpeedKmh => "km/h",
            Self::ThrottlePct => "%",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObdValue {
    pub quantity: ObdQuantity,
    pub value: f64,
}

/// Mode 01 scalings for the four supported PIDs.
pub fn decode_obd(pid: u8, data: &[u8]) -> Result<ObdValue, ObdError> {
    let expected = match pid {
        PID_ENGINE_RPM => 2,
        PID_COOLANT_TEMP | PID_VEHICLE_SPEED | PID_THROTTLE_POS => 1,
        other => return Err(ObdError::UnknownPid(other)),
    };
    if data.len() != expected {
        return Err(ObdError::WrongLength {
            pid,
            expected,
            got: data.len(),
        });
    }
    let a = data[0] as f64;
    let (quantity, value) = match pid {
        PID_ENGINE_RPM => (ObdQuantity::EngineRpm, (256.0 * a + data[1] as f64) / 4.0),
        PID_COOLANT_TEMP => (ObdQuantity::CoolantTempC, a - 40.0),
        PID_VEHICLE_SPEED => (ObdQuantity::VehicleSpeedKmh, a),
        _ => (ObdQuantity::ThrottlePct, a * 100.0 / 255.0),
    };
    Ok(ObdValue { quantity, value })
}

/// Inverse of [`decode_obd`], rounding to the nearest representable raw value.
pub fn encode_obd(quantity: ObdQuantity, value: f64) -> (u8, Vec<u8>) {
    let byte = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    match quantity {
        ObdQuantity::EngineRpm => {
            let raw = (value * 4.0).round().clamp(0.0, 65_535.0) as u16;
            (PID_ENGINE_RPM, raw.to_be_bytes().to_vec())
        }
        ObdQuantity::CoolantTempC => (PID_COOLANT_TEMP, vec![byte(value + 40.0)]),
        ObdQuantity::VehicleSpeedKmh => (PID_VEHICLE_SPEED, vec![byte(value)]),
        ObdQuantity::ThrottlePct => (PID_THROTTLE_POS, vec![byte(value * 255.0 / 100.0)]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EngineStatus {
    pub rpm: f64,
    pub coolant_c: f64,
    pub speed_kmh: f64,
    pub throttle_pct: f64,
}

impl EngineStatus {
    pub fn check(&self) -> Result<(), TelemetryError> {
        let fields = [
            ("rpm", self.rpm, RPM_RANGE),
            ("coolant_c", self.coolant_c, COOLANT_RANGE),
            ("speed_kmh", self.speed_kmh, SPEED_RANGE),
            ("throttle_pct", self.throttle_pct, THROTTLE_RANGE),
        ];
        for (name, v, (lo, hi)) in fields {
            if !(v.is_finite() && v >= lo && v <= hi) {
                return Err(TelemetryError::RangeViolation(format!(
                    "{name}={v} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Round-trip through the OBD raw encodings, as a real ECU would report.
    pub fn quantized(&self) -> EngineStatus {
        let q = |quantity, v| {
            let (pid, data) = encode_obd(quantity, v);
            decode_obd(pid, &data)
                .expect("encode_obd emits supported pids")
                .value
        };
        EngineStatus {
            rpm: q(ObdQuantity::EngineRpm, self.rpm),
            coolant_c: q(ObdQuantity::CoolantTempC, self.coolant_c),
            speed_kmh: q(ObdQuantity::VehicleSpeedKmh, self.speed_kmh),
            throttle_pct: q(ObdQuantity::ThrottlePct, self.throttle_pct),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub vehicle_id: String,
    pub fix: GprmcFix,
    pub status: EngineStatus,
}

pub fn is_valid_vehicle_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= MAX_VEHICLE_ID_LEN
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
}

/// Format with fixed decimals, never emitting a negative zero.
fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

pub fn encode_record(r: &TelemetryRecord) -> Result<String, TelemetryError> {
    if !is_valid_vehicle_id(&r.vehicle_id) {
        return Err(TelemetryError::InvalidVehicleId(r.vehicle_id.clone()));
    }
    r.status.check()?;
    let gprmc =
        nmea::serialize_gprmc(&r.fix).map_err(|e| TelemetryError::RangeViolation(e.to_string()))?;
    let obd_payload = format!(
        "{OBD_ID},{},{},{},{},{}",
        r.vehicle_id,
        fixed(r.status.rpm, 2),
        fixed(r.status.coolant_c, 0),
        fixed(r.status.speed_kmh, 0),
        fixed(r.status.throttle_pct, 1),
    );
    let obd = nmea::frame(&obd_payload).expect("payload built from checked fields");
    let msg = format!("{gprmc};{obd}");
    if msg.len() > MAX_MESSAGE_LEN {
        return Err(TelemetryError::Overlength(msg.len()));
    }
    Ok(msg)
}

fn map_frame_error(segment: &'static str, e: NmeaError) -> TelemetryError {
    match e {
        NmeaError::ChecksumMismatch { .. } => TelemetryError::ChecksumMismatch { segment },
        other => TelemetryError::MalformedLayout(format!("{segment} segment: {other}")),
    }
}

fn obd_number(name: &str, s: &str) -> Result<f64, TelemetryError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| TelemetryError::MalformedLayout(format!("{name} is not numeric: {s:?}")))
}

pub fn decode_record(msg: &str) -> Result<TelemetryRecord, TelemetryError> {
    let msg = msg.trim_end_matches(['\r', '\n']);
    if msg.len() > MAX_MESSAGE_LEN {
        return Err(TelemetryError::MalformedLayout(format!(
            "{} characters exceeds one SMS",
            msg.len()
        )));
    }
    let mut parts = msg.split(';');
    let (gps, obd) = match (parts.next(), parts.next(), parts.next()) {
        (Some(g), Some(o), None) => (g, o),
        _ => {
            return Err(TelemetryError::MalformedLayout(
                "expected exactly two ';'-separated segments".into(),
            ))
        }
    };

    let gps = nmea::parse_sentence(gps).map_err(|e| map_frame_error("GPRMC", e))?;
    let obd = nmea::parse_sentence(obd).map_err(|e| map_frame_error("OBD", e))?;

    let fix = nmea::parse_gprmc(&gps).map_err(|e| match e {
        NmeaError::OutOfRangeCoordinate { .. } => TelemetryError::RangeViolation(e.to_string()),
        other => TelemetryError::MalformedLayout(format!("GPRMC segment: {other}")),
    })?;

    let fields: Vec<&str> = obd.fields().collect();
    if fields.len() != 6 || fields[0] != OBD_ID {
        return Err(TelemetryError::MalformedLayout(format!(
            "OBD segment has {} fields",
            fields.len()
        )));
    }
    let vehicle_id = fields[1];
    if !is_valid_vehicle_id(vehicle_id) {
        return Err(TelemetryError::MalformedLayout(format!(
            "invalid vehicle id {vehicle_id:?}"
        )));
    }
    let status = EngineStatus {
        rpm: obd_number("rpm", fields[2])?,
        coolant_c: obd_number("coolant_c", fields[3])?,
        speed_kmh: obd_number("speed_kmh", fields[4])?,
        throttle_pct: obd_number("throttle_pct", fields[5])?,
    };
    status.check()?;

    Ok(TelemetryRecord {
        vehicle_id: vehicle_id.to_string(),
        fix,
        status,
    })
}

/// Best-effort vehicle id of a message that failed to decode. Only returned
/// when the OBD segment checksum is intact.
pub fn sniff_vehicle_id(msg: &str) -> Option<String> {
    let obd = msg.trim_end_matches(['\r', '\n']).split(';').nth(1)?;
    let s = nmea::parse_sentence(obd).ok()?;
    let id = s.fields().nth(1)?;
    is_valid_vehicle_id(id).then(|| id.to_string())
}
