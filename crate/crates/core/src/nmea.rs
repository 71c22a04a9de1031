//! NMEA 0183 framing and the `$GPRMC` sentence.
//!
//! A line is `$<payload>*hh` with optional CR/LF, where `hh` is the XOR of
//! every byte strictly between `$` and `*`, written as two uppercase hex
//! digits.

use std::fmt;

use chrono::{Datelike, NaiveDate, NaiveTime, Timelike};
use thiserror::Error;

/// Longest accepted line, counting `$`, checksum and CR/LF.
pub const MAX_SENTENCE_LEN: usize = 82;

pub const GPRMC_ID: &str = "GPRMC";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NmeaError {
    #[error("payload may not contain '$' or '*'")]
    ReservedCharacter,
    #[error("sentence does not start with '$'")]
    MissingDollar,
    #[error("sentence has no '*' checksum delimiter")]
    MissingStar,
    #[error("checksum field is not two hex digits: {0:?}")]
    MalformedChecksum(String),
    #[error("checksum mismatch: sentence says {expected}, payload hashes to {computed}")]
    ChecksumMismatch { expected: String, computed: String },
    #[error("sentence is {0} characters long (limit {MAX_SENTENCE_LEN})")]
    Overlength(usize),
    #[error("expected a GPRMC sentence, got {0}")]
    WrongSentenceType(String),
    #[error("GPRMC carries {0} fields, expected 11 or 12")]
    FieldCountMismatch(usize),
    #[error("field {field} is not numeric: {value:?}")]
    NonNumericField { field: &'static str, value: String },
    #[error("invalid hemisphere indicator {0:?}")]
    HemisphereInvalid(String),
    #[error("coordinate out of range: lat {lat_deg}, lon {lon_deg}")]
    OutOfRangeCoordinate { lat_deg: f64, lon_deg: f64 },
}

/// Two uppercase hex digits of the XOR over `payload`.
pub fn compute_checksum(payload: &str) -> Result<String, NmeaError> {
    if payload.contains(['$', '*']) {
        return Err(NmeaError::ReservedCharacter);
    }
    Ok(format!("{:02X}", xor_bytes(payload)))
}

fn xor_bytes(payload: &str) -> u8 {
    payload.bytes().fold(0u8, |acc, b| acc ^ b)
}

/// Wrap a payload into a full `$...*hh` sentence (no line terminator).
pub fn frame(payload: &str) -> Result<String, NmeaError> {
    let cs = compute_checksum(payload)?;
    Ok(format!("${payload}*{cs}"))
}

/// A framed sentence whose checksum has been verified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSentence {
    pub payload: String,
    pub checksum: String,
}

impl RawSentence {
    /// The leading comma-separated token, e.g. `GPRMC`.
    pub fn sentence_id(&self) -> &str {
        self.payload.split(',').next().unwrap_or("")
    }

    pub fn fields(&self) -> impl Iterator<Item = &str> {
        self.payload.split(',')
    }
}

impl fmt::Display for RawSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}*{}", self.payload, self.checksum)
    }
}

pub fn parse_sentence(raw: &str) -> Result<RawSentence, NmeaError> {
    let total_len = raw.len();
    let line = raw.trim_end_matches(['\r', '\n']);
    if total_len > MAX_SENTENCE_LEN {
        return Err(NmeaError::Overlength(total_len));
    }
    let body = line.strip_prefix('$').ok_or(NmeaError::MissingDollar)?;
    let (payload, checksum) = body.split_once('*').ok_or(NmeaError::MissingStar)?;
    if checksum.len() != 2 || !checksum.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(NmeaError::MalformedChecksum(checksum.to_string()));
    }
    if payload.contains('$') {
        return Err(NmeaError::ReservedCharacter);
    }
    // Lowercase hex is tolerated on input; output is always uppercase.
    let expected = checksum.to_ascii_uppercase();
    let computed = format!("{:02X}", xor_bytes(payload));
    if expected != computed {
        return Err(NmeaError::ChecksumMismatch { expected, computed });
    }
    Ok(RawSentence {
        payload: payload.to_string(),
        checksum: expected,
    })
}

/// One `$GPRMC` fix.
#[derive(Debug, Clone, PartialEq)]
pub struct GprmcFix {
    pub utc_time: NaiveTime,
    /// Status `A` is true, `V` (void) is false.
    pub valid: bool,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub speed_knots: f64,
    pub course_deg: f64,
    pub date: NaiveDate,
    /// Signed, east positive. Carried through when present.
    pub magnetic_variation_deg: Option<f64>,
}

impl GprmcFix {
    pub fn timestamp(&self) -> chrono::NaiveDateTime {
        self.date.and_time(self.utc_time)
    }

    pub fn check(&self) -> Result<(), NmeaError> {
        let ok = self.lat_deg.is_finite()
            && self.lon_deg.is_finite()
            && (-90.0..=90.0).contains(&self.lat_deg)
            && (-180.0..=180.0).contains(&self.lon_deg);
        if !ok {
            return Err(NmeaError::OutOfRangeCoordinate {
                lat_deg: self.lat_deg,
                lon_deg: self.lon_deg,
            });
        }
        Ok(())
    }
}

/// Result of reading a line that may hold any sentence type.
#[derive(Debug, Clone, PartialEq)]
pub enum NmeaOutcome {
    Rmc(GprmcFix),
    /// Well-formed sentence of a type this crate does not interpret.
    Unsupported(String),
}

/// Parse any checksum-valid sentence; non-RMC types are reported, not failed.
pub fn parse_line(line: &str) -> Result<NmeaOutcome, NmeaError> {
    let s = parse_sentence(line)?;
    if s.sentence_id() == GPRMC_ID {
        parse_gprmc(&s).map(NmeaOutcome::Rmc)
    } else {
        Ok(NmeaOutcome::Unsupported(s.sentence_id().to_string()))
    }
}

fn number(field: &'static str, value: &str) -> Result<f64, NmeaError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| NmeaError::NonNumericField {
            field,
            value: value.to_string(),
        })
}

fn optional_number(field: &'static str, value: &str) -> Result<Option<f64>, NmeaError> {
    if value.is_empty() {
        Ok(None)
    } else {
        number(field, value).map(Some)
    }
}

fn digits(field: &'static str, s: &str) -> Result<u32, NmeaError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(NmeaError::NonNumericField {
            field,
            value: s.to_string(),
        });
    }
    Ok(s.parse().expect("ascii digits"))
}

/// `ddmm.mmmm` / `dddmm.mmmm` to unsigned decimal degrees.
fn parse_angle(field: &'static str, value: &str, deg_digits: usize) -> Result<f64, NmeaError> {
    let bad = || NmeaError::NonNumericField {
        field,
        value: value.to_string(),
    };
    if value.len() < deg_digits + 2 || !value.is_char_boundary(deg_digits) {
        return Err(bad());
    }
    let (deg, min) = value.split_at(deg_digits);
    let deg = digits(field, deg).map_err(|_| bad())?;
    if !min.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
        return Err(bad());
    }
    let min: f64 = min.parse().map_err(|_| bad())?;
    if min >= 60.0 {
        return Err(bad());
    }
    Ok(deg as f64 + min / 60.0)
}

fn parse_time(value: &str) -> Result<NaiveTime, NmeaError> {
    let bad = || NmeaError::NonNumericField {
        field: "utc_time",
        value: value.to_string(),
    };
    if value.len() < 6 || !value.is_ascii() {
        return Err(bad());
    }
    let (hms, frac) = value.split_at(6);
    let h = digits("utc_time", &hms[0..2])?;
    let m = digits("utc_time", &hms[2..4])?;
    let s = digits("utc_time", &hms[4..6])?;
    let nanos = match frac.strip_prefix('.') {
        None if frac.is_empty() => 0,
        Some(f) if !f.is_empty() && f.len() <= 9 => {
            digits("utc_time", f)? * 10u32.pow(9 - f.len() as u32)
        }
        _ => return Err(bad()),
    };
    NaiveTime::from_hms_nano_opt(h, m, s, nanos).ok_or_else(bad)
}

fn parse_date(value: &str) -> Result<NaiveDate, NmeaError> {
    let bad = || NmeaError::NonNumericField {
        field: "date",
        value: value.to_string(),
    };
    if value.len() != 6 || !value.is_ascii() {
        return Err(bad());
    }
    let d = digits("date", &value[0..2])?;
    let m = digits("date", &value[2..4])?;
    let y = digits("date", &value[4..6])? as i32;
    // Two-digit years pivot at 1980, the start of GPS time.
    let year = if y < 80 { 2000 + y } else { 1900 + y };
    NaiveDate::from_ymd_opt(year, m, d).ok_or_else(bad)
}

pub fn parse_gprmc(s: &RawSentence) -> Result<GprmcFix, NmeaError> {
    let fields: Vec<&str> = s.fields().collect();
    if fields[0] != GPRMC_ID {
        return Err(NmeaError::WrongSentenceType(fields[0].to_string()));
    }
    // 11 data fields (NMEA 2.x) or 12 with the mode indicator (2.3+).
    let n = fields.len() - 1;
    if n != 11 && n != 12 {
        return Err(NmeaError::FieldCountMismatch(n));
    }

    let utc_time = parse_time(fields[1])?;
    let valid = match fields[2] {
        "A" => true,
        "V" => false,
        other => {
            return Err(NmeaError::NonNumericField {
                field: "status",
                value: other.to_string(),
            })
        }
    };
    let lat = parse_angle("latitude", fields[3], 2)?;
    let lat_deg = match fields[4] {
        "N" => lat,
        "S" => -lat,
        other => return Err(NmeaError::HemisphereInvalid(other.to_string())),
    };
    let lon = parse_angle("longitude", fields[5], 3)?;
    let lon_deg = match fields[6] {
        "E" => lon,
        "W" => -lon,
        other => return Err(NmeaError::HemisphereInvalid(other.to_string())),
    };
    // Receivers leave speed/course empty when stationary.
    let speed_knots = optional_number("speed", fields[7])?.unwrap_or(0.0);
    let course = optional_number("course", fields[8])?.unwrap_or(0.0);
    let date = parse_date(fields[9])?;
    let magnetic_variation_deg = match optional_number("magnetic_variation", fields[10])? {
        None => None,
        Some(v) => match fields[11] {
            "E" => Some(v),
            "W" => Some(-v),
            other => return Err(NmeaError::HemisphereInvalid(other.to_string())),
        },
    };

    let fix = GprmcFix {
        utc_time,
        valid,
        lat_deg,
        lon_deg,
        speed_knots,
        course_deg: if course >= 360.0 {
            course % 360.0
        } else {
            course
        },
        date,
        magnetic_variation_deg,
    };
    fix.check()?;
    if speed_knots < 0.0 || course < 0.0 {
        return Err(NmeaError::NonNumericField {
            field: "speed/course",
            value: format!("{},{}", fields[7], fields[8]),
        });
    }
    Ok(fix)
}

/// Angle as integer degrees plus minutes with four decimals. Works in units of
/// 1e-4 minute so that rounding carries into the degree digits.
fn format_angle(value: f64, deg_width: usize) -> String {
    let units = (value.abs() * 600_000.0).round() as u64;
    let deg = units / 600_000;
    let min_units = units % 600_000;
    format!(
        "{deg:0width$}{:02}.{:04}",
        min_units / 10_000,
        min_units % 10_000,
        width = deg_width
    )
}

/// Canonical `$GPRMC` line (no CR/LF).
pub fn serialize_gprmc(fix: &GprmcFix) -> Result<String, NmeaError> {
    fix.check()?;
    let t = fix.utc_time;
    let centis = (t.nanosecond() / 10_000_000).min(99);
    let time = format!(
        "{:02}{:02}{:02}.{:02}",
        t.hour(),
        t.minute(),
        t.second(),
        centis
    );
    let date = format!(
        "{:02}{:02}{:02}",
        fix.date.day(),
        fix.date.month(),
        fix.date.year().rem_euclid(100)
    );
    let mut course = (fix.course_deg.rem_euclid(360.0) * 100.0).round() / 100.0;
    if course >= 360.0 {
        course = 0.0;
    }
    let (var, var_dir) = match fix.magnetic_variation_deg {
        Some(v) => (format!("{:05.1}", v.abs()), if v < 0.0 { "W" } else { "E" }),
        None => (String::new(), ""),
    };
    let payload = format!(
        "{GPRMC_ID},{time},{status},{lat},{ns},{lon},{ew},{speed:06.2},{course:06.2},{date},{var},{var_dir}",
        status = if fix.valid { 'A' } else { 'V' },
        lat = format_angle(fix.lat_deg, 2),
        ns = if fix.lat_deg < 0.0 { 'S' } else { 'N' },
        lon = format_angle(fix.lon_deg, 3),
        ew = if fix.lon_deg < 0.0 { 'W' } else { 'E' },
        speed = fix.speed_knots.max(0.0),
    );
    frame(&payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const REFERENCE: &str = "$GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W*6A";

    fn fix_at(lat: f64, lon: f64) -> GprmcFix {
        GprmcFix {
            utc_time: NaiveTime::from_hms_opt(12, 0, 0).unwrap(),
            valid: true,
            lat_deg: lat,
            lon_deg: lon,
            speed_knots: 0.0,
            course_deg: 0.0,
            date: NaiveDate::from_ymd_opt(2024, 5, 17).unwrap(),
            magnetic_variation_deg: None,
        }
    }

    #[test]
    fn checksum_examples() {
        assert_eq!(compute_checksum("").unwrap(), "00");
        assert_eq!(compute_checksum("A").unwrap(), "41");
        assert_eq!(
            compute_checksum("GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W")
                .unwrap(),
            "6A"
        );
        assert_eq!(compute_checksum("a*b"), Err(NmeaError::ReservedCharacter));
        assert_eq!(compute_checksum("$a"), Err(NmeaError::ReservedCharacter));
    }

    #[test]
    fn sentence_framing() {
        let s = parse_sentence(REFERENCE).unwrap();
        assert_eq!(s.checksum, "6A");
        assert_eq!(s.sentence_id(), "GPRMC");
        assert_eq!(s.to_string(), REFERENCE);
        assert!(parse_sentence(&format!("{REFERENCE}\r\n")).is_ok());
        assert!(parse_sentence(&REFERENCE.replace("*6A", "*6a")).is_ok());

        let flipped = REFERENCE.replacen("4807", "4817", 1);
        assert!(matches!(
            parse_sentence(&flipped),
            Err(NmeaError::ChecksumMismatch { .. })
        ));
        assert_eq!(
            parse_sentence(&REFERENCE.replace('*', ",")),
            Err(NmeaError::MissingStar)
        );
        assert_eq!(
            parse_sentence(&REFERENCE[1..]),
            Err(NmeaError::MissingDollar)
        );
        let long = frame(&"X".repeat(80)).unwrap();
        assert!(matches!(
            parse_sentence(&long),
            Err(NmeaError::Overlength(_))
        ));
        assert!(matches!(
            parse_sentence("$A*4"),
            Err(NmeaError::MalformedChecksum(_))
        ));
        assert!(parse_sentence("$A*41").is_ok());
        assert!(parse_sentence("$A*41x").is_err());
    }

    #[test]
    fn reference_sentence_fields() {
        let fix = parse_gprmc(&parse_sentence(REFERENCE).unwrap()).unwrap();
        assert!((fix.lat_deg - 48.117300).abs() < 1e-6);
        assert!((fix.lon_deg - 11.516667).abs() < 1e-6);
        assert_eq!(fix.speed_knots, 22.4);
        assert_eq!(fix.course_deg, 84.4);
        assert!(fix.valid);
        assert_eq!(fix.date, NaiveDate::from_ymd_opt(1994, 3, 23).unwrap());
        assert_eq!(fix.utc_time, NaiveTime::from_hms_opt(12, 35, 19).unwrap());
        assert_eq!(fix.magnetic_variation_deg, Some(-3.1));
    }

    #[test]
    fn void_status_still_parses_coordinates() {
        let line = frame("GPRMC,123519,V,4807.038,N,01131.000,E,,,230394,,").unwrap();
        let fix = parse_gprmc(&parse_sentence(&line).unwrap()).unwrap();
        assert!(!fix.valid);
        assert!((fix.lat_deg - 48.1173).abs() < 1e-9);
        assert_eq!(fix.speed_knots, 0.0);
    }

    #[test]
    fn zero_coordinates() {
        let line = frame("GPRMC,000000,A,0000.000,N,00000.000,E,0.0,0.0,010100,,").unwrap();
        let fix = parse_gprmc(&parse_sentence(&line).unwrap()).unwrap();
        assert_eq!((fix.lat_deg, fix.lon_deg), (0.0, 0.0));
    }

    #[test]
    fn mode_indicator_accepted() {
        let line = frame("GPRMC,123519.50,A,4807.0380,S,01131.0000,W,1.5,10.0,230324,,,A").unwrap();
        let fix = parse_gprmc(&parse_sentence(&line).unwrap()).unwrap();
        assert!(fix.lat_deg < 0.0 && fix.lon_deg < 0.0);
        assert_eq!(fix.utc_time.nanosecond(), 500_000_000);
        assert_eq!(fix.date.year(), 2024);
    }

    #[test]
    fn gprmc_errors() {
        let gga = parse_sentence(&frame("GPGGA,1,2").unwrap()).unwrap();
        assert_eq!(
            parse_gprmc(&gga),
            Err(NmeaError::WrongSentenceType("GPGGA".into()))
        );
        let short = parse_sentence(&frame("GPRMC,1,2").unwrap()).unwrap();
        assert_eq!(parse_gprmc(&short), Err(NmeaError::FieldCountMismatch(2)));
        let bad_num = parse_sentence(
            &frame("GPRMC,123519,A,48x7.038,N,01131.000,E,022.4,084.4,230394,,").unwrap(),
        )
        .unwrap();
        assert!(matches!(
            parse_gprmc(&bad_num),
            Err(NmeaError::NonNumericField { .. })
        ));
        let bad_hemi = parse_sentence(
            &frame("GPRMC,123519,A,4807.038,Q,01131.000,E,022.4,084.4,230394,,").unwrap(),
        )
        .unwrap();
        assert_eq!(
            parse_gprmc(&bad_hemi),
            Err(NmeaError::HemisphereInvalid("Q".into()))
        );
    }

    #[test]
    fn unsupported_types_are_not_errors() {
        let gga =
            frame("GPGGA,092750.000,5321.6802,N,00630.3372,W,1,8,1.03,61.7,M,55.2,M,,").unwrap();
        assert_eq!(
            parse_line(&gga).unwrap(),
            NmeaOutcome::Unsupported("GPGGA".into())
        );
        assert!(matches!(
            parse_line(REFERENCE).unwrap(),
            NmeaOutcome::Rmc(_)
        ));
    }

    #[test]
    fn canonical_zero_and_hemispheres() {
        let s = serialize_gprmc(&fix_at(0.0, 0.0)).unwrap();
        assert!(s.contains("0000.0000,N"), "{s}");
        assert!(s.contains("00000.0000,E"), "{s}");

        let s = serialize_gprmc(&fix_at(-33.5, -70.25)).unwrap();
        assert!(s.contains("3330.0000,S"), "{s}");
        assert!(s.contains("07015.0000,W"), "{s}");
        assert!(s.len() <= MAX_SENTENCE_LEN);
    }

    #[test]
    fn minute_rounding_carries() {
        let s = serialize_gprmc(&fix_at(10.999_999_99, 0.0)).unwrap();
        assert!(s.contains("1100.0000,N"), "{s}");
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            serialize_gprmc(&fix_at(91.0, 0.0)),
            Err(NmeaError::OutOfRangeCoordinate { .. })
        ));
    }

    fn arb_fix() -> impl Strategy<Value = GprmcFix> {
        (
            -90.0f64..=90.0,
            -180.0f64..=180.0,
            0.0f64..999.0,
            0.0f64..360.0,
            any::<bool>(),
            (0u32..24, 0u32..60, 0u32..60, 0u32..100),
            (1980i32..2079, 1u32..=12, 1u32..=28),
            proptest::option::of(-30.0f64..30.0),
        )
            .prop_map(
                |(lat, lon, speed, course, valid, (h, m, s, cs), (y, mo, d), var)| GprmcFix {
                    utc_time: NaiveTime::from_hms_milli_opt(h, m, s, cs * 10).unwrap(),
                    valid,
                    lat_deg: lat,
                    lon_deg: lon,
                    speed_knots: speed,
                    course_deg: course,
                    date: NaiveDate::from_ymd_opt(y, mo, d).unwrap(),
                    magnetic_variation_deg: var,
                },
            )
    }

    fn course_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(360.0);
        d.min(360.0 - d)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn serialize_parse_round_trip(fix in arb_fix()) {
            let line = serialize_gprmc(&fix).unwrap();
            prop_assert!(line.len() + 2 <= MAX_SENTENCE_LEN);
            let raw = parse_sentence(&line).unwrap();
            prop_assert_eq!(compute_checksum(&raw.payload).unwrap(), raw.checksum.clone());
            let back = parse_gprmc(&raw).unwrap();
            prop_assert!((back.lat_deg - fix.lat_deg).abs() <= 1.9e-6);
            prop_assert!((back.lon_deg - fix.lon_deg).abs() <= 1.9e-6);
            prop_assert!((back.speed_knots - fix.speed_knots).abs() <= 0.05);
            prop_assert!(course_diff(back.course_deg, fix.course_deg) <= 0.05);
            prop_assert_eq!(back.valid, fix.valid);
            prop_assert_eq!(back.utc_time, fix.utc_time);
            prop_assert_eq!(back.date, fix.date);
            prop_assert_eq!(back.magnetic_variation_deg.is_some(), fix.magnetic_variation_deg.is_some());
        }

        #[test]
        fn single_character_corruption_detected(
            fix in arb_fix(),
            pos in any::<prop::sample::Index>(),
            replacement in 0x20u8..0x7f,
        ) {
            let line = serialize_gprmc(&fix).unwrap();
            let star = line.find('*').unwrap();
            let i = 1 + pos.index(star - 1);
            prop_assume!(line.as_bytes()[i] != replacement);
            let mut bytes = line.into_bytes();
            bytes[i] = replacement;
            let corrupted = String::from_utf8(bytes).unwrap();
            prop_assert!(parse_sentence(&corrupted).is_err());
        }
    }
}
