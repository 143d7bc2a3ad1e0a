use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::excerpt::parse_json_document;
use super::{ArtifactError, Extras, JsonFields, Parsed};
use crate::geo::valid_coordinate;
use crate::time::{Timestamp, MILLIS_THRESHOLD};

/// `lastPosition` of `gnssSettings.json`. Coordinates are optional because
/// handed-over copies may be masked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LastPosition {
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub altitude: Option<f64>,
    /// m/s.
    pub speed: Option<f64>,
    /// Epoch milliseconds as stored.
    pub timestamp: i64,
    pub time: Timestamp,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnssSettings {
    pub last_position: LastPosition,
    pub extras: Extras,
}

pub fn parse_gnss_settings(bytes: &[u8]) -> Result<Parsed<GnssSettings>, ArtifactError> {
    let (doc, redacted) = parse_json_document(bytes)?;
    let Value::Object(map) = doc else {
        return Err(ArtifactError::invalid("gnssSettings", "top level is not an object"));
    };
    let mut top = JsonFields::new(map);
    let lp = top.take_object(&["lastPosition"]).ok_or_else(|| ArtifactError::MissingField("lastPosition".into()))?;
    let mut f = JsonFields::new(lp);
    let mut warnings = Vec::new();
    if redacted {
        warnings.push("document carries redaction marks; masked values read as null".to_string());
    }

    let raw_ts = f.take(&["timestamp"]).ok_or_else(|| ArtifactError::MissingField("lastPosition.timestamp".into()))?;
    let timestamp = raw_ts
        .as_i64()
        .or_else(|| raw_ts.as_f64().filter(|v| v.fract() == 0.0).map(|v| v as i64))
        .ok_or_else(|| ArtifactError::invalid("lastPosition.timestamp", format!("{raw_ts} is not an integer")))?;
    if timestamp <= MILLIS_THRESHOLD {
        return Err(ArtifactError::invalid(
            "lastPosition.timestamp",
            format!("{timestamp} is not of millisecond magnitude"),
        ));
    }
    let time = Timestamp::from_millis(timestamp)
        .ok_or_else(|| ArtifactError::invalid("lastPosition.timestamp", "out of range"))?;

    let latitude = f.take_f64(&["latitude", "lat"]);
    let longitude = f.take_f64(&["longitude", "lon", "lng"]);
    if let (Some(la), Some(lo)) = (latitude, longitude) {
        if !valid_coordinate(la, lo) {
            return Err(ArtifactError::CoordinateOutOfRange(la, lo));
        }
    }
    // Masked coordinates come through as null; drop the key rather than
    // keep a null in extras.
    for key in ["latitude", "longitude"] {
        if f.take(&[key]).is_some_and(|v| !v.is_null()) {
            warnings.push(format!("lastPosition.{key} not numeric"));
        }
    }
    if latitude.is_none() || longitude.is_none() {
        warnings.push("last position coordinates unavailable".into());
    }

    let pos = LastPosition {
        latitude,
        longitude,
        altitude: f.take_f64(&["altitude"]),
        speed: f.take_f64(&["speed"]),
        timestamp,
        time,
        extras: f.into_extras(),
    };
    Ok(Parsed::new(GnssSettings { last_position: pos, extras: top.into_extras() }, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_document() {
        let doc = br#"{"version": 1, "lastPosition": {"latitude": 48.1, "longitude": 11.5, "altitude": 520.0,
            "speed": 0, "timestamp": 1686737311649, "accuracy": 4.2}}"#;
        let g = parse_gnss_settings(doc).unwrap();
        assert!(g.warnings.is_empty());
        let p = &g.value.last_position;
        assert_eq!(p.speed, Some(0.0));
        assert_eq!(p.extras["accuracy"], 4.2);
        assert_eq!(g.value.extras["version"], 1);
        assert_eq!(p.time.to_rfc3339(), "2023-06-14T10:08:31.649Z");
    }

    #[test]
    fn missing_last_position() {
        assert!(matches!(parse_gnss_settings(b"{}"), Err(ArtifactError::MissingField(_))));
    }

    #[test]
    fn seconds_rejected() {
        let doc = br#"{"lastPosition": {"timestamp": 1686737311}}"#;
        assert!(matches!(parse_gnss_settings(doc), Err(ArtifactError::InvalidValue { .. })));
    }

    #[test]
    fn out_of_range() {
        let doc = br#"{"lastPosition": {"latitude": 91, "longitude": 0, "timestamp": 1686737311649}}"#;
        assert!(matches!(parse_gnss_settings(doc), Err(ArtifactError::CoordinateOutOfRange(..))));
    }
}
