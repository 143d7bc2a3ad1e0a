use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// Epoch values at or above this magnitude are milliseconds, below it seconds.
pub const MILLIS_THRESHOLD: i64 = 1_000_000_000_000;

/// A UTC instant with millisecond resolution.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    /// Returns `None` when the value is outside the representable calendar range.
    pub fn from_millis(ms: i64) -> Option<Self> {
        DateTime::<Utc>::from_timestamp_millis(ms).map(|_| Self(ms))
    }

    pub fn from_secs(secs: i64) -> Option<Self> {
        secs.checked_mul(1000).and_then(Self::from_millis)
    }

    /// Decodes an epoch value whose unit is not recorded alongside it.
    pub fn from_epoch_auto(value: i64) -> Option<Self> {
        if value.unsigned_abs() >= MILLIS_THRESHOLD as u64 {
            Self::from_millis(value)
        } else {
            Self::from_secs(value)
        }
    }

    /// Like [`Timestamp::from_epoch_auto`] for databases that store epochs as REAL.
    pub fn from_epoch_auto_f64(value: f64) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        if value.abs() >= MILLIS_THRESHOLD as f64 {
            Self::from_millis(value.round() as i64)
        } else {
            Self::from_millis((value * 1000.0).round() as i64)
        }
    }

    pub fn millis(self) -> i64 {
        self.0
    }

    pub fn to_datetime(self) -> DateTime<Utc> {
        DateTime::<Utc>::from_timestamp_millis(self.0).expect("range checked at construction")
    }

    /// RFC 3339 with millisecond precision and a `Z` suffix.
    pub fn to_rfc3339(self) -> String {
        self.to_datetime().to_rfc3339_opts(SecondsFormat::Millis, true)
    }

    /// Accepts RFC 3339 as well as the naive `YYYY-MM-DD HH:MM:SS[.fff]` form (read as UTC).
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
            return Self::from_millis(dt.timestamp_millis());
        }
        for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
                return Self::from_millis(dt.and_utc().timestamp_millis());
            }
        }
        None
    }

    pub fn seconds_until(self, later: Timestamp) -> f64 {
        (later.0 - self.0) as f64 / 1000.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Timestamp::parse(&text).ok_or_else(|| de::Error::custom(format!("invalid instant {text:?}")))
    }
}

/// Checks an ISO calendar date such as `2000-01-01`.
pub fn is_iso_date(text: &str) -> bool {
    NaiveDate::parse_from_str(text, "%Y-%m-%d").is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gnss_millis_render() {
        // 1686737311649 ms = 19522 days + 36511.649 s; day 19522 is 2023-06-14
        // and 36511 s is 10:08:31 (cross-checked with Python's datetime).
        let ts = Timestamp::from_epoch_auto(1_686_737_311_649).unwrap();
        assert_eq!(ts.to_rfc3339(), "2023-06-14T10:08:31.649Z");
    }

    #[test]
    fn unit_autodetect() {
        assert_eq!(Timestamp::from_epoch_auto(1_686_737_311).unwrap().millis(), 1_686_737_311_000);
        assert_eq!(Timestamp::from_epoch_auto(MILLIS_THRESHOLD).unwrap().millis(), MILLIS_THRESHOLD);
        assert_eq!(Timestamp::from_epoch_auto(0).unwrap().to_rfc3339(), "1970-01-01T00:00:00.000Z");
    }

    #[test]
    fn out_of_range_is_none() {
        assert!(Timestamp::from_millis(i64::MAX).is_none());
        assert!(Timestamp::from_epoch_auto_f64(f64::NAN).is_none());
    }

    #[test]
    fn parse_round_trip() {
        let ts = Timestamp::from_millis(1_560_000_000_123).unwrap();
        assert_eq!(Timestamp::parse(&ts.to_rfc3339()), Some(ts));
        assert_eq!(
            Timestamp::parse("2019-05-03 12:34:56").unwrap().to_rfc3339(),
            "2019-05-03T12:34:56.000Z"
        );
        assert!(Timestamp::parse("yesterday").is_none());
    }
}
