use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{normalize_key, Parsed};
use crate::time::Timestamp;

/// Decoded `Settings.ini` of a gen-1 user directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BikeSettings {
    /// Part and serial numbers keyed by their INI key.
    pub serials: BTreeMap<String, String>,
    pub consents: Vec<ConsentStamp>,
    pub wifi_token: Option<String>,
    /// Qt `@Variant(...)` value exactly as stored; never decoded.
    pub last_sync_raw: Option<String>,
    /// Remaining entries keyed `Section/Key`.
    pub other: BTreeMap<String, String>,
}

/// When recording of some data category was allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsentStamp {
    pub key: String,
    pub raw: String,
    pub time: Option<Timestamp>,
}

fn parse_stamp(raw: &str) -> Option<Timestamp> {
    match raw.trim().parse::<i64>() {
        Ok(n) => Timestamp::from_epoch_auto(n),
        Err(_) => Timestamp::parse(raw.trim()),
    }
}

pub fn parse_settings_ini(bytes: &[u8]) -> Parsed<BikeSettings> {
    let text = String::from_utf8_lossy(bytes);
    let mut out = BikeSettings::default();
    let mut warnings = Vec::new();
    let mut section = String::from("General");

    for (n, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') || trimmed.starts_with('#') {
            continue;
        }
        if trimmed.starts_with('[') && trimmed.ends_with(']') {
            section = trimmed[1..trimmed.len() - 1].trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            warnings.push(format!("line {}: not a key=value entry, skipped", n + 1));
            continue;
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            warnings.push(format!("line {}: empty key, skipped", n + 1));
            continue;
        }
        let norm = normalize_key(&key);
        if norm.contains("lastsync") {
            // Verbatim, including any leading whitespace after '='.
            out.last_sync_raw = Some(value.to_string());
            continue;
        }
        let value = value.trim().to_string();
        if norm.contains("serial") || norm.contains("partnumber") {
            let slot = if out.serials.contains_key(&key) { format!("{section}/{key}") } else { key };
            out.serials.insert(slot, value);
        } else if norm.contains("allowed") || norm.contains("consent") {
            let time = parse_stamp(&value);
            if time.is_none() {
                warnings.push(format!("line {}: consent value {value:?} is not a timestamp", n + 1));
            }
            out.consents.push(ConsentStamp { key, raw: value, time });
        } else if norm.contains("token") {
            out.wifi_token = Some(value);
        } else {
            out.other.insert(format!("{section}/{key}"), value);
        }
    }
    Parsed::new(out, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INI: &str = "[General]\r\nLastSync=@Variant(\\0\\0\\0\\x10\\0%\\x8a\\x16\\x4\\xdf\\xc0\\x1)\r\n\
        [Bike]\r\nDriveUnitSerial=4711\r\nDriveUnitPartNumber=0 275 007 X\r\nBatterySerial=0815\r\n\
        WifiAccessToken=tok\r\n[Privacy]\r\nFitnessDataAllowed=1686700000\r\nGeoDataAllowed=2023-06-14T09:00:00Z\r\n\
        Language=de\r\ngarbage line\r\n";

    #[test]
    fn maps_known_keys() {
        let p = parse_settings_ini(INI.as_bytes());
        let s = p.value;
        assert_eq!(s.serials.len(), 3);
        assert_eq!(s.serials["DriveUnitPartNumber"], "0 275 007 X");
        assert_eq!(s.wifi_token.as_deref(), Some("tok"));
        assert_eq!(s.consents.len(), 2);
        assert!(s.consents.iter().all(|c| c.time.is_some()));
        assert_eq!(s.other["Privacy/Language"], "de");
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn last_sync_byte_identical() {
        let s = parse_settings_ini(INI.as_bytes()).value;
        assert_eq!(s.last_sync_raw.as_deref(), Some(r"@Variant(\0\0\0\x10\0%\x8a\x16\x4\xdf\xc0\x1)"));
    }

    #[test]
    fn empty_file() {
        let p = parse_settings_ini(b"");
        assert_eq!(p.value, BikeSettings::default());
        assert!(p.warnings.is_empty());
    }
}
