use chrono::{Datelike, NaiveDate, TimeZone, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::excerpt::parse_json_document;
use super::{
    is_mac_address, normalize_key, parse_bool, value_as_time, ArtifactError, Extras, Generation, JsonFields, Parsed,
};
use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WifiNetwork {
    pub ssid: String,
    /// Stored in plain text on both generations.
    pub passphrase: Option<String>,
    pub security: Option<String>,
    pub settings: Extras,
    pub last_modified: Option<Timestamp>,
    pub generation: Generation,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BluetoothSource {
    Bluego,
    CefLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BluetoothDevice {
    pub address: Option<String>,
    pub name: Option<String>,
    pub trusted: Option<bool>,
    pub source: BluetoothSource,
    pub observed_at: Option<Timestamp>,
    pub extras: Extras,
}

/// Security suffix of a connman service id such as
/// `wifi_<mac>_<ssid-hex>_managed_psk`.
fn connman_security(service: &str) -> Option<String> {
    let (_, tail) = service.rsplit_once("_managed_").or_else(|| service.rsplit_once("_adhoc_"))?;
    (!tail.is_empty()).then(|| tail.to_string())
}

fn decode_hex_ssid(hex_text: &str) -> Option<String> {
    let bytes = hex::decode(hex_text.trim()).ok()?;
    Some(String::from_utf8_lossy(&bytes).into_owned())
}

/// One connman service `settings` file; a file may hold several service sections.
pub fn parse_connman_settings(bytes: &[u8]) -> Parsed<Vec<WifiNetwork>> {
    let text = String::from_utf8_lossy(bytes);
    let mut networks = Vec::new();
    let mut warnings = Vec::new();
    let mut current: Option<(String, Vec<(String, String)>)> = None;

    let flush = |section: Option<(String, Vec<(String, String)>)>, networks: &mut Vec<WifiNetwork>, warnings: &mut Vec<String>| {
        let Some((service, entries)) = section else { return };
        if !service.starts_with("wifi_") {
            return;
        }
        let mut net = WifiNetwork {
            ssid: String::new(),
            passphrase: None,
            security: connman_security(&service),
            settings: Extras::new(),
            last_modified: None,
            generation: Generation::Gen1,
        };
        let mut hex_ssid = None;
        for (k, v) in entries {
            match k.as_str() {
                "Name" => net.ssid = v,
                "SSID" => hex_ssid = Some(v),
                "Passphrase" => net.passphrase = Some(v),
                "Modified" => {
                    net.last_modified = Timestamp::parse(&v);
                    net.settings.insert(k, Value::String(v));
                }
                _ => {
                    net.settings.insert(k, Value::String(v));
                }
            }
        }
        if let Some(h) = hex_ssid {
            if net.ssid.is_empty() {
                net.ssid = decode_hex_ssid(&h).unwrap_or_default();
            }
            net.settings.insert("SSID".into(), Value::String(h));
        }
        net.settings.insert("service".into(), Value::String(service.clone()));
        if net.ssid.is_empty() {
            warnings.push(format!("service {service}: no SSID, skipped"));
        } else {
            networks.push(net);
        }
    };

    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            flush(current.take(), &mut networks, &mut warnings);
            current = Some((line[1..line.len() - 1].to_string(), Vec::new()));
        } else if let Some((k, v)) = line.split_once('=') {
            match current.as_mut() {
                Some((_, entries)) => entries.push((k.trim().to_string(), v.trim().to_string())),
                None => warnings.push(format!("line {}: entry outside a service section", n + 1)),
            }
        } else {
            warnings.push(format!("line {}: not a key=value entry, skipped", n + 1));
        }
    }
    flush(current.take(), &mut networks, &mut warnings);
    Parsed::new(networks, warnings)
}

/// One bluego device file. The address comes from an `Address` key or,
/// failing that, the file name (`:` or `_` separated).
pub fn parse_bluego_device(file_name: &str, bytes: &[u8]) -> Parsed<BluetoothDevice> {
    let text = String::from_utf8_lossy(bytes);
    let mut warnings = Vec::new();
    let mut dev = BluetoothDevice {
        address: None,
        name: None,
        trusted: None,
        source: BluetoothSource::Bluego,
        observed_at: None,
        extras: Extras::new(),
    };
    let mut address = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            warnings.push(format!("{file_name}: unparsed line {line:?}"));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        match normalize_key(k).as_str() {
            "address" => address = Some(v.to_string()),
            "name" => dev.name = Some(v.to_string()),
            "alias" if dev.name.is_none() => dev.name = Some(v.to_string()),
            "trusted" => dev.trusted = parse_bool(v),
            "lastseen" | "lastconnected" | "lastused" => {
                dev.observed_at = match v.parse::<i64>() {
                    Ok(n) => Timestamp::from_epoch_auto(n),
                    Err(_) => Timestamp::parse(v),
                };
                dev.extras.insert(k.to_string(), Value::String(v.to_string()));
            }
            _ => {
                dev.extras.insert(k.to_string(), Value::String(v.to_string()));
            }
        }
    }
    let candidate = address.unwrap_or_else(|| file_name.replace('_', ":"));
    if is_mac_address(&candidate) {
        dev.address = Some(candidate.to_ascii_uppercase());
    } else {
        warnings.push(format!("{file_name}: {candidate:?} is not a MAC address"));
        dev.extras.insert("address_raw".into(), Value::String(candidate));
    }
    Parsed::new(dev, warnings)
}

/// Gen-2 `WifiManagerSettings.json`: a list of network objects (a single
/// object, or an object wrapping such a list, is accepted as well).
pub fn parse_wifi_manager_settings(bytes: &[u8]) -> Result<Parsed<Vec<WifiNetwork>>, ArtifactError> {
    let (doc, redacted) = parse_json_document(bytes)?;
    let mut warnings = Vec::new();
    if redacted {
        warnings.push("document carries redaction marks; masked values read as null".to_string());
    }
    let entries: Vec<Value> = match doc {
        Value::Array(items) => items,
        Value::Object(map) if map.contains_key("id") || map.contains_key("ssid") => vec![Value::Object(map)],
        Value::Object(map) => {
            let mut found = None;
            for (k, v) in map {
                match v {
                    Value::Array(items) if found.is_none() => found = Some(items),
                    _ => warnings.push(format!("top-level key {k:?} not modeled")),
                }
            }
            found.unwrap_or_default()
        }
        _ => return Err(ArtifactError::invalid("WifiManagerSettings", "expected a list of networks")),
    };

    let mut networks = Vec::new();
    for (i, entry) in entries.into_iter().enumerate() {
        let Value::Object(map) = entry else {
            warnings.push(format!("entry {i}: not an object, skipped"));
            continue;
        };
        let mut f = JsonFields::new(map);
        let ssid = f.take_string(&["id", "ssid"]).map(|s| unquote(&s)).unwrap_or_default();
        let passphrase = f.take_string(&["psk", "passphrase", "password"]).map(|s| unquote(&s));
        let security = f.take_string(&["security", "securityType"]);
        let last_modified = f.take(&["lastModified", "modified", "timestamp"]);
        let mut settings = f.into_extras();
        let last_modified = last_modified.and_then(|v| {
            let t = value_as_time(&v);
            settings.insert("lastModified".into(), v);
            t
        });
        if ssid.is_empty() {
            warnings.push(format!("entry {i}: empty SSID, skipped"));
            continue;
        }
        networks.push(WifiNetwork { ssid, passphrase, security, settings, last_modified, generation: Generation::Gen2 });
    }
    Ok(Parsed::new(networks, warnings))
}

/// wpa_supplicant-style `"\"name\""` quoting.
fn unquote(s: &str) -> String {
    let t = s.trim();
    if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') {
        t[1..t.len() - 1].to_string()
    } else {
        t.to_string()
    }
}

/// Line pattern for the CEF debug log. Named groups: `addr` (required),
/// `name` and `trusted` (optional). `trusted` fixes the flag for every match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CefPattern {
    pub regex: String,
    #[serde(default)]
    pub trusted: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CefScanConfig {
    pub patterns: Vec<CefPattern>,
    /// Year for `MMDD/HHMMSS` line prefixes when the log itself carries no full date.
    #[serde(default)]
    pub year_hint: Option<i32>,
}

impl Default for CefScanConfig {
    fn default() -> Self {
        let addr = r#"(?P<addr>[0-9A-Za-z]{1,2}(?:[:\-][0-9A-Za-z]{1,2})+)"#;
        let name = r#"(?:.*?\bname[=:]\s*"(?P<name>[^"]*)")?"#;
        Self {
            patterns: vec![
                CefPattern { regex: format!(r"(?i)\bdevice (?:discovered|found|added)\b[:\s]+{addr}{name}"), trusted: None },
                CefPattern { regex: format!(r"(?i)\b(?:device trusted|trusted device)\b[:\s]+{addr}{name}"), trusted: Some(true) },
                CefPattern { regex: format!(r"(?i)\b(?:device untrusted|trust removed)\b[:\s]+{addr}{name}"), trusted: Some(false) },
            ],
            year_hint: None,
        }
    }
}

struct LineClock {
    iso: Regex,
    chromium: Regex,
    year: Option<i32>,
}

impl LineClock {
    fn new(year_hint: Option<i32>) -> Self {
        Self {
            iso: Regex::new(r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:\.\d+)?(?:Z|[+-]\d{2}:?\d{2})?").unwrap(),
            chromium: Regex::new(r"^\[(?:\d+:\d+:)?(\d{2})(\d{2})/(\d{2})(\d{2})(\d{2})(?:\.(\d{1,6}))?").unwrap(),
            year: year_hint,
        }
    }

    /// A full date anywhere on the line wins and also sets the year for
    /// following short-form prefixes.
    fn stamp(&mut self, line: &str, year_from_log: bool) -> Option<Timestamp> {
        if let Some(m) = self.iso.find(line) {
            if let Some(t) = Timestamp::parse(m.as_str()) {
                if year_from_log {
                    self.year = Some(t.to_datetime().year());
                }
                return Some(t);
            }
        }
        let c = self.chromium.captures(line)?;
        let num = |i: usize| c.get(i).and_then(|m| m.as_str().parse::<u32>().ok());
        let date = NaiveDate::from_ymd_opt(self.year?, num(1)?, num(2)?)?;
        let frac = c.get(6).map(|m| format!("{:0<6}", m.as_str())).and_then(|s| s.parse::<u32>().ok()).unwrap_or(0);
        let naive = date.and_hms_micro_opt(num(3)?, num(4)?, num(5)?, frac)?;
        Timestamp::from_millis(Utc.from_utc_datetime(&naive).timestamp_millis())
    }
}

pub fn scan_cef_log(bytes: &[u8], config: &CefScanConfig) -> Result<Parsed<Vec<BluetoothDevice>>, ArtifactError> {
    let patterns = config
        .patterns
        .iter()
        .map(|p| {
            Regex::new(&p.regex)
                .map(|r| (r, p.trusted))
                .map_err(|e| ArtifactError::invalid("cef pattern", e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut clock = LineClock::new(config.year_hint);
    let year_from_log = config.year_hint.is_none();
    let text = String::from_utf8_lossy(bytes);
    let mut devices = Vec::new();
    let mut warnings = Vec::new();

    for (n, line) in text.lines().enumerate() {
        let observed_at = clock.stamp(line, year_from_log);
        for (re, fixed_trust) in &patterns {
            let Some(c) = re.captures(line) else { continue };
            let Some(addr) = c.name("addr").map(|m| m.as_str()) else { continue };
            if !is_mac_address(addr) {
                warnings.push(format!("line {}: malformed MAC {addr:?}, skipped", n + 1));
                break;
            }
            let trusted = fixed_trust.or_else(|| c.name("trusted").and_then(|m| parse_bool(m.as_str())));
            let mut extras = Extras::new();
            extras.insert("line".into(), Value::from(n + 1));
            devices.push(BluetoothDevice {
                address: Some(addr.to_ascii_uppercase()),
                name: c.name("name").map(|m| m.as_str().to_string()),
                trusted,
                source: BluetoothSource::CefLog,
                observed_at,
                extras,
            });
            break;
        }
    }
    Ok(Parsed::new(devices, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn connman_service() {
        let text = "[wifi_00b0d063c226_486f6d65_managed_psk]\nName=Home\nSSID=486f6d65\nFrequency=2462\n\
                    Favorite=true\nModified=2023-06-14T08:59:00.123Z\nPassphrase=hunter2\nIPv4.method=dhcp\n";
        let p = parse_connman_settings(text.as_bytes());
        assert!(p.warnings.is_empty());
        let n = &p.value[0];
        assert_eq!(n.ssid, "Home");
        assert_eq!(n.passphrase.as_deref(), Some("hunter2"));
        assert_eq!(n.security.as_deref(), Some("psk"));
        assert_eq!(n.last_modified, Timestamp::parse("2023-06-14T08:59:00.123Z"));
        assert_eq!(n.settings["IPv4.method"], "dhcp");
    }

    #[test]
    fn connman_hex_only_ssid() {
        let p = parse_connman_settings(b"[wifi_x_436166c3a9_managed_none]\nSSID=436166c3a9\n");
        assert_eq!(p.value[0].ssid, "Caf\u{e9}");
        assert_eq!(p.value[0].security.as_deref(), Some("none"));
        assert!(parse_connman_settings(b"").value.is_empty());
    }

    #[test]
    fn bluego_file() {
        let p = parse_bluego_device("a4_c1_38_00_11_22", b"[General]\nName=Pixel 7\nTrusted=true\nClass=0x5a020c\n");
        assert!(p.warnings.is_empty());
        let d = p.value;
        assert_eq!(d.address.as_deref(), Some("A4:C1:38:00:11:22"));
        assert_eq!(d.name.as_deref(), Some("Pixel 7"));
        assert_eq!(d.trusted, Some(true));
        assert_eq!(d.source, BluetoothSource::Bluego);
        assert_eq!(d.extras["Class"], "0x5a020c");

        let bad = parse_bluego_device("notamac", b"Name=x\n");
        assert_eq!(bad.value.address, None);
        assert_eq!(bad.warnings.len(), 1);
    }

    #[test]
    fn wifi_manager_excerpt() {
        let doc = br#"{
    "id":       "\"Galaxy Note10+0c95\"",
    "psk":      "[PLAINTEXT_PASSWORD]",
    "security": "WPA2"
}"#;
        let nets = parse_wifi_manager_settings(doc).unwrap().value;
        assert_eq!(nets.len(), 1);
        assert_eq!(nets[0].ssid, "Galaxy Note10+0c95");
        assert_eq!(nets[0].security.as_deref(), Some("WPA2"));
        assert_eq!(nets[0].passphrase.as_deref(), Some("[PLAINTEXT_PASSWORD]"));
        assert_eq!(nets[0].generation, Generation::Gen2);
    }

    #[test]
    fn wifi_manager_list_and_wrapper() {
        let list = br#"[{"id": "\"A\"", "psk": "\"p\"", "security": "WPA2", "hidden": false, "lastModified": 1686700000000}]"#;
        let nets = parse_wifi_manager_settings(list).unwrap().value;
        assert_eq!(nets[0].passphrase.as_deref(), Some("p"));
        assert_eq!(nets[0].settings["hidden"], false);
        assert_eq!(nets[0].last_modified, Timestamp::from_millis(1686700000000));
        let wrapped = br#"{"version": 2, "networks": [{"id": "B"}]}"#;
        let p = parse_wifi_manager_settings(wrapped).unwrap();
        assert_eq!(p.value[0].ssid, "B");
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn cef_scan() {
        let log = "Log opened 2023-06-14T07:00:00Z\n\
            [0614/092831.649:INFO:bluetooth_adapter.cc(88)] Device discovered: a4:c1:38:00:11:22 name=\"Pixel 7\"\n\
            [0614/092900.000:INFO:bluetooth_adapter.cc(97)] Device trusted: A4:C1:38:00:11:22\n\
            [0614/093000.000:INFO:bluetooth_adapter.cc(88)] Device discovered: ZZ:C1:38:00:11:22\n\
            [0614/093100.000:INFO:net.cc(1)] unrelated\n";
        let p = scan_cef_log(log.as_bytes(), &CefScanConfig::default()).unwrap();
        assert_eq!(p.value.len(), 2);
        assert_eq!(p.warnings.len(), 1);
        let d = &p.value[0];
        assert_eq!(d.address.as_deref(), Some("A4:C1:38:00:11:22"));
        assert_eq!(d.name.as_deref(), Some("Pixel 7"));
        assert_eq!(d.trusted, None);
        assert_eq!(d.observed_at, Timestamp::parse("2023-06-14T09:28:31.649Z"));
        assert_eq!(p.value[1].trusted, Some(true));
        assert!(scan_cef_log(b"", &CefScanConfig::default()).unwrap().value.is_empty());
    }

    #[test]
    fn cef_short_stamps_need_a_year() {
        let line = "[0614/092831.649:INFO:x.cc(1)] Device discovered: A4:C1:38:00:11:22\n";
        let p = scan_cef_log(line.as_bytes(), &CefScanConfig::default()).unwrap();
        assert_eq!(p.value[0].observed_at, None);
        let cfg = CefScanConfig { year_hint: Some(2023), ..CefScanConfig::default() };
        let p = scan_cef_log(line.as_bytes(), &cfg).unwrap();
        assert_eq!(p.value[0].observed_at, Timestamp::parse("2023-06-14T09:28:31.649Z"));
    }

    #[test]
    fn bad_pattern_reported() {
        let cfg = CefScanConfig { patterns: vec![CefPattern { regex: "(".into(), trusted: None }], year_hint: None };
        assert!(scan_cef_log(b"x", &cfg).is_err());
    }
}
