//! Decoders for the artifacts of both board-computer generations.

mod analytics;
mod bike_info;
mod bundle;
mod charts;
mod connectivity;
mod ebike;
pub mod excerpt;
mod gnss;
mod gpx;
mod ini;
mod logs;
mod nav;
mod profile;
pub mod sqlite;
mod tracking;
mod user_settings;

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::valid_coordinate;
use crate::time::Timestamp;
use crate::tree::FileTree;

pub use analytics::{parse_analytics_db, AnalyticsEvent};
pub use bike_info::{parse_bike_info, BikeInfo};
pub use bundle::{
    assemble_bundle, canonical_paths, parse_connectivity, AbsentArtifact, ArtifactKind, ArtifactPaths, BundleOptions, CaseBundle,
};
pub use charts::{parse_charts_db, ChartsData, ChartsSample};
pub use connectivity::{
    parse_bluego_device, parse_connman_settings, parse_wifi_manager_settings, scan_cef_log, BluetoothDevice,
    BluetoothSource, CefPattern, CefScanConfig, WifiNetwork,
};
pub use ebike::{
    parse_ebike_db, Activity, AmbientSample, BatterySample, DriveUnitSample, DriverSample, EBikeData,
    LocalizationRow, OperationalSample, EBIKE_TABLES,
};
pub use gnss::{parse_gnss_settings, GnssSettings, LastPosition};
pub use gpx::{parse_gpx, PlannedRoute};
pub use ini::{parse_settings_ini, BikeSettings, ConsentStamp};
pub use logs::{parse_log, LogEntry, LogFile};
pub use nav::{parse_nav_storage, Consumption, NavData, NavPlace, NavRoute};
pub use profile::{parse_user_profile, UserProfile};
pub use tracking::{parse_tracking_db, DriverMetric, SchemaProfile, TableSemantics, TrackingData, TripRecord};
pub use user_settings::{parse_user_settings_db, SettingEntry, UserSettings};

/// Unmodeled keys or columns, kept verbatim.
pub type Extras = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("SQLite container: {0}")]
    Sqlite(String),
    #[error("missing table {0}")]
    MissingTable(String),
    #[error("missing field {0}")]
    MissingField(String),
    #[error("invalid value for {field}: {detail}")]
    InvalidValue { field: String, detail: String },
    #[error("document contains no points")]
    NoPoints,
    #[error("coordinate out of range: ({0}, {1})")]
    CoordinateOutOfRange(f64, f64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ArtifactError {
    pub(crate) fn invalid(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::InvalidValue { field: field.into(), detail: detail.into() }
    }
}

/// Parser output together with non-fatal findings.
#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

impl<T> Parsed<T> {
    pub fn new(value: T, warnings: Vec<String>) -> Self {
        Self { value, warnings }
    }

    pub fn clean(value: T) -> Self {
        Self { value, warnings: Vec::new() }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generation {
    Gen1,
    Gen2,
    Unknown,
}

impl fmt::Display for Generation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gen1 => "gen1",
            Self::Gen2 => "gen2",
            Self::Unknown => "unknown",
        })
    }
}

impl FromStr for Generation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gen1" | "1" => Ok(Self::Gen1),
            "gen2" | "2" => Ok(Self::Gen2),
            "unknown" => Ok(Self::Unknown),
            other => Err(format!("unknown generation {other:?}")),
        }
    }
}

/// Where a datum came from: tree-relative path, file digest, and the
/// partition/image label of the tree.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub path: String,
    pub sha256: String,
    pub origin: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub source: Provenance,
    pub data: T,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticLevel {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: Option<String>,
    pub level: DiagnosticLevel,
    pub message: String,
}

/// A row that failed validation and was set aside instead of being repaired.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quarantined {
    pub table: String,
    pub row_id: Option<i64>,
    pub reason: String,
}

/// Row count and raw rows of a table that has no decoder.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeftoverTable {
    pub row_count: usize,
    pub rows: Vec<Extras>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TablePresence {
    pub present: bool,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: Option<f64>,
    pub time: Option<Timestamp>,
    /// Recorded ground speed, m/s.
    pub speed: Option<f64>,
}

impl TrackPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self, ArtifactError> {
        if !valid_coordinate(latitude, longitude) {
            return Err(ArtifactError::CoordinateOutOfRange(latitude, longitude));
        }
        Ok(Self { latitude, longitude, altitude: None, time: None, speed: None })
    }

    pub fn with_altitude(mut self, altitude: Option<f64>) -> Self {
        self.altitude = altitude;
        self
    }

    pub fn with_time(mut self, time: Option<Timestamp>) -> Self {
        self.time = time;
        self
    }

    pub fn with_speed(mut self, speed: Option<f64>) -> Self {
        self.speed = speed;
        self
    }
}

/// Decides the generation from characteristic path structure.
pub fn detect_generation(tree: &FileTree) -> Generation {
    let files = tree.files();
    if files.iter().any(|f| bundle::gen1_user_dir(f).is_some()) {
        return Generation::Gen1;
    }
    if files.iter().any(|f| bundle::gen2_prefix(f).is_some()) || tree.is_dir(bundle::GEN2_USER_DATA) {
        return Generation::Gen2;
    }
    Generation::Unknown
}

/// Lowercase ASCII alphanumerics only; used to match column and key names.
pub(crate) fn normalize_key(name: &str) -> String {
    name.chars().filter(char::is_ascii_alphanumeric).map(|c| c.to_ascii_lowercase()).collect()
}

/// Mapping from a JSON object by alias lists, leaving unclaimed keys behind.
pub(crate) struct JsonFields {
    fields: serde_json::Map<String, serde_json::Value>,
}

impl JsonFields {
    pub fn new(fields: serde_json::Map<String, serde_json::Value>) -> Self {
        Self { fields }
    }

    fn key_for(&self, aliases: &[&str]) -> Option<String> {
        aliases.iter().find_map(|alias| {
            let wanted = normalize_key(alias);
            self.fields.keys().find(|k| normalize_key(k) == wanted).cloned()
        })
    }

    pub fn take(&mut self, aliases: &[&str]) -> Option<serde_json::Value> {
        let key = self.key_for(aliases)?;
        self.fields.remove(&key)
    }

    /// Strings and numbers become text; other types stay behind.
    pub fn take_string(&mut self, aliases: &[&str]) -> Option<String> {
        let key = self.key_for(aliases)?;
        let text = value_as_string(self.fields.get(&key)?)?;
        self.fields.remove(&key);
        Some(text)
    }

    pub fn take_f64(&mut self, aliases: &[&str]) -> Option<f64> {
        let key = self.key_for(aliases)?;
        let v = value_as_f64(self.fields.get(&key)?)?;
        self.fields.remove(&key);
        Some(v)
    }

    pub fn take_object(&mut self, aliases: &[&str]) -> Option<serde_json::Map<String, serde_json::Value>> {
        let key = self.key_for(aliases)?;
        if !self.fields.get(&key)?.is_object() {
            return None;
        }
        match self.fields.remove(&key) {
            Some(serde_json::Value::Object(m)) => Some(m),
            _ => None,
        }
    }

    pub fn into_extras(self) -> Extras {
        self.fields.into_iter().collect()
    }
}

pub(crate) fn value_as_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub(crate) fn value_as_f64(v: &serde_json::Value) -> Option<f64> {
    match v {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

pub(crate) fn value_as_bool(v: &serde_json::Value) -> Option<bool> {
    match v {
        serde_json::Value::Bool(b) => Some(*b),
        serde_json::Value::Number(n) => n.as_i64().map(|i| i != 0),
        serde_json::Value::String(s) => parse_bool(s),
        _ => None,
    }
}

pub(crate) fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Epoch numbers (unit autodetected) or date-time strings.
pub(crate) fn value_as_time(v: &serde_json::Value) -> Option<Timestamp> {
    match v {
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Timestamp::from_epoch_auto(i),
            None => n.as_f64().and_then(Timestamp::from_epoch_auto_f64),
        },
        serde_json::Value::String(s) => match s.trim().parse::<i64>() {
            Ok(i) => Timestamp::from_epoch_auto(i),
            Err(_) => Timestamp::parse(s),
        },
        _ => None,
    }
}

/// Six colon-separated hex octets.
pub fn is_mac_address(text: &str) -> bool {
    let parts: Vec<&str> = text.split(':').collect();
    parts.len() == 6 && parts.iter().all(|p| p.len() == 2 && p.chars().all(|c| c.is_ascii_hexdigit()))
}
