//! Edits an emitted tree the way a user with shell access could: extra GPS
//! fixes appended to the gen-1 EBike database, or an odometer rolled back.
//! Every inserted row is reported so tests can diff against the clean copy.

use std::fmt;
use std::str::FromStr;

use nyonscope::geo::haversine_m;
use nyonscope::FileTree;
use rusqlite::types::ValueRef;
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::emit::{GEN1_APPDATA, GEN2_USER_DB};
use crate::ForgeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestampMode {
    /// Continues after the last stored fix at riding pace.
    Plausible,
    /// Steps backwards from the last stored fix.
    Reversed,
    /// Every inserted fix carries the last stored time.
    Duplicate,
}

impl FromStr for TimestampMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plausible" => Ok(Self::Plausible),
            "reversed" => Ok(Self::Reversed),
            "duplicate" => Ok(Self::Duplicate),
            other => Err(format!("unknown timestamp mode {other:?}")),
        }
    }
}

impl fmt::Display for TimestampMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plausible => "plausible",
            Self::Reversed => "reversed",
            Self::Duplicate => "duplicate",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TamperSpec {
    pub waypoints: Vec<Waypoint>,
    pub mode: TimestampMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsertedRow {
    pub table: String,
    pub row_id: i64,
    /// Full row as stored, every column included.
    pub values: serde_json::Map<String, Value>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TripDiff {
    /// Tree-relative path of the edited database; empty when nothing was touched.
    pub database: String,
    pub mode: Option<TimestampMode>,
    pub inserted: Vec<InsertedRow>,
}

/// Spacing used when timestamps are made up.
const STEP_MS: i64 = 5_000;
const RIDING_MPS: f64 = 5.0;
/// Used when the database holds no time at all.
const FALLBACK_ANCHOR_MS: i64 = 1_686_700_000_000;

pub fn ebike_path(tree: &FileTree) -> Option<String> {
    let prefix = format!("{GEN1_APPDATA}/Main/Apps/Settings/");
    tree.files().into_iter().find(|p| {
        p.strip_prefix(&prefix).is_some_and(|rest| rest.split('/').nth(1) == Some("EBike") && rest.matches('/').count() == 1)
    })
}

pub(crate) fn sql_to_json(v: ValueRef<'_>) -> Value {
    match v {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => Value::from(i),
        ValueRef::Real(f) => Value::from(f),
        ValueRef::Text(t) => Value::from(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => serde_json::json!({ "blob_hex": hex::encode(b) }),
    }
}

fn read_row(conn: &Connection, table: &str, row_id: i64) -> rusqlite::Result<InsertedRow> {
    let mut stmt = conn.prepare(&format!("SELECT * FROM \"{table}\" WHERE rowid = ?1"))?;
    let names: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
    let values = stmt.query_row([row_id], |row| {
        let mut map = serde_json::Map::new();
        for (i, name) in names.iter().enumerate() {
            map.insert(name.clone(), sql_to_json(row.get_ref(i)?));
        }
        Ok(map)
    })?;
    Ok(InsertedRow { table: table.to_string(), row_id, values })
}

fn open_existing(tree: &FileTree, rel: &str) -> Result<Connection, ForgeError> {
    let path = tree.path(rel);
    Ok(Connection::open_with_flags(&path, rusqlite::OpenFlags::SQLITE_OPEN_READ_WRITE)?)
}

/// Times for the inserted fixes, relative to the latest stored time.
pub fn forged_times(anchor_ms: i64, waypoints: &[Waypoint], mode: TimestampMode) -> Vec<i64> {
    match mode {
        TimestampMode::Reversed => (0..waypoints.len() as i64).map(|k| anchor_ms - STEP_MS * (k + 1)).collect(),
        TimestampMode::Duplicate => vec![anchor_ms; waypoints.len()],
        TimestampMode::Plausible => {
            let mut t = anchor_ms + 3_600_000;
            let mut out = Vec::with_capacity(waypoints.len());
            for (i, w) in waypoints.iter().enumerate() {
                if i > 0 {
                    let p = &waypoints[i - 1];
                    let d = haversine_m(p.latitude, p.longitude, w.latitude, w.longitude);
                    t += STEP_MS.max((d / RIDING_MPS * 1000.0).ceil() as i64);
                }
                out.push(t);
            }
            out
        }
    }
}

/// Appends one Localization row per waypoint plus an Activities summary row.
pub fn forge_trip(tree: &FileTree, waypoints: &[Waypoint], mode: TimestampMode) -> Result<TripDiff, ForgeError> {
    let rel = ebike_path(tree).ok_or_else(|| ForgeError::MissingDatabase("gen-1 EBike database".into()))?;
    if waypoints.is_empty() {
        return Ok(TripDiff::default());
    }
    let mut conn = open_existing(tree, &rel)?;
    let tx = conn.transaction()?;
    let user: Option<String> = tx
        .query_row("SELECT UserId FROM Localization WHERE UserId IS NOT NULL LIMIT 1", [], |r| r.get(0))
        .optional()?
        .or_else(|| rel.rsplit('/').nth(1).map(str::to_string));
    let anchor: Option<i64> = tx.query_row(
        "SELECT MAX(t) FROM (SELECT MAX(TimeStamp) AS t FROM Localization UNION ALL SELECT MAX(TimeStamp) FROM Activities)",
        [],
        |r| r.get(0),
    )?;
    let times = forged_times(anchor.unwrap_or(FALLBACK_ANCHOR_MS), waypoints, mode);

    let mut inserted = Vec::new();
    for (w, t) in waypoints.iter().zip(&times) {
        tx.execute(
            "INSERT INTO Localization (UserId, TimeStamp, Latitude, Longitude, SensorAltitude) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![user, t, w.latitude, w.longitude, w.altitude],
        )?;
        inserted.push(read_row(&tx, "Localization", tx.last_insert_rowid())?);
    }
    let distance: f64 = waypoints
        .windows(2)
        .map(|p| haversine_m(p[0].latitude, p[0].longitude, p[1].latitude, p[1].longitude))
        .sum();
    let (start, stop) = (times.iter().min().copied(), times.iter().max().copied());
    tx.execute(
        "INSERT INTO Activities (UserId, TimeStamp, StopTime, Distance) VALUES (?1, ?2, ?3, ?4)",
        params![user, start, stop, (distance * 100.0).round() / 100.0],
    )?;
    inserted.push(read_row(&tx, "Activities", tx.last_insert_rowid())?);
    tx.commit()?;
    Ok(TripDiff { database: rel, mode: Some(mode), inserted })
}

/// Adds a later odometer reading below an earlier one: a DriveUnit row on
/// gen-1, a trip on gen-2.
pub fn rollback_odometer(tree: &FileTree, rollback_m: f64) -> Result<TripDiff, ForgeError> {
    if let Some(rel) = ebike_path(tree) {
        let mut conn = open_existing(tree, &rel)?;
        let tx = conn.transaction()?;
        let (user, last_t, top): (Option<String>, Option<i64>, Option<f64>) = tx.query_row(
            "SELECT (SELECT UserId FROM DriveUnit LIMIT 1), MAX(TimeStamp), MAX(odometer) FROM DriveUnit",
            [],
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)),
        )?;
        let t = last_t.unwrap_or(FALLBACK_ANCHOR_MS) + 60_000;
        let odometer = (top.unwrap_or(rollback_m * 2.0) - rollback_m).max(0.0);
        // An empty table gets a reference reading first so there is something to roll back from.
        let mut inserted = Vec::new();
        if top.is_none() {
            tx.execute(
                "INSERT INTO DriveUnit (UserId, TimeStamp, isMoving, odometer) VALUES (?1, ?2, 0, ?3)",
                params![user, t - 30_000, rollback_m * 2.0],
            )?;
            inserted.push(read_row(&tx, "DriveUnit", tx.last_insert_rowid())?);
        }
        tx.execute(
            "INSERT INTO DriveUnit (UserId, TimeStamp, isMoving, odometer) VALUES (?1, ?2, 0, ?3)",
            params![user, t, odometer],
        )?;
        inserted.push(read_row(&tx, "DriveUnit", tx.last_insert_rowid())?);
        tx.commit()?;
        return Ok(TripDiff { database: rel, mode: None, inserted });
    }
    let rel = format!("{GEN2_USER_DB}/tracking.db");
    if !tree.is_file(&rel) {
        return Err(ForgeError::MissingDatabase("EBike or tracking database".into()));
    }
    let mut conn = open_existing(tree, &rel)?;
    let tx = conn.transaction()?;
    let (next_id, last_end, top): (i64, Option<i64>, Option<f64>) = tx.query_row(
        "SELECT COALESCE(MAX(trip_id), 0) + 1, MAX(end_time), MAX(odometer_end) FROM trips",
        [],
        |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)),
    )?;
    let start = last_end.unwrap_or(FALLBACK_ANCHOR_MS) + 3_600_000;
    let mut inserted = Vec::new();
    let top = match top {
        Some(v) => v,
        None => {
            let base = rollback_m * 2.0;
            tx.execute(
                "INSERT INTO trips (trip_id, start_time, end_time, odometer_start, odometer_end) VALUES (?1, ?2, ?3, ?4, ?4)",
                params![next_id, start - 1_800_000, start - 1_200_000, base],
            )?;
            inserted.push(read_row(&tx, "trips", tx.last_insert_rowid())?);
            base
        }
    };
    let id = next_id + inserted.len() as i64;
    let odometer = (top - rollback_m).max(0.0);
    tx.execute(
        "INSERT INTO trips (trip_id, start_time, end_time, odometer_start, odometer_end) VALUES (?1, ?2, ?3, ?4, ?5)",
        params![id, start, start + 600_000, odometer, odometer + 1_000.0],
    )?;
    inserted.push(read_row(&tx, "trips", tx.last_insert_rowid())?);
    tx.commit()?;
    Ok(TripDiff { database: rel, mode: None, inserted })
}
