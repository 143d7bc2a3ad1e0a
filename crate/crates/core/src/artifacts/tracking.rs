//! `tracking.db`: table names vary between firmware revisions, so a schema
//! profile maps observed table names to meaning. Anything unmapped is dumped
//! raw rather than guessed at.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sqlite::{Database, Row};
use super::{normalize_key, ArtifactError, Extras, LeftoverTable, Parsed, Quarantined, TrackPoint};
use crate::time::Timestamp;

const DEFAULT_PROFILE: &str = include_str!("../../profiles/tracking_default.json");

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSemantics {
    TripSummary,
    TripPoints,
    DriverMetrics,
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRule {
    pub semantics: TableSemantics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaProfile {
    pub name: String,
    /// Table name (matched case/punctuation-insensitively) to meaning.
    pub tables: BTreeMap<String, TableRule>,
    /// Field name to column aliases, tried in order.
    #[serde(default)]
    pub columns: BTreeMap<String, Vec<String>>,
}

impl Default for SchemaProfile {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_PROFILE).expect("shipped tracking profile is valid")
    }
}

impl SchemaProfile {
    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let text = fs::read(path)?;
        serde_json::from_slice(&text).map_err(|e| ArtifactError::Json(format!("{}: {e}", path.display())))
    }

    pub fn semantics_of(&self, table: &str) -> TableSemantics {
        let key = normalize_key(table);
        self.tables
            .iter()
            .find(|(name, _)| normalize_key(name) == key)
            .map(|(_, r)| r.semantics)
            .unwrap_or(TableSemantics::Raw)
    }

    fn aliases<'a>(&'a self, field: &'a str) -> Vec<&'a str> {
        match self.columns.get(field) {
            Some(list) => list.iter().map(String::as_str).collect(),
            None => vec![field],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverMetric {
    pub time: Option<Timestamp>,
    pub heart_rate: Option<f64>,
    pub cadence: Option<f64>,
    pub torque: Option<f64>,
    pub power: Option<f64>,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub trip_id: String,
    pub start_time: Option<Timestamp>,
    pub end_time: Option<Timestamp>,
    /// Metres.
    pub distance: Option<f64>,
    /// Seconds.
    pub duration: Option<f64>,
    pub max_speed: Option<f64>,
    pub avg_speed: Option<f64>,
    pub odometer_start: Option<f64>,
    pub odometer_end: Option<f64>,
    /// In storage order.
    pub points: Vec<TrackPoint>,
    pub metrics: Vec<DriverMetric>,
    pub extras: Extras,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingData {
    pub trips: Vec<TripRecord>,
    /// Observed table name to the meaning it was decoded with.
    pub tables: BTreeMap<String, TableSemantics>,
    pub raw_leftovers: BTreeMap<String, LeftoverTable>,
    pub quarantined: Vec<Quarantined>,
}

struct Cols<'a>(&'a SchemaProfile);

impl Cols<'_> {
    fn f64(&self, row: &mut Row, field: &str) -> Option<f64> {
        row.take_f64(&self.0.aliases(field))
    }
    fn time(&self, row: &mut Row, field: &str) -> Option<Timestamp> {
        row.take_time(&self.0.aliases(field))
    }
    fn string(&self, row: &mut Row, field: &str) -> Option<String> {
        row.take_string(&self.0.aliases(field))
    }
}

pub fn parse_tracking_db(path: &Path, profile: &SchemaProfile) -> Result<Parsed<TrackingData>, ArtifactError> {
    let db = Database::open(path)?;
    let cols = Cols(profile);
    let mut out = TrackingData::default();
    let mut warnings = Vec::new();

    let mut by_kind: BTreeMap<TableSemantics, Vec<String>> = BTreeMap::new();
    for table in db.tables()? {
        let s = profile.semantics_of(&table);
        out.tables.insert(table.clone(), s);
        by_kind.entry(s).or_default().push(table);
    }
    let tables_of = |s| by_kind.get(&s).cloned().unwrap_or_default();

    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for table in tables_of(TableSemantics::TripSummary) {
        for mut row in db.rows(&table)? {
            let Some(trip_id) = cols.string(&mut row, "trip_id") else {
                out.quarantined.push(Quarantined { table: table.clone(), row_id: row.row_id, reason: "no trip id".into() });
                continue;
            };
            if index.contains_key(&trip_id) {
                out.quarantined.push(Quarantined {
                    table: table.clone(),
                    row_id: row.row_id,
                    reason: format!("duplicate trip id {trip_id}"),
                });
                continue;
            }
            index.insert(trip_id.clone(), out.trips.len());
            out.trips.push(TripRecord {
                trip_id,
                start_time: cols.time(&mut row, "start_time"),
                end_time: cols.time(&mut row, "end_time"),
                distance: cols.f64(&mut row, "distance"),
                duration: cols.f64(&mut row, "duration"),
                max_speed: cols.f64(&mut row, "max_speed"),
                avg_speed: cols.f64(&mut row, "avg_speed"),
                odometer_start: cols.f64(&mut row, "odometer_start"),
                odometer_end: cols.f64(&mut row, "odometer_end"),
                points: Vec::new(),
                metrics: Vec::new(),
                extras: row.into_extras(),
            });
        }
    }

    for table in tables_of(TableSemantics::TripPoints) {
        for mut row in db.rows(&table)? {
            let row_id = row.row_id;
            let mut quarantine = |reason: String| out.quarantined.push(Quarantined { table: table.clone(), row_id, reason });
            let Some(slot) = cols.string(&mut row, "trip_id").and_then(|id| index.get(&id).copied()) else {
                quarantine("point without a known trip".into());
                continue;
            };
            let (Some(lat), Some(lon)) = (cols.f64(&mut row, "latitude"), cols.f64(&mut row, "longitude")) else {
                quarantine("coordinates missing or not numeric".into());
                continue;
            };
            match TrackPoint::new(lat, lon) {
                Ok(p) => {
                    let p = p
                        .with_time(cols.time(&mut row, "timestamp"))
                        .with_altitude(cols.f64(&mut row, "altitude"))
                        .with_speed(cols.f64(&mut row, "speed"));
                    out.trips[slot].points.push(p);
                }
                Err(e) => quarantine(e.to_string()),
            }
        }
    }

    for table in tables_of(TableSemantics::DriverMetrics) {
        for mut row in db.rows(&table)? {
            let Some(slot) = cols.string(&mut row, "trip_id").and_then(|id| index.get(&id).copied()) else {
                out.quarantined.push(Quarantined {
                    table: table.clone(),
                    row_id: row.row_id,
                    reason: "metric without a known trip".into(),
                });
                continue;
            };
            let m = DriverMetric {
                time: cols.time(&mut row, "timestamp"),
                heart_rate: cols.f64(&mut row, "heart_rate"),
                cadence: cols.f64(&mut row, "cadence"),
                torque: cols.f64(&mut row, "torque"),
                power: cols.f64(&mut row, "power"),
                extras: row.into_extras(),
            };
            out.trips[slot].metrics.push(m);
        }
    }

    for table in tables_of(TableSemantics::Raw) {
        let rows: Vec<Extras> = db.rows(&table)?.into_iter().map(Row::into_extras).collect();
        out.raw_leftovers.insert(table, LeftoverTable { row_count: rows.len(), rows });
    }

    warnings.extend(out.quarantined.iter().map(|q| format!("{} row {:?}: {}", q.table, q.row_id, q.reason)));
    Ok(Parsed::new(out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::sqlite::tests::make_db;

    fn fixture(dir: &Path) -> std::path::PathBuf {
        let p = dir.join("tracking.db");
        make_db(
            &p,
            "CREATE TABLE trips (trip_id INTEGER PRIMARY KEY, start_time INTEGER, end_time INTEGER, distance REAL, label TEXT);
             CREATE TABLE trip_points (trip_id INTEGER, timestamp INTEGER, latitude REAL, longitude REAL, altitude REAL, speed REAL);
             CREATE TABLE trip_rider_metrics (trip_id INTEGER, timestamp INTEGER, heart_rate REAL, cadence REAL);
             CREATE TABLE xyz (a TEXT);
             INSERT INTO trips VALUES (7, 1686730000000, 1686733600000, 12000.0, 'commute');
             INSERT INTO trip_points VALUES (7, 1686730000000, 48.1, 11.5, 520, 5.0);
             INSERT INTO trip_points VALUES (7, 1686730005000, 48.1003, 11.5, 521, 5.2);
             INSERT INTO trip_points VALUES (9, 1686730005000, 48.1003, 11.5, 521, 5.2);
             INSERT INTO trip_rider_metrics VALUES (7, 1686730000000, 120, 70);
             INSERT INTO xyz VALUES ('q');",
        );
        p
    }

    #[test]
    fn profile_driven_decode() {
        let dir = tempfile::tempdir().unwrap();
        let parsed = parse_tracking_db(&fixture(dir.path()), &SchemaProfile::default()).unwrap();
        let t = parsed.value;
        assert_eq!(t.trips.len(), 1);
        let trip = &t.trips[0];
        assert_eq!(trip.trip_id, "7");
        assert_eq!(trip.points.len(), 2);
        assert_eq!(trip.points[1].speed, Some(5.2));
        assert_eq!(trip.metrics[0].heart_rate, Some(120.0));
        assert_eq!(trip.extras["label"], "commute");
        assert_eq!(t.raw_leftovers["xyz"].row_count, 1);
        assert_eq!(t.tables["xyz"], TableSemantics::Raw);
        assert_eq!(t.quarantined.len(), 1);
    }

    #[test]
    fn empty_profile_dumps_everything() {
        let dir = tempfile::tempdir().unwrap();
        let profile = SchemaProfile { name: "none".into(), tables: BTreeMap::new(), columns: BTreeMap::new() };
        let t = parse_tracking_db(&fixture(dir.path()), &profile).unwrap().value;
        assert!(t.trips.is_empty());
        assert_eq!(t.raw_leftovers.len(), 4);
        assert_eq!(t.raw_leftovers["trip_points"].row_count, 3);
    }

    #[test]
    fn shipped_profile_parses() {
        let p = SchemaProfile::default();
        assert_eq!(p.semantics_of("Trip_Points"), TableSemantics::TripPoints);
        assert_eq!(p.semantics_of("unknown"), TableSemantics::Raw);
    }
}
