use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::sqlite::{Database, Row};
use super::{ArtifactError, Extras, Parsed, Quarantined};
use crate::geo::valid_coordinate;
use crate::time::Timestamp;

/// A row of `Locations` or `Recents`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavPlace {
    pub row_id: Option<i64>,
    /// The address text.
    pub name: Option<String>,
    pub latitude: f64,
    pub longitude: f64,
    pub modified: Option<Timestamp>,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavRoute {
    pub row_id: Option<i64>,
    pub name: Option<String>,
    pub latitude: f64,
    pub longitude: f64,
    pub modified: Option<Timestamp>,
    /// `[lat, lon]` pairs when the row carries a waypoint list.
    pub waypoints: Vec<[f64; 2]>,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consumption {
    pub row_id: Option<i64>,
    pub vector: Vec<f64>,
    pub extras: Extras,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NavData {
    pub consumptions: Vec<Consumption>,
    pub locations: Vec<NavPlace>,
    pub routes: Vec<NavRoute>,
    pub recents: Vec<NavPlace>,
    pub quarantined: Vec<Quarantined>,
}

/// JSON array text or a comma/semicolon/space separated list.
fn parse_vector(v: &Value) -> Option<Vec<f64>> {
    let Value::String(s) = v else { return None };
    if let Ok(items) = serde_json::from_str::<Vec<f64>>(s) {
        return Some(items);
    }
    s.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().ok())
        .collect()
}

fn parse_waypoints(v: &Value) -> Option<Vec<[f64; 2]>> {
    let Value::String(s) = v else { return None };
    let pts: Vec<[f64; 2]> = serde_json::from_str(s).ok()?;
    pts.iter().all(|p| valid_coordinate(p[0], p[1])).then_some(pts)
}

fn place(table: &str, row: &mut Row) -> Result<(Option<String>, f64, f64, Option<Timestamp>), Quarantined> {
    let row_id = row.row_id;
    let q = |reason: String| Quarantined { table: table.to_string(), row_id, reason };
    let lat = row.take_f64(&["latitude", "lat"]);
    let lon = row.take_f64(&["longitude", "lon", "lng"]);
    let (Some(lat), Some(lon)) = (lat, lon) else {
        return Err(q("coordinates missing or not numeric".into()));
    };
    if !valid_coordinate(lat, lon) {
        return Err(q(format!("coordinate out of range ({lat}, {lon})")));
    }
    let name = row.take_string(&["name", "address"]);
    let modified = row.take_time(&["modified", "lastModified", "timestamp"]);
    Ok((name, lat, lon, modified))
}

fn places(db: &Database, name: &str, out: &mut NavData) -> Result<Vec<NavPlace>, ArtifactError> {
    let Some(table) = db.find_table(name)? else { return Ok(Vec::new()) };
    let mut list = Vec::new();
    for mut row in db.rows(&table)? {
        match place(&table, &mut row) {
            Ok((name, latitude, longitude, modified)) => list.push(NavPlace {
                row_id: row.row_id,
                name,
                latitude,
                longitude,
                modified,
                extras: row.into_extras(),
            }),
            Err(q) => out.quarantined.push(q),
        }
    }
    Ok(list)
}

pub fn parse_nav_storage(path: &Path) -> Result<Parsed<NavData>, ArtifactError> {
    let db = Database::open(path)?;
    let mut out = NavData::default();
    let mut warnings = Vec::new();

    out.locations = places(&db, "Locations", &mut out)?;
    out.recents = places(&db, "Recents", &mut out)?;

    if let Some(table) = db.find_table("Routes")? {
        for mut row in db.rows(&table)? {
            let waypoints = row.take_with(&["waypoints", "points", "geometry"], parse_waypoints).unwrap_or_default();
            match place(&table, &mut row) {
                Ok((name, latitude, longitude, modified)) => out.routes.push(NavRoute {
                    row_id: row.row_id,
                    name,
                    latitude,
                    longitude,
                    modified,
                    waypoints,
                    extras: row.into_extras(),
                }),
                Err(q) => out.quarantined.push(q),
            }
        }
    }

    if let Some(table) = db.find_table("Consumptions")? {
        for mut row in db.rows(&table)? {
            let vector = row.take_with(&["vector", "consumption", "values"], parse_vector);
            if vector.is_none() {
                warnings.push(format!("{table} row {:?}: no decodable vector; kept raw", row.row_id));
            }
            out.consumptions.push(Consumption {
                row_id: row.row_id,
                vector: vector.unwrap_or_default(),
                extras: row.into_extras(),
            });
        }
    }

    warnings.extend(out.quarantined.iter().map(|q| format!("{} row {:?}: {}", q.table, q.row_id, q.reason)));
    Ok(Parsed::new(out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::sqlite::tests::make_db;

    fn fixture(dir: &Path) -> std::path::PathBuf {
        let p = dir.join("NavStorage.sqlite");
        make_db(
            &p,
            "CREATE TABLE Consumptions (id INTEGER PRIMARY KEY, vector TEXT);
             CREATE TABLE Locations (id INTEGER PRIMARY KEY, name TEXT, latitude REAL, longitude REAL, modified INTEGER);
             CREATE TABLE Routes (id INTEGER PRIMARY KEY, name TEXT, latitude REAL, longitude REAL, modified INTEGER, waypoints TEXT);
             CREATE TABLE Recents (id INTEGER PRIMARY KEY, name TEXT, latitude REAL, longitude REAL, modified INTEGER);
             INSERT INTO Consumptions VALUES (1, '[1.5, 2.0, 2.25]'), (2, '3;4');
             INSERT INTO Locations VALUES (1, 'Home', 48.137, 11.575, 1686700000000), (2, 'Bad', 123.0, 0, 1);
             INSERT INTO Routes VALUES (1, 'Lake loop', 47.9, 11.3, 1686600000, '[[47.9, 11.3], [47.95, 11.31]]');",
        );
        p
    }

    #[test]
    fn four_tables() {
        let dir = tempfile::tempdir().unwrap();
        let parsed = parse_nav_storage(&fixture(dir.path())).unwrap();
        let n = parsed.value;
        assert_eq!(n.consumptions[0].vector, vec![1.5, 2.0, 2.25]);
        assert_eq!(n.consumptions[1].vector, vec![3.0, 4.0]);
        assert_eq!(n.locations.len(), 1);
        assert_eq!(n.locations[0].name.as_deref(), Some("Home"));
        assert_eq!(n.locations[0].modified, Timestamp::from_millis(1686700000000));
        assert_eq!(n.routes[0].waypoints.len(), 2);
        assert!(n.recents.is_empty());
        assert_eq!(n.quarantined.len(), 1);
        assert_eq!(parsed.warnings.len(), 1);
    }
}
