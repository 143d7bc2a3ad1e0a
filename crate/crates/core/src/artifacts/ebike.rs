use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sqlite::{Database, Row};
use super::{ArtifactError, Extras, LeftoverTable, Parsed, Quarantined, TablePresence, TrackPoint};
use crate::time::Timestamp;

pub const EBIKE_TABLES: [&str; 7] =
    ["Activities", "AmbientData", "BikeBattery", "DriveUnit", "Operational", "Driver", "Localization"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub row_id: Option<i64>,
    pub user_id: Option<String>,
    pub timestamp: Timestamp,
    pub stop_time: Option<Timestamp>,
    /// Metres.
    pub distance: Option<f64>,
    pub drive_unit_serial: Option<String>,
    pub battery_pack_serials: Option<String>,
    pub calories: Option<f64>,
    pub max_speed: Option<f64>,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientSample {
    pub row_id: Option<i64>,
    pub user_id: Option<String>,
    pub timestamp: Timestamp,
    pub temperature: Option<f64>,
    pub air_pressure: Option<f64>,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatterySample {
    pub row_id: Option<i64>,
    pub user_id: Option<String>,
    pub timestamp: Timestamp,
    pub state_of_charge: Option<f64>,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveUnitSample {
    pub row_id: Option<i64>,
    pub user_id: Option<String>,
    pub timestamp: Timestamp,
    pub is_moving: Option<bool>,
    /// Metres.
    pub odometer: Option<f64>,
    pub speed: Option<f64>,
    pub torque: Option<f64>,
    pub revolution: Option<f64>,
    pub power: Option<f64>,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalSample {
    pub row_id: Option<i64>,
    pub user_id: Option<String>,
    pub timestamp: Timestamp,
    pub bui_operational: Option<bool>,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverSample {
    pub row_id: Option<i64>,
    pub user_id: Option<String>,
    pub timestamp: Timestamp,
    pub heart_rate: Option<f64>,
    pub driver_cadence: Option<f64>,
    pub driver_torque: Option<f64>,
    pub driver_power: Option<f64>,
    pub extras: Extras,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub row_id: Option<i64>,
    pub user_id: Option<String>,
    pub timestamp: Timestamp,
    pub point: TrackPoint,
    pub extras: Extras,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EBikeData {
    pub activities: Vec<Activity>,
    pub ambient: Vec<AmbientSample>,
    pub bike_battery: Vec<BatterySample>,
    pub drive_unit: Vec<DriveUnitSample>,
    pub operational: Vec<OperationalSample>,
    pub driver: Vec<DriverSample>,
    pub localization: Vec<LocalizationRow>,
    /// Presence and row count for each of the seven known tables.
    pub tables: BTreeMap<String, TablePresence>,
    pub other_tables: BTreeMap<String, LeftoverTable>,
    pub quarantined: Vec<Quarantined>,
}

impl EBikeData {
    pub fn track(&self) -> Vec<TrackPoint> {
        self.localization.iter().map(|r| r.point.clone()).collect()
    }
}

struct Head {
    row_id: Option<i64>,
    user_id: Option<String>,
    timestamp: Timestamp,
}

/// Decodes one table; rows without a usable timestamp or failing `build`
/// are quarantined.
fn decode<T>(
    db: &Database,
    canonical: &str,
    out: &mut EBikeData,
    build: impl Fn(Head, Row) -> Result<T, String>,
) -> Result<Vec<T>, ArtifactError> {
    let Some(table) = db.find_table(canonical)? else {
        out.tables.insert(canonical.to_string(), TablePresence { present: false, rows: 0 });
        return Ok(Vec::new());
    };
    let rows = db.rows(&table)?;
    out.tables.insert(canonical.to_string(), TablePresence { present: true, rows: rows.len() });
    let mut decoded = Vec::with_capacity(rows.len());
    for mut row in rows {
        let row_id = row.row_id;
        let user_id = row.take_string(&["UserId"]);
        let Some(timestamp) = row.take_time(&["TimeStamp"]) else {
            out.quarantined.push(Quarantined {
                table: canonical.to_string(),
                row_id,
                reason: "TimeStamp missing or not decodable".into(),
            });
            continue;
        };
        match build(Head { row_id, user_id, timestamp }, row) {
            Ok(v) => decoded.push(v),
            Err(reason) => out.quarantined.push(Quarantined { table: canonical.to_string(), row_id, reason }),
        }
    }
    Ok(decoded)
}

pub fn parse_ebike_db(path: &Path) -> Result<Parsed<EBikeData>, ArtifactError> {
    let db = Database::open(path)?;
    let mut out = EBikeData::default();

    out.activities = decode(&db, "Activities", &mut out, |h, mut r| {
        Ok(Activity {
            row_id: h.row_id,
            user_id: h.user_id,
            timestamp: h.timestamp,
            stop_time: r.take_time(&["StopTime"]),
            distance: r.take_f64(&["Distance"]),
            drive_unit_serial: r.take_string(&["DriveUnitSerial"]),
            battery_pack_serials: r.take_string(&["BatteryPackSerials"]),
            calories: r.take_f64(&["Calories"]),
            max_speed: r.take_f64(&["Max. Speed", "MaxSpeed"]),
            extras: r.into_extras(),
        })
    })?;
    out.ambient = decode(&db, "AmbientData", &mut out, |h, mut r| {
        Ok(AmbientSample {
            row_id: h.row_id,
            user_id: h.user_id,
            timestamp: h.timestamp,
            temperature: r.take_f64(&["Temperature", "AmbientTemperature"]),
            air_pressure: r.take_f64(&["AirPressure", "Pressure"]),
            extras: r.into_extras(),
        })
    })?;
    out.bike_battery = decode(&db, "BikeBattery", &mut out, |h, mut r| {
        Ok(BatterySample {
            row_id: h.row_id,
            user_id: h.user_id,
            timestamp: h.timestamp,
            state_of_charge: r.take_f64(&["stateOfCharge"]),
            extras: r.into_extras(),
        })
    })?;
    out.drive_unit = decode(&db, "DriveUnit", &mut out, |h, mut r| {
        Ok(DriveUnitSample {
            row_id: h.row_id,
            user_id: h.user_id,
            timestamp: h.timestamp,
            is_moving: r.take_bool(&["isMoving"]),
            odometer: r.take_f64(&["odometer"]),
            speed: r.take_f64(&["Speed", "BikeSpeed"]),
            torque: r.take_f64(&["Torque", "MotorTorque"]),
            revolution: r.take_f64(&["Revolution", "MotorRevolution"]),
            power: r.take_f64(&["Power", "MotorPower"]),
            extras: r.into_extras(),
        })
    })?;
    out.operational = decode(&db, "Operational", &mut out, |h, mut r| {
        Ok(OperationalSample {
            row_id: h.row_id,
            user_id: h.user_id,
            timestamp: h.timestamp,
            bui_operational: r.take_bool(&["BUI", "BuiOperational", "Operational"]),
            extras: r.into_extras(),
        })
    })?;
    out.driver = decode(&db, "Driver", &mut out, |h, mut r| {
        Ok(DriverSample {
            row_id: h.row_id,
            user_id: h.user_id,
            timestamp: h.timestamp,
            heart_rate: r.take_f64(&["heartRate"]),
            driver_cadence: r.take_f64(&["driverCadence"]),
            driver_torque: r.take_f64(&["driverTorque"]),
            driver_power: r.take_f64(&["driverPower"]),
            extras: r.into_extras(),
        })
    })?;
    out.localization = decode(&db, "Localization", &mut out, |h, mut r| {
        let lat = r.take_f64(&["Latitude", "lat"]).ok_or("latitude missing")?;
        let lon = r.take_f64(&["Longitude", "lon", "lng"]).ok_or("longitude missing")?;
        let point = TrackPoint::new(lat, lon)
            .map_err(|e| e.to_string())?
            .with_altitude(r.take_f64(&["SensorAltitude", "Altitude"]))
            .with_time(Some(h.timestamp));
        Ok(LocalizationRow {
            row_id: h.row_id,
            user_id: h.user_id,
            timestamp: h.timestamp,
            point,
            extras: r.into_extras(),
        })
    })?;

    let known: Vec<String> = EBIKE_TABLES.iter().map(|t| super::normalize_key(t)).collect();
    for table in db.tables()? {
        if !known.contains(&super::normalize_key(&table)) {
            let rows: Vec<Extras> = db.rows(&table)?.into_iter().map(Row::into_extras).collect();
            out.other_tables.insert(table, LeftoverTable { row_count: rows.len(), rows });
        }
    }

    let warnings = out
        .quarantined
        .iter()
        .map(|q| format!("{} row {}: {}", q.table, q.row_id.map_or("?".into(), |r| r.to_string()), q.reason))
        .collect();
    Ok(Parsed::new(out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::sqlite::tests::make_db;

    const SCHEMA: &str = "
        CREATE TABLE Activities (UserId TEXT, TimeStamp INTEGER, StopTime INTEGER, Distance REAL,
            DriveUnitSerial TEXT, BatteryPackSerials TEXT, Calories REAL, \"Max. Speed\" REAL, Route TEXT);
        CREATE TABLE DriveUnit (UserId TEXT, TimeStamp INTEGER, isMoving INTEGER, odometer REAL,
            Speed REAL, Torque REAL, Revolution REAL, Power REAL);
        CREATE TABLE Localization (UserId TEXT, TimeStamp INTEGER, Latitude REAL, Longitude REAL, SensorAltitude REAL);
    ";

    #[test]
    fn decodes_present_tables_and_reports_absent() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("EBike");
        make_db(
            &p,
            &format!(
                "{SCHEMA}
                INSERT INTO Activities VALUES ('u', 1686730000, 1686733600, 15200.5, 'DU1', 'BP1;BP2', 410, 27.1, 'x');
                INSERT INTO DriveUnit VALUES ('u', 1686730000000, 1, 1523000, 5.5, 40, 70, 250);
                INSERT INTO Localization VALUES ('u', 1686730000, 48.1, 11.5, 520.0);
                INSERT INTO Localization VALUES ('u', 1686730010, 95.0, 11.5, 520.0);
                INSERT INTO Localization VALUES ('u', NULL, 48.1, 11.5, 520.0);"
            ),
        );
        let parsed = parse_ebike_db(&p).unwrap();
        let d = parsed.value;
        assert_eq!(d.activities[0].max_speed, Some(27.1));
        assert_eq!(d.activities[0].extras["Route"], "x");
        assert_eq!(d.activities[0].timestamp, Timestamp::from_secs(1686730000).unwrap());
        assert_eq!(d.drive_unit[0].is_moving, Some(true));
        assert_eq!(d.drive_unit[0].timestamp, Timestamp::from_millis(1686730000000).unwrap());
        assert_eq!(d.localization.len(), 1);
        assert_eq!(d.localization[0].point.altitude, Some(520.0));
        assert_eq!(d.quarantined.len(), 2);
        assert_eq!(parsed.warnings.len(), 2);
        assert_eq!(d.tables["Localization"], TablePresence { present: true, rows: 3 });
        assert_eq!(d.tables["Driver"], TablePresence { present: false, rows: 0 });
        assert_eq!(d.tables.len(), 7);
    }

    #[test]
    fn synchronized_device_has_empty_track() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("EBike");
        make_db(&p, SCHEMA);
        let d = parse_ebike_db(&p).unwrap().value;
        assert!(d.track().is_empty());
        assert!(d.tables["Localization"].present);
    }

    #[test]
    fn unknown_tables_kept() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("EBike");
        make_db(&p, "CREATE TABLE Extra (a); INSERT INTO Extra VALUES (1);");
        let d = parse_ebike_db(&p).unwrap().value;
        assert_eq!(d.other_tables["Extra"].row_count, 1);
    }
}
