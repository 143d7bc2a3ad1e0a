use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sqlite::Database;
use super::{ArtifactError, Extras, Parsed, Quarantined};

/// One row of `ChartsData`. The table has no time column; rows are only
/// ordered by the cumulative distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartsSample {
    pub row_id: Option<i64>,
    pub user_id: Option<String>,
    /// Metres.
    pub nt_distance: f64,
    pub altitude: Option<f64>,
    pub speed: Option<f64>,
    pub driver_cadence: Option<f64>,
    pub heart_rate: Option<f64>,
    pub state_of_charge: Option<f64>,
    pub consumption: Option<f64>,
    pub power: Option<f64>,
    pub extras: Extras,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChartsData {
    pub samples: Vec<ChartsSample>,
    pub quarantined: Vec<Quarantined>,
}

pub const CHARTS_TABLE: &str = "ChartsData";

pub fn parse_charts_db(path: &Path) -> Result<Parsed<ChartsData>, ArtifactError> {
    let db = Database::open(path)?;
    let table = db.find_table(CHARTS_TABLE)?.ok_or_else(|| ArtifactError::MissingTable(CHARTS_TABLE.into()))?;
    let mut out = ChartsData::default();
    for mut row in db.rows(&table)? {
        let row_id = row.row_id;
        let nt_distance = match row.take_f64(&["NTDistance"]) {
            Some(d) if d >= 0.0 && d.is_finite() => d,
            other => {
                let reason = match other {
                    Some(d) => format!("negative NTDistance {d}"),
                    None => "NTDistance missing or not numeric".to_string(),
                };
                out.quarantined.push(Quarantined { table: table.clone(), row_id, reason });
                continue;
            }
        };
        out.samples.push(ChartsSample {
            row_id,
            user_id: row.take_string(&["UserId"]),
            nt_distance,
            altitude: row.take_f64(&["Altitude"]),
            speed: row.take_f64(&["Speed"]),
            driver_cadence: row.take_f64(&["driverCadence"]),
            heart_rate: row.take_f64(&["heartRate"]),
            state_of_charge: row.take_f64(&["stateOfCharge"]),
            consumption: row.take_f64(&["Consumption"]),
            power: row.take_f64(&["Power"]),
            extras: row.into_extras(),
        });
    }
    let warnings = out.quarantined.iter().map(|q| format!("{} row {:?}: {}", q.table, q.row_id, q.reason)).collect();
    Ok(Parsed::new(out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::sqlite::tests::make_db;

    #[test]
    fn distance_steps_and_column_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("EBikeCharts");
        make_db(
            &p,
            "CREATE TABLE ChartsData (Power REAL, NTDistance INTEGER, UserId TEXT, Altitude REAL, Speed REAL,
                 driverCadence REAL, heartRate REAL, stateOfCharge REAL, Consumption REAL, Gear INTEGER);
             INSERT INTO ChartsData VALUES (210, 66175, '1234567890123', 300.5, 6.1, 72, 130, 81, 9.5, 3);
             INSERT INTO ChartsData VALUES (215, 66200, '1234567890123', 300.9, 6.3, 74, 131, 81, 9.6, 3);",
        );
        let d = parse_charts_db(&p).unwrap().value;
        assert_eq!(d.samples.len(), 2);
        assert_eq!(d.samples[1].nt_distance - d.samples[0].nt_distance, 25.0);
        assert_eq!(d.samples[0].power, Some(210.0));
        assert_eq!(d.samples[0].extras["Gear"], 3);
    }

    #[test]
    fn empty_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.db");
        make_db(&p, "CREATE TABLE ChartsData (NTDistance INTEGER);");
        assert!(parse_charts_db(&p).unwrap().value.samples.is_empty());
        let q = dir.path().join("d.db");
        make_db(&q, "CREATE TABLE Other (x);");
        assert!(matches!(parse_charts_db(&q), Err(ArtifactError::MissingTable(_))));
    }

    #[test]
    fn negative_distance_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.db");
        make_db(&p, "CREATE TABLE ChartsData (NTDistance INTEGER); INSERT INTO ChartsData VALUES (-5), (10);");
        let parsed = parse_charts_db(&p).unwrap();
        assert_eq!(parsed.value.samples.len(), 1);
        assert_eq!(parsed.value.quarantined.len(), 1);
        assert_eq!(parsed.warnings.len(), 1);
    }
}
