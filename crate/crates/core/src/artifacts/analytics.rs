use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::sqlite::Database;
use super::{ArtifactError, Extras, Parsed};
use crate::time::Timestamp;

pub const ANALYTICS_TABLE: &str = "analytics_events";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsEvent {
    pub row_id: Option<i64>,
    pub timestamp: Timestamp,
    /// E.g. `BUI350_SYSTEM_WAKEUP`.
    pub kind: String,
    /// Decoded parameter object; empty when the row has none.
    pub params: Extras,
    /// Parameter text that is present but not a JSON object.
    pub params_raw: Option<String>,
    pub extras: Extras,
}

pub fn parse_analytics_db(path: &Path) -> Result<Parsed<Vec<AnalyticsEvent>>, ArtifactError> {
    let db = Database::open(path)?;
    let table = db
        .find_table(ANALYTICS_TABLE)?
        .ok_or_else(|| ArtifactError::MissingTable(ANALYTICS_TABLE.into()))?;
    let mut events = Vec::new();
    let mut warnings = Vec::new();
    for mut row in db.rows(&table)? {
        let row_id = row.row_id;
        let Some(timestamp) = row.take_time(&["timestamp", "time", "created_at"]) else {
            warnings.push(format!("{table} row {row_id:?}: timestamp missing or not decodable, quarantined"));
            continue;
        };
        let kind = match row.take_string(&["event", "name", "type", "event_name"]) {
            Some(k) if !k.trim().is_empty() => k,
            _ => {
                warnings.push(format!("{table} row {row_id:?}: empty event kind, quarantined"));
                continue;
            }
        };
        let (params, params_raw) = match row.take_value(&["params", "parameters", "data"]) {
            None | Some(Value::Null) => (Extras::new(), None),
            Some(Value::String(s)) if s.trim().is_empty() => (Extras::new(), None),
            Some(Value::String(s)) => match serde_json::from_str::<Value>(&s) {
                Ok(Value::Object(m)) => (m.into_iter().collect(), None),
                _ => (Extras::new(), Some(s)),
            },
            Some(other) => (Extras::new(), Some(other.to_string())),
        };
        events.push(AnalyticsEvent { row_id, timestamp, kind, params, params_raw, extras: row.into_extras() });
    }
    Ok(Parsed::new(events, warnings))
}
