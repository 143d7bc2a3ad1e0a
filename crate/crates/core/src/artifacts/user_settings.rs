use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::sqlite::{Database, Row};
use super::{normalize_key, ArtifactError, Extras, LeftoverTable, Parsed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingEntry {
    pub row_id: Option<i64>,
    /// The `stored_setting` column.
    pub key: String,
    pub value: Value,
    pub extras: Extras,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserSettings {
    pub settings_app: Vec<SettingEntry>,
    pub settings_system: Vec<SettingEntry>,
    /// The remaining tables, normally empty.
    pub other_tables: BTreeMap<String, LeftoverTable>,
}

impl UserSettings {
    pub fn app(&self, key: &str) -> Option<&Value> {
        self.settings_app.iter().find(|e| e.key == key).map(|e| &e.value)
    }

    pub fn system(&self, key: &str) -> Option<&Value> {
        self.settings_system.iter().find(|e| e.key == key).map(|e| &e.value)
    }
}

fn entries(db: &Database, name: &str, warnings: &mut Vec<String>) -> Result<Vec<SettingEntry>, ArtifactError> {
    let Some(table) = db.find_table(name)? else {
        warnings.push(format!("table {name} absent"));
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for mut row in db.rows(&table)? {
        let Some(key) = row.take_string(&["stored_setting", "key", "name"]) else {
            warnings.push(format!("{table} row {:?}: no stored_setting, skipped", row.row_id));
            continue;
        };
        let value = row.take_value(&["value", "setting_value", "stored_value"]).unwrap_or(Value::Null);
        out.push(SettingEntry { row_id: row.row_id, key, value, extras: row.into_extras() });
    }
    Ok(out)
}

pub fn parse_user_settings_db(path: &Path) -> Result<Parsed<UserSettings>, ArtifactError> {
    let db = Database::open(path)?;
    let mut warnings = Vec::new();
    let mut out = UserSettings {
        settings_app: entries(&db, "settings_app", &mut warnings)?,
        settings_system: entries(&db, "settings_system", &mut warnings)?,
        other_tables: BTreeMap::new(),
    };
    for table in db.tables()? {
        let n = normalize_key(&table);
        if n != "settingsapp" && n != "settingssystem" {
            let rows: Vec<Extras> = db.rows(&table)?.into_iter().map(Row::into_extras).collect();
            out.other_tables.insert(table, LeftoverTable { row_count: rows.len(), rows });
        }
    }
    Ok(Parsed::new(out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::sqlite::tests::make_db;

    #[test]
    fn keyed_by_stored_setting() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("user-settings.db");
        make_db(
            &p,
            "CREATE TABLE settings_app (stored_setting TEXT, value TEXT);
             CREATE TABLE settings_system (stored_setting TEXT, value TEXT, updated INTEGER);
             CREATE TABLE settings_widgets (stored_setting TEXT, value TEXT);
             INSERT INTO settings_app VALUES ('developerModeEnabled', 'true'), ('batteryLevel', '87');
             INSERT INTO settings_system VALUES ('weeklyKilometersGoal', '150', 1686700000);",
        );
        let s = parse_user_settings_db(&p).unwrap().value;
        assert_eq!(s.app("developerModeEnabled"), Some(&Value::from("true")));
        assert_eq!(s.system("weeklyKilometersGoal"), Some(&Value::from("150")));
        assert_eq!(s.settings_system[0].extras["updated"], 1686700000);
        assert_eq!(s.other_tables["settings_widgets"].row_count, 0);
    }

    #[test]
    fn empty_db() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.db");
        make_db(&p, "CREATE TABLE settings_app (stored_setting TEXT, value TEXT);");
        let parsed = parse_user_settings_db(&p).unwrap();
        assert!(parsed.value.settings_app.is_empty());
        assert!(parsed.value.settings_system.is_empty());
    }
}
