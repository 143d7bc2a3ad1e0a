//! Read-only access to SQLite containers with name-tolerant column lookup.

use std::path::Path;

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde_json::Value;

use super::{normalize_key, value_as_bool, value_as_f64, value_as_string, value_as_time, ArtifactError, Extras};
use crate::time::Timestamp;

pub struct Database {
    conn: Connection,
}

fn sql_err(e: rusqlite::Error) -> ArtifactError {
    ArtifactError::Sqlite(e.to_string())
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

impl Database {
    /// Opens with `immutable=1` so nothing (journal, WAL, shm) is ever written
    /// next to the evidence copy.
    pub fn open(path: &Path) -> Result<Self, ArtifactError> {
        if !path.is_file() {
            return Err(ArtifactError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} not found", path.display()),
            )));
        }
        let abs = path.canonicalize()?;
        let uri = format!("file:{}?mode=ro&immutable=1", percent_encode(&abs.to_string_lossy()));
        let flags = OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_URI | OpenFlags::SQLITE_OPEN_NO_MUTEX;
        let conn = Connection::open_with_flags(uri, flags).map_err(sql_err)?;
        // Touch the schema so a non-database file fails here, not later.
        conn.query_row("SELECT count(*) FROM sqlite_master", [], |r| r.get::<_, i64>(0)).map_err(sql_err)?;
        Ok(Self { conn })
    }

    /// User tables, sorted by name.
    pub fn tables(&self) -> Result<Vec<String>, ArtifactError> {
        let mut stmt = self
            .conn
            .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' ORDER BY name")
            .map_err(sql_err)?;
        let names = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(sql_err)?;
        names.collect::<Result<_, _>>().map_err(sql_err)
    }

    /// Case- and punctuation-insensitive table lookup.
    pub fn find_table(&self, wanted: &str) -> Result<Option<String>, ArtifactError> {
        let key = normalize_key(wanted);
        Ok(self.tables()?.into_iter().find(|t| normalize_key(t) == key))
    }

    /// All rows in storage (rowid) order.
    pub fn rows(&self, table: &str) -> Result<Vec<Row>, ArtifactError> {
        let q = quote_ident(table);
        match self.query(&format!("SELECT rowid AS __rowid__, * FROM {q} ORDER BY rowid"), true) {
            Ok(rows) => Ok(rows),
            // WITHOUT ROWID tables.
            Err(_) => self.query(&format!("SELECT * FROM {q}"), false),
        }
    }

    fn query(&self, sql: &str, with_rowid: bool) -> Result<Vec<Row>, ArtifactError> {
        let mut stmt = self.conn.prepare(sql).map_err(sql_err)?;
        let names: Vec<String> = stmt.column_names().into_iter().map(String::from).collect();
        let mut rows = stmt.query([]).map_err(sql_err)?;
        let mut out = Vec::new();
        while let Some(r) = rows.next().map_err(sql_err)? {
            let mut row = Row { row_id: None, cols: Vec::with_capacity(names.len()) };
            for (i, name) in names.iter().enumerate() {
                let v = to_json(r.get_ref(i).map_err(sql_err)?);
                if with_rowid && i == 0 {
                    row.row_id = v.as_i64();
                } else {
                    row.cols.push((name.clone(), v));
                }
            }
            out.push(row);
        }
        Ok(out)
    }
}

fn percent_encode(path: &str) -> String {
    path.bytes()
        .map(|b| match b {
            b'?' | b'#' | b'%' => format!("%{b:02X}"),
            _ if b.is_ascii() => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

fn to_json(v: ValueRef<'_>) -> Value {
    match v {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => Value::from(i),
        ValueRef::Real(f) => serde_json::Number::from_f64(f).map(Value::Number).unwrap_or(Value::Null),
        ValueRef::Text(t) => Value::String(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => serde_json::json!({ "blob_hex": hex::encode(b) }),
    }
}

/// One row whose columns are consumed by alias; whatever is left becomes extras.
#[derive(Clone, Debug)]
pub struct Row {
    pub row_id: Option<i64>,
    cols: Vec<(String, Value)>,
}

impl Row {
    fn position(&self, aliases: &[&str]) -> Option<usize> {
        aliases.iter().find_map(|alias| {
            let wanted = normalize_key(alias);
            self.cols.iter().position(|(name, _)| normalize_key(name) == wanted)
        })
    }

    pub fn has(&self, aliases: &[&str]) -> bool {
        self.position(aliases).is_some()
    }

    /// Removes the column only when `conv` accepts its value; NULL is consumed
    /// as absent. Unconvertible values stay and surface in extras.
    pub fn take_with<T>(&mut self, aliases: &[&str], conv: impl Fn(&Value) -> Option<T>) -> Option<T> {
        let i = self.position(aliases)?;
        if self.cols[i].1.is_null() {
            self.cols.remove(i);
            return None;
        }
        let out = conv(&self.cols[i].1)?;
        self.cols.remove(i);
        Some(out)
    }

    pub fn take_value(&mut self, aliases: &[&str]) -> Option<Value> {
        let i = self.position(aliases)?;
        Some(self.cols.remove(i).1)
    }

    pub fn take_string(&mut self, aliases: &[&str]) -> Option<String> {
        self.take_with(aliases, value_as_string)
    }

    pub fn take_f64(&mut self, aliases: &[&str]) -> Option<f64> {
        self.take_with(aliases, value_as_f64)
    }

    pub fn take_i64(&mut self, aliases: &[&str]) -> Option<i64> {
        self.take_with(aliases, |v| match v {
            Value::Number(n) => n.as_i64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        })
    }

    pub fn take_bool(&mut self, aliases: &[&str]) -> Option<bool> {
        self.take_with(aliases, value_as_bool)
    }

    pub fn take_time(&mut self, aliases: &[&str]) -> Option<Timestamp> {
        self.take_with(aliases, value_as_time)
    }

    /// True when the column exists with a non-NULL value that no `take_*`
    /// has claimed, i.e. a value that failed to decode.
    pub fn holds(&self, aliases: &[&str]) -> bool {
        self.position(aliases).map(|i| !self.cols[i].1.is_null()).unwrap_or(false)
    }

    pub fn into_extras(self) -> Extras {
        self.cols.into_iter().collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn make_db(path: &Path, sql: &str) {
        let conn = Connection::open(path).unwrap();
        conn.execute_batch(sql).unwrap();
    }

    #[test]
    fn rows_and_aliases() {
        let dir = tempfile::tempdir().unwrap();
        let db = dir.path().join("t.db");
        make_db(
            &db,
            "CREATE TABLE Things (UserId TEXT, Max_Speed REAL, note TEXT, raw BLOB);
             INSERT INTO Things VALUES ('u1', 12.5, 'x', x'00ff');
             INSERT INTO Things VALUES ('u2', 'fast', NULL, NULL);",
        );
        let db = Database::open(&db).unwrap();
        assert_eq!(db.tables().unwrap(), vec!["Things"]);
        assert_eq!(db.find_table("things").unwrap().as_deref(), Some("Things"));
        let mut rows = db.rows("Things").unwrap();
        assert_eq!(rows[0].row_id, Some(1));
        assert_eq!(rows[0].take_string(&["userid"]).as_deref(), Some("u1"));
        assert_eq!(rows[0].take_f64(&["maxspeed"]), Some(12.5));
        let extras = rows[0].clone().into_extras();
        assert_eq!(extras["raw"], serde_json::json!({"blob_hex": "00ff"}));
        assert_eq!(extras["note"], "x");

        // Undecodable values stay put rather than vanishing.
        assert_eq!(rows[1].take_f64(&["maxspeed"]), None);
        assert!(rows[1].holds(&["maxspeed"]));
        assert_eq!(rows[1].clone().into_extras()["Max_Speed"], "fast");
    }

    #[test]
    fn rejects_non_database() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.db");
        std::fs::write(&p, vec![0x42u8; 4096]).unwrap();
        assert!(matches!(Database::open(&p), Err(ArtifactError::Sqlite(_))));
        assert!(matches!(Database::open(&dir.path().join("none.db")), Err(ArtifactError::Io(_))));
    }

    #[test]
    fn open_leaves_no_side_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.db");
        make_db(&p, "PRAGMA journal_mode=WAL; CREATE TABLE a (x); INSERT INTO a VALUES (1);");
        // Remove sidecars the writer left behind before taking the snapshot.
        for s in ["w.db-wal", "w.db-shm"] {
            let _ = std::fs::remove_file(dir.path().join(s));
        }
        let before: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        let bytes = std::fs::read(&p).unwrap();
        let db = Database::open(&p).unwrap();
        assert_eq!(db.rows("a").unwrap().len(), 1);
        drop(db);
        let after: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(before, after);
        assert_eq!(bytes, std::fs::read(&p).unwrap());
    }

    #[test]
    fn uri_escaping() {
        assert_eq!(percent_encode("/a/b?c#d%e"), "/a/b%3Fc%23d%25e");
        assert_eq!(percent_encode("/ä"), "/%C3%A4");
    }
}
