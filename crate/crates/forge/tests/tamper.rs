use std::collections::BTreeSet;
use std::path::Path;

use nyonscope::artifacts::{assemble_bundle, BundleOptions};
use nyonscope::sentry::{run_checks, Rule, SentryConfig, Severity};
use nyonscope::Generation;
use nyonscope_forge::tamper::ebike_path;
use nyonscope_forge::{emit_case, emit_tree, forge_case, forge_trip, rollback_odometer, ForgeOptions, TimestampMode, Waypoint};
use rusqlite::types::Value;
use rusqlite::Connection;

type RowSet = BTreeSet<(String, i64, String)>;

/// Every row of every table, rendered as text, keyed by table and rowid.
fn rows(db: &Path) -> RowSet {
    let conn = Connection::open(db).unwrap();
    let tables: Vec<String> = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table'")
        .unwrap()
        .query_map([], |r| r.get(0))
        .unwrap()
        .map(Result::unwrap)
        .collect();
    let mut out = BTreeSet::new();
    for t in tables {
        let mut stmt = conn.prepare(&format!("SELECT rowid, * FROM \"{t}\"")).unwrap();
        let names: Vec<String> = stmt.column_names().iter().skip(1).map(|s| s.to_string()).collect();
        let mut q = stmt.query([]).unwrap();
        while let Some(row) = q.next().unwrap() {
            let id: i64 = row.get(0).unwrap();
            let mut cells: Vec<String> = names
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    let v = match row.get::<_, Value>(i + 1).unwrap() {
                        Value::Null => "null".to_string(),
                        Value::Integer(x) => x.to_string(),
                        Value::Real(x) => format!("{x:?}"),
                        Value::Text(s) => format!("{s:?}"),
                        Value::Blob(b) => format!("{b:?}"),
                    };
                    format!("{n}={v}")
                })
                .collect();
            cells.sort();
            out.insert((t.clone(), id, cells.join(",")));
        }
    }
    out
}

fn diff_rows(diff: &nyonscope_forge::TripDiff) -> RowSet {
    diff.inserted
        .iter()
        .map(|r| {
            let mut cells: Vec<String> = r
                .values
                .iter()
                .map(|(n, v)| {
                    let v = match v {
                        serde_json::Value::Null => "null".to_string(),
                        serde_json::Value::Number(x) if x.is_i64() => x.to_string(),
                        serde_json::Value::Number(x) => format!("{:?}", x.as_f64().unwrap()),
                        serde_json::Value::String(s) => format!("{s:?}"),
                        other => other.to_string(),
                    };
                    format!("{n}={v}")
                })
                .collect();
            cells.sort();
            (r.table.clone(), r.row_id, cells.join(","))
        })
        .collect()
}

fn findings(root: &Path) -> Vec<nyonscope::sentry::TamperFinding> {
    let bundle = assemble_bundle(&nyonscope::FileTree::new(root), &BundleOptions::default());
    run_checks(&bundle, &SentryConfig::default())
}

#[test]
fn diff_is_exactly_the_new_rows() {
    for mode in [TimestampMode::Plausible, TimestampMode::Reversed, TimestampMode::Duplicate] {
        let dir = tempfile::tempdir().unwrap();
        let case = forge_case(5, Generation::Gen1, &ForgeOptions { tamper: Some(mode), ..Default::default() });
        let (tree, _) = emit_tree(&case, dir.path()).unwrap();
        let db = tree.path(&ebike_path(&tree).unwrap());
        let before = rows(&db);
        let spec = case.tamper.as_ref().unwrap();
        let diff = forge_trip(&tree, &spec.waypoints, spec.mode).unwrap();
        let after = rows(&db);
        assert!(before.is_subset(&after));
        let added: RowSet = after.difference(&before).cloned().collect();
        assert_eq!(added, diff_rows(&diff), "{mode}");
        assert_eq!(diff.inserted.len(), spec.waypoints.len() + 1);
    }
}

#[test]
fn empty_waypoints_change_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (tree, _) = emit_tree(&forge_case(2, Generation::Gen1, &ForgeOptions::default()), dir.path()).unwrap();
    let db = tree.path(&ebike_path(&tree).unwrap());
    let before = std::fs::read(&db).unwrap();
    let diff = forge_trip(&tree, &[], TimestampMode::Reversed).unwrap();
    assert!(diff.inserted.is_empty());
    assert_eq!(std::fs::read(&db).unwrap(), before);
}

#[test]
fn forged_trip_needs_gen1_tree() {
    let dir = tempfile::tempdir().unwrap();
    let (tree, _) = emit_tree(&forge_case(2, Generation::Gen2, &ForgeOptions::default()), dir.path()).unwrap();
    let w = [Waypoint { latitude: 46.4, longitude: 6.2, altitude: None }];
    assert!(forge_trip(&tree, &w, TimestampMode::Reversed).is_err());
}

#[test]
fn clean_fixtures_have_no_findings() {
    for seed in 0..10 {
        for generation in [Generation::Gen1, Generation::Gen2] {
            let dir = tempfile::tempdir().unwrap();
            emit_tree(&forge_case(seed, generation, &ForgeOptions::default()), dir.path()).unwrap();
            assert_eq!(findings(dir.path()), vec![], "seed {seed} {generation:?}");
        }
    }
}

#[test]
fn sentry_reacts_to_each_timestamp_mode() {
    for seed in 0..10 {
        let run = |mode| {
            let dir = tempfile::tempdir().unwrap();
            let case = forge_case(seed, Generation::Gen1, &ForgeOptions { tamper: Some(mode), ..Default::default() });
            emit_case(&case, dir.path()).unwrap();
            findings(dir.path())
        };
        let reversed = run(TimestampMode::Reversed);
        assert!(reversed.iter().any(|f| f.rule == Rule::MonotonicTime && f.severity == Severity::Alert), "seed {seed}");
        let plausible = run(TimestampMode::Plausible);
        assert!(plausible.iter().all(|f| f.rule != Rule::MonotonicTime), "seed {seed}: {plausible:?}");
        let duplicate = run(TimestampMode::Duplicate);
        assert!(duplicate.iter().any(|f| f.rule == Rule::SpeedPlausibility), "seed {seed}");
    }
}

#[test]
fn rollback_is_an_odometer_alert_on_both_generations() {
    for generation in [Generation::Gen1, Generation::Gen2] {
        for trips in [0, 3] {
            let dir = tempfile::tempdir().unwrap();
            let (tree, _) = emit_tree(&forge_case(4, generation, &ForgeOptions { trips, ..Default::default() }), dir.path()).unwrap();
            let diff = rollback_odometer(&tree, 5_000.0).unwrap();
            assert!(!diff.inserted.is_empty());
            let f = findings(dir.path());
            assert!(f.iter().any(|f| f.rule == Rule::Odometer && f.severity == Severity::Alert), "{generation:?} {trips}: {f:?}");
        }
    }
}
