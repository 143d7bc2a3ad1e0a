//! Published artifact excerpts, stored verbatim with their elisions and
//! redaction markers, decoded both directly and from canonical locations.

use std::fs;
use std::path::Path;

use nyonscope::artifacts::{
    parse_gnss_settings, parse_user_profile, parse_wifi_manager_settings, BundleOptions, DiagnosticLevel,
};
use nyonscope::chronicle::{build_timeline, EventSource};
use nyonscope::{assemble_bundle, FileTree, Generation, Timestamp};

const USER_OBJECT: &[u8] = include_bytes!("data/user_object_excerpt.json");
const WIFI_MANAGER: &[u8] = include_bytes!("data/wifi_manager_excerpt.json");
const GNSS_SETTINGS: &[u8] = include_bytes!("data/gnss_settings_excerpt.json");

fn place(root: &Path, rel: &str, bytes: &[u8]) {
    let p = root.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, bytes).unwrap();
}

#[test]
fn user_object_excerpt() {
    let p = parse_user_profile(USER_OBJECT, Generation::Gen1).unwrap().value;
    assert_eq!(p.first_name.as_deref(), Some("Jane"));
    assert_eq!(p.last_name.as_deref(), Some("Doe"));
    assert_eq!(p.user_id.as_deref(), Some("1234567890123"));
    assert_eq!(p.date_of_birth.as_deref(), Some("2000-01-01"));
    assert_eq!(p.email.as_deref(), Some("janedoe@example.com"));
    assert_eq!(p.gender.as_deref(), Some("female"));
    assert!(p.social.contains_key("facebook"));
    assert!(p.social.contains_key("twitter"));
}

#[test]
fn wifi_manager_excerpt() {
    let nets = parse_wifi_manager_settings(WIFI_MANAGER).unwrap().value;
    assert_eq!(nets.len(), 1);
    assert_eq!(nets[0].ssid, "Galaxy Note10+0c95");
    assert_eq!(nets[0].security.as_deref(), Some("WPA2"));
    assert_eq!(nets[0].generation, Generation::Gen2);
}

#[test]
fn gnss_settings_excerpt() {
    let g = parse_gnss_settings(GNSS_SETTINGS).unwrap().value;
    let lp = &g.last_position;
    assert_eq!(lp.altitude, Some(311.0));
    assert_eq!(lp.timestamp, 1_686_737_311_649);
    assert_eq!(lp.time, Timestamp::parse("2023-06-14T10:08:31.649Z").unwrap());
    assert_eq!(lp.time.to_rfc3339(), "2023-06-14T10:08:31.649Z");
    assert!((lp.speed.unwrap() - 0.326_672_226_190_567).abs() < 1e-15);
    // Redacted coordinates stay absent rather than being invented.
    assert_eq!(lp.latitude, None);
    assert_eq!(lp.longitude, None);
}

#[test]
fn excerpts_at_canonical_locations() {
    let gen1 = tempfile::tempdir().unwrap();
    place(gen1.path(), "home/appdata/Main/Apps/Settings/1234567890123/userObject.json", USER_OBJECT);
    let b = assemble_bundle(&FileTree::new(gen1.path()), &BundleOptions::default());
    assert_eq!(b.generation, Generation::Gen1);
    let profile = b.profile.expect("profile decoded");
    assert_eq!(profile.data.first_name.as_deref(), Some("Jane"));
    assert_eq!(profile.source.path, "home/appdata/Main/Apps/Settings/1234567890123/userObject.json");
    assert_eq!(profile.source.sha256, nyonscope::canonical::sha256_hex(USER_OBJECT));

    let gen2 = tempfile::tempdir().unwrap();
    place(gen2.path(), "system/db/WifiManagerSettings.json", WIFI_MANAGER);
    place(gen2.path(), "system/db/gnssSettings.json", GNSS_SETTINGS);
    place(gen2.path(), "users/buiowner/data/system/db/.keep", b"");
    let b = assemble_bundle(&FileTree::new(gen2.path()), &BundleOptions::default());
    assert_eq!(b.generation, Generation::Gen2);
    assert_eq!(b.wifi.len(), 1);
    assert_eq!(b.wifi[0].data.ssid, "Galaxy Note10+0c95");
    assert_eq!(b.last_position.as_ref().unwrap().data.last_position.altitude, Some(311.0));
    assert!(b.diagnostics.iter().all(|d| d.level != DiagnosticLevel::Error), "{:?}", b.diagnostics);

    let t = build_timeline(&b);
    let gnss: Vec<_> = t.events.iter().filter(|e| e.source == EventSource::Gnss).collect();
    assert_eq!(gnss.len(), 1);
    assert_eq!(gnss[0].time.millis(), 1_686_737_311_649);
}
