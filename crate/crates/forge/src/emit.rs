//! Writes a case as an extracted file tree and records, next to it, the
//! bundle a correct decoder must produce from that tree.
//!
//! The expected bundle is assembled from the case values directly; nothing
//! here reads the emitted files back through the toolkit's decoders.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nyonscope::artifacts::*;
use nyonscope::canonical::sha256_hex;
use nyonscope::{FileTree, Generation, Timestamp};
use rusqlite::{params, Connection};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::case::{SyntheticCase, TripSpec};
use crate::image::ImageManifest;
use crate::tamper::TripDiff;
use crate::ForgeError;

pub const GEN1_APPDATA: &str = "home/appdata";
pub const GEN2_USER_DB: &str = "users/buiowner/data/system/db";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub seed: u64,
    pub generation: Generation,
    /// What `assemble_bundle` must return for the emitted tree, before any tampering.
    pub expected_bundle: CaseBundle,
    /// SHA-256 of every emitted file, by tree-relative path.
    pub digests: BTreeMap<String, String>,
    pub image: Option<ImageManifest>,
    pub tamper: Option<TripDiff>,
}

fn obj(pairs: Vec<(&str, Value)>) -> Extras {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn ms(t: Timestamp) -> i64 {
    t.millis()
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub(crate) struct Emitter<'a> {
    root: &'a Path,
    pub digests: BTreeMap<String, String>,
}

impl<'a> Emitter<'a> {
    pub fn new(root: &'a Path) -> Self {
        Self { root, digests: BTreeMap::new() }
    }

    fn prepare(&self, rel: &str) -> Result<std::path::PathBuf, ForgeError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| ForgeError::io(parent, e))?;
        }
        Ok(path)
    }

    fn source(&mut self, rel: &str, bytes: &[u8]) -> Provenance {
        let sha256 = sha256_hex(bytes);
        self.digests.insert(rel.to_string(), sha256.clone());
        Provenance { path: rel.to_string(), sha256, origin: None }
    }

    pub fn file(&mut self, rel: &str, bytes: &[u8]) -> Result<Provenance, ForgeError> {
        let path = self.prepare(rel)?;
        fs::write(&path, bytes).map_err(|e| ForgeError::io(&path, e))?;
        Ok(self.source(rel, bytes))
    }

    /// Creates a fresh SQLite file and runs `fill` inside one transaction.
    pub fn sqlite(&mut self, rel: &str, fill: impl FnOnce(&Connection) -> rusqlite::Result<()>) -> Result<Provenance, ForgeError> {
        let path = self.prepare(rel)?;
        if path.exists() {
            fs::remove_file(&path).map_err(|e| ForgeError::io(&path, e))?;
        }
        let mut conn = Connection::open(&path)?;
        let tx = conn.transaction()?;
        fill(&tx)?;
        tx.commit()?;
        conn.close().map_err(|(_, e)| e)?;
        let bytes = fs::read(&path).map_err(|e| ForgeError::io(&path, e))?;
        Ok(self.source(rel, &bytes))
    }
}

fn empty_bundle(generation: Generation) -> CaseBundle {
    CaseBundle {
        generation,
        origin: None,
        profile: None,
        settings: None,
        user_settings: None,
        bikes: None,
        wifi: Vec::new(),
        bluetooth: Vec::new(),
        charts: None,
        ebike: None,
        tracking: None,
        nav: None,
        analytics: None,
        last_position: None,
        planned_routes: Vec::new(),
        logs: Vec::new(),
        absent: Vec::new(),
        raw_leftovers: BTreeMap::new(),
        diagnostics: Vec::new(),
    }
}

fn track_point(lat: f64, lon: f64) -> TrackPoint {
    TrackPoint { latitude: lat, longitude: lon, altitude: None, time: None, speed: None }
}

/// Writes the case below `root` and returns the tree with its manifest.
pub fn emit_tree(case: &SyntheticCase, root: &Path) -> Result<(FileTree, GroundTruthManifest), ForgeError> {
    fs::create_dir_all(root).map_err(|e| ForgeError::io(root, e))?;
    let mut em = Emitter::new(root);
    let bundle = match case.generation {
        Generation::Gen1 => emit_gen1(case, &mut em)?,
        Generation::Gen2 => emit_gen2(case, &mut em)?,
        Generation::Unknown => return Err(ForgeError::Unsupported("cases need a concrete generation".into())),
    };
    let manifest = GroundTruthManifest {
        seed: case.seed,
        generation: case.generation,
        expected_bundle: bundle,
        digests: em.digests,
        image: None,
        tamper: None,
    };
    Ok((FileTree::new(root), manifest))
}

fn syslog(case: &SyntheticCase, em: &mut Emitter<'_>, rel: &str) -> Result<Artifact<LogFile>, ForgeError> {
    let mut lines = vec!["-- boot --".to_string()];
    let mut entries = Vec::new();
    let mut push = |lines: &mut Vec<String>, t: Timestamp, msg: String| {
        lines.push(format!("{} {msg}", t.to_rfc3339()));
        entries.push(LogEntry { line: lines.len(), time: t, message: msg });
    };
    push(&mut lines, case.epoch, "kernel: Booting Linux on physical CPU 0x0".into());
    for w in &case.wifi {
        push(&mut lines, w.modified, format!("wifi: connected to {}", w.ssid));
    }
    for t in &case.trips {
        push(&mut lines, t.start(), format!("ride: trip {} started", t.id));
        push(&mut lines, t.end(), format!("ride: trip {} stopped", t.id));
    }
    let text = lines.join("\n") + "\n";
    let source = em.file(rel, text.as_bytes())?;
    Ok(Artifact { source, data: LogFile { entries, untimed_lines: 1 } })
}

// ---------------------------------------------------------------- gen-1

fn emit_gen1(case: &SyntheticCase, em: &mut Emitter<'_>) -> Result<CaseBundle, ForgeError> {
    let u = &case.user;
    let b = &case.bike;
    let user_dir = format!("{GEN1_APPDATA}/Main/Apps/Settings/{}", u.user_id);
    let mut bundle = empty_bundle(Generation::Gen1);

    // userObject.json
    let address = json!({"street": u.street, "city": u.city, "country": "CH"});
    let strava = u.strava.clone().map_or(Value::Null, Value::from);
    let doc = json!({
        "user_id": u.user_id, "date_of_birth": u.date_of_birth, "first_name": u.first_name,
        "last_name": u.last_name, "gender": u.gender, "email": u.email, "home_address": address,
        "mobile_phone_number": u.phone, "facebook": null, "twitter": null, "strava": strava,
        "locale": "en_GB", "units": "metric"
    });
    let source = em.file(&format!("{user_dir}/userObject.json"), serde_json::to_string_pretty(&doc)?.as_bytes())?;
    bundle.profile = Some(Artifact {
        source,
        data: UserProfile {
            user_id: Some(u.user_id.clone()),
            first_name: Some(u.first_name.clone()),
            last_name: Some(u.last_name.clone()),
            gender: Some(u.gender.clone()),
            date_of_birth: Some(u.date_of_birth.clone()),
            email: Some(u.email.clone()),
            home_address: Some(address),
            phone: Some(u.phone.clone()),
            social: obj(vec![("facebook", Value::Null), ("twitter", Value::Null), ("strava", strava)]),
            extras: obj(vec![("locale", json!("en_GB")), ("units", json!("metric"))]),
        },
    });

    // Settings.ini
    let token = sha256_hex(format!("{}{}", u.user_id, case.seed).as_bytes())[..32].to_string();
    let last_sync = r"@Variant(\0\0\0\x10\0%\x8c\xe5\x3\x1a\x4\x80\0)";
    let mut ini = format!(
        "[General]\nDriveUnitSerial={}\nBatterySerial={}\nPartNumber={}\n",
        b.drive_unit_serial, b.battery_serial, b.part_number
    );
    let mut consents = Vec::new();
    for (key, t) in &case.consents {
        let raw = (ms(*t) / 1000).to_string();
        ini.push_str(&format!("{key}={raw}\n"));
        consents.push(ConsentStamp { key: key.clone(), raw, time: Some(*t) });
    }
    ini.push_str(&format!("WifiToken={token}\nLastSync={last_sync}\nLanguage=en\n\n[Display]\nBrightness=80\n"));
    let source = em.file(&format!("{user_dir}/Settings.ini"), ini.as_bytes())?;
    bundle.settings = Some(Artifact {
        source,
        data: BikeSettings {
            serials: [
                ("DriveUnitSerial", &b.drive_unit_serial),
                ("BatterySerial", &b.battery_serial),
                ("PartNumber", &b.part_number),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
            consents,
            wifi_token: Some(token),
            last_sync_raw: Some(last_sync.to_string()),
            other: [("General/Language", "en"), ("Display/Brightness", "80")]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        },
    });

    bundle.charts = Some(emit_charts(case, em, &format!("{user_dir}/EBikeCharts"))?);
    bundle.ebike = Some(emit_ebike(case, em, &format!("{user_dir}/EBike"))?);

    // A planned route through the saved places.
    let mut gpx = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    gpx.push_str("<gpx xmlns=\"http://www.topografix.com/GPX/1/1\" version=\"1.1\" creator=\"Nyon\">\n  <rte>\n");
    let name = format!("Tour {}", u.city);
    gpx.push_str(&format!("    <name>{name}</name>\n"));
    let mut points = Vec::new();
    for p in &case.places {
        gpx.push_str(&format!("    <rtept lat=\"{}\" lon=\"{}\"/>\n", p.latitude, p.longitude));
        points.push(track_point(p.latitude, p.longitude));
    }
    gpx.push_str("  </rte>\n</gpx>\n");
    let source = em.file(&format!("{user_dir}/gpx/route_1.gpx"), gpx.as_bytes())?;
    bundle.planned_routes.push(Artifact { source, data: PlannedRoute { name: Some(name), points } });

    // Not decoded by anything; must surface as a leftover.
    let avatar: Vec<u8> = sha256_hex(u.user_id.as_bytes()).bytes().cycle().take(700).collect();
    let avatar_rel = format!("{user_dir}/avatar.jpg");
    let p = em.file(&avatar_rel, &avatar)?;
    bundle.raw_leftovers.insert(avatar_rel, p.sha256);

    bundle.logs.push(syslog(case, em, &format!("{GEN1_APPDATA}/var/log/messages"))?);

    // connman: the global settings file first, then one directory per service.
    em.file("var/lib/connman/settings", b"[global]\nOfflineMode=false\n")?;
    let mut services: Vec<_> = case
        .wifi
        .iter()
        .map(|w| (format!("wifi_{}_{}_managed_psk", w.station, hex::encode(w.ssid.as_bytes())), w))
        .collect();
    services.sort_by(|a, b| a.0.cmp(&b.0));
    for (service, w) in services {
        let hex_ssid = hex::encode(w.ssid.as_bytes());
        let modified = w.modified.to_rfc3339();
        let text = format!(
            "[{service}]\nName={}\nSSID={hex_ssid}\nFavorite=true\nAutoConnect=true\nModified={modified}\nPassphrase={}\nIPv4.method=dhcp\n",
            w.ssid, w.passphrase
        );
        let source = em.file(&format!("var/lib/connman/{service}/settings"), text.as_bytes())?;
        let settings = obj(vec![
            ("Favorite", json!("true")),
            ("AutoConnect", json!("true")),
            ("Modified", json!(modified)),
            ("IPv4.method", json!("dhcp")),
            ("SSID", json!(hex_ssid)),
            ("service", json!(service)),
        ]);
        bundle.wifi.push(Artifact {
            source,
            data: WifiNetwork {
                ssid: w.ssid.clone(),
                passphrase: Some(w.passphrase.clone()),
                security: Some("psk".into()),
                settings,
                last_modified: Some(w.modified),
                generation: Generation::Gen1,
            },
        });
    }

    if case.bluetooth.is_empty() {
        // bluego keeps one file per device, so no devices means no directory.
        bundle.absent.push(AbsentArtifact { kind: ArtifactKind::BluegoDir, path: "var/lib/bluego".into() });
    }
    let mut devices: Vec<_> = case.bluetooth.iter().collect();
    devices.sort_by(|a, b| a.address.cmp(&b.address));
    for d in devices {
        let seen = (ms(d.seen) / 1000).to_string();
        let text = format!("[General]\nName={}\nTrusted={}\nLastSeen={seen}\nClass=0x5a020c\n", d.name, d.trusted);
        let source = em.file(&format!("var/lib/bluego/{}", d.address.replace(':', "_")), text.as_bytes())?;
        bundle.bluetooth.push(Artifact {
            source,
            data: BluetoothDevice {
                address: Some(d.address.clone()),
                name: Some(d.name.clone()),
                trusted: Some(d.trusted),
                source: BluetoothSource::Bluego,
                observed_at: Some(d.seen),
                extras: obj(vec![("LastSeen", json!(seen)), ("Class", json!("0x5a020c"))]),
            },
        });
    }
    Ok(bundle)
}

fn emit_charts(case: &SyntheticCase, em: &mut Emitter<'_>, rel: &str) -> Result<Artifact<ChartsData>, ForgeError> {
    let uid = &case.user.user_id;
    let source = em.sqlite(rel, |c| {
        c.execute_batch(
            "CREATE TABLE ChartsData (UserId TEXT, NTDistance INTEGER, Altitude REAL, Speed REAL,
                driverCadence REAL, heartRate REAL, stateOfCharge REAL);",
        )?;
        let mut ins = c.prepare("INSERT INTO ChartsData VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)")?;
        for (i, r) in case.charts.rows.iter().enumerate() {
            ins.execute(params![uid, case.charts.distance(i), r.altitude, r.speed, r.cadence, r.heart_rate, r.state_of_charge])?;
        }
        Ok(())
    })?;
    let samples = case
        .charts
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| ChartsSample {
            row_id: Some(i as i64 + 1),
            user_id: Some(uid.clone()),
            nt_distance: case.charts.distance(i) as f64,
            altitude: Some(r.altitude),
            speed: Some(r.speed),
            driver_cadence: Some(r.cadence),
            heart_rate: Some(r.heart_rate),
            state_of_charge: Some(r.state_of_charge),
            consumption: None,
            power: None,
            extras: Extras::new(),
        })
        .collect();
    Ok(Artifact { source, data: ChartsData { samples, quarantined: Vec::new() } })
}

/// Values of the per-trip sensor rows, derived from the trip so that
/// emission stays a pure function of the case.
pub(crate) struct TripSensors {
    pub temperature: f64,
    pub pressure: f64,
    pub soc_start: f64,
    pub soc_end: f64,
    pub torque: f64,
    pub revolution: f64,
    pub power: f64,
    pub driver_power: f64,
    pub calories: f64,
}

pub(crate) fn sensors(t: &TripSpec) -> TripSensors {
    let km = t.distance_m() / 1000.0;
    TripSensors {
        temperature: 12.0 + (t.id % 15) as f64,
        pressure: 960.0 + (t.id % 40) as f64,
        soc_start: 95.0 - (t.id % 20) as f64,
        soc_end: round2(95.0 - (t.id % 20) as f64 - km * 1.5),
        torque: round2(t.cadence * 0.4),
        revolution: t.cadence,
        power: round2(t.cadence * 2.5),
        driver_power: round2(t.heart_rate * 1.2),
        calories: (km * 25.0).round(),
    }
}

fn emit_ebike(case: &SyntheticCase, em: &mut Emitter<'_>, rel: &str) -> Result<Artifact<EBikeData>, ForgeError> {
    let uid = &case.user.user_id;
    let b = &case.bike;
    let source = em.sqlite(rel, |c| {
        c.execute_batch(
            "CREATE TABLE android_metadata (locale TEXT);
             INSERT INTO android_metadata VALUES ('en_US');
             CREATE TABLE Activities (UserId TEXT, TimeStamp INTEGER, StopTime INTEGER, Distance REAL,
                DriveUnitSerial TEXT, BatteryPackSerials TEXT, Calories REAL, \"Max. Speed\" REAL, ActivityType TEXT);
             CREATE TABLE AmbientData (UserId TEXT, TimeStamp INTEGER, Temperature REAL, AirPressure REAL);
             CREATE TABLE BikeBattery (UserId TEXT, TimeStamp INTEGER, stateOfCharge REAL);
             CREATE TABLE DriveUnit (UserId TEXT, TimeStamp INTEGER, isMoving INTEGER, odometer REAL,
                Speed REAL, Torque REAL, Revolution REAL, Power REAL);
             CREATE TABLE Operational (UserId TEXT, TimeStamp INTEGER, BUI INTEGER);
             CREATE TABLE Driver (UserId TEXT, TimeStamp INTEGER, heartRate REAL, driverCadence REAL,
                driverTorque REAL, driverPower REAL);
             CREATE TABLE Localization (UserId TEXT, TimeStamp INTEGER, Latitude REAL, Longitude REAL, SensorAltitude REAL);",
        )?;
        for t in &case.trips {
            let s = sensors(t);
            let (start, end) = (ms(t.start()), ms(t.end()));
            c.execute(
                "INSERT INTO Activities VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, 'eBike')",
                params![uid, start, end, round2(t.distance_m()), b.drive_unit_serial, b.battery_serial, s.calories, t.max_speed()],
            )?;
            c.execute("INSERT INTO AmbientData VALUES (?1, ?2, ?3, ?4)", params![uid, start, s.temperature, s.pressure])?;
            c.execute("INSERT INTO BikeBattery VALUES (?1, ?2, ?3)", params![uid, start, s.soc_start])?;
            c.execute("INSERT INTO BikeBattery VALUES (?1, ?2, ?3)", params![uid, end, s.soc_end])?;
            c.execute(
                "INSERT INTO DriveUnit VALUES (?1, ?2, 1, ?3, 0.0, ?4, ?5, ?6)",
                params![uid, start, t.odometer_start, s.torque, s.revolution, s.power],
            )?;
            c.execute(
                "INSERT INTO DriveUnit VALUES (?1, ?2, 0, ?3, 0.0, 0.0, 0.0, 0.0)",
                params![uid, end, t.odometer_end],
            )?;
            c.execute("INSERT INTO Operational VALUES (?1, ?2, 1)", params![uid, start])?;
            c.execute(
                "INSERT INTO Driver VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![uid, start, t.heart_rate, t.cadence, s.torque, s.driver_power],
            )?;
        }
        let mut ins = c.prepare("INSERT INTO Localization VALUES (?1, ?2, ?3, ?4, ?5)")?;
        for p in case.trips.iter().flat_map(|t| &t.points) {
            ins.execute(params![uid, ms(p.time), p.latitude, p.longitude, p.altitude])?;
        }
        Ok(())
    })?;

    let mut d = EBikeData::default();
    let uid_s = Some(uid.clone());
    let mut counters = [0i64; 7];
    let mut next = |table: usize| {
        counters[table] += 1;
        Some(counters[table])
    };
    for t in &case.trips {
        let s = sensors(t);
        d.activities.push(Activity {
            row_id: next(0),
            user_id: uid_s.clone(),
            timestamp: t.start(),
            stop_time: Some(t.end()),
            distance: Some(round2(t.distance_m())),
            drive_unit_serial: Some(b.drive_unit_serial.clone()),
            battery_pack_serials: Some(b.battery_serial.clone()),
            calories: Some(s.calories),
            max_speed: Some(t.max_speed()),
            extras: obj(vec![("ActivityType", json!("eBike"))]),
        });
        d.ambient.push(AmbientSample {
            row_id: next(1),
            user_id: uid_s.clone(),
            timestamp: t.start(),
            temperature: Some(s.temperature),
            air_pressure: Some(s.pressure),
            extras: Extras::new(),
        });
        for (time, soc) in [(t.start(), s.soc_start), (t.end(), s.soc_end)] {
            d.bike_battery.push(BatterySample {
                row_id: next(2),
                user_id: uid_s.clone(),
                timestamp: time,
                state_of_charge: Some(soc),
                extras: Extras::new(),
            });
        }
        d.drive_unit.push(DriveUnitSample {
            row_id: next(3),
            user_id: uid_s.clone(),
            timestamp: t.start(),
            is_moving: Some(true),
            odometer: Some(t.odometer_start),
            speed: Some(0.0),
            torque: Some(s.torque),
            revolution: Some(s.revolution),
            power: Some(s.power),
            extras: Extras::new(),
        });
        d.drive_unit.push(DriveUnitSample {
            row_id: next(3),
            user_id: uid_s.clone(),
            timestamp: t.end(),
            is_moving: Some(false),
            odometer: Some(t.odometer_end),
            speed: Some(0.0),
            torque: Some(0.0),
            revolution: Some(0.0),
            power: Some(0.0),
            extras: Extras::new(),
        });
        d.operational.push(OperationalSample {
            row_id: next(4),
            user_id: uid_s.clone(),
            timestamp: t.start(),
            bui_operational: Some(true),
            extras: Extras::new(),
        });
        d.driver.push(DriverSample {
            row_id: next(5),
            user_id: uid_s.clone(),
            timestamp: t.start(),
            heart_rate: Some(t.heart_rate),
            driver_cadence: Some(t.cadence),
            driver_torque: Some(s.torque),
            driver_power: Some(s.driver_power),
            extras: Extras::new(),
        });
    }
    for p in case.trips.iter().flat_map(|t| &t.points) {
        d.localization.push(LocalizationRow {
            row_id: next(6),
            user_id: uid_s.clone(),
            timestamp: p.time,
            point: TrackPoint {
                latitude: p.latitude,
                longitude: p.longitude,
                altitude: Some(p.altitude),
                time: Some(p.time),
                speed: None,
            },
            extras: Extras::new(),
        });
    }
    let rows = [
        d.activities.len(),
        d.ambient.len(),
        d.bike_battery.len(),
        d.drive_unit.len(),
        d.operational.len(),
        d.driver.len(),
        d.localization.len(),
    ];
    for (name, n) in EBIKE_TABLES.iter().zip(rows) {
        d.tables.insert(name.to_string(), TablePresence { present: true, rows: n });
    }
    d.other_tables.insert(
        "android_metadata".into(),
        LeftoverTable { row_count: 1, rows: vec![obj(vec![("locale", json!("en_US"))])] },
    );
    Ok(Artifact { source, data: d })
}

// ---------------------------------------------------------------- gen-2

fn emit_gen2(case: &SyntheticCase, em: &mut Emitter<'_>) -> Result<CaseBundle, ForgeError> {
    let u = &case.user;
    let b = &case.bike;
    let db = |name: &str| format!("{GEN2_USER_DB}/{name}");
    let mut bundle = empty_bundle(Generation::Gen2);

    // active-account.json
    let address = format!("{}, {}", u.street, u.city);
    let mut doc = json!({
        "userId": u.user_id, "firstName": u.first_name, "lastName": u.last_name, "gender": u.gender,
        "dateOfBirth": u.date_of_birth, "email": u.email, "address": address, "phoneNumber": u.phone,
        "accountType": "bosch-id"
    });
    let mut social = Extras::new();
    if let Some(s) = &u.strava {
        doc["strava"] = json!(s);
        social.insert("strava".into(), json!(s));
    }
    let source = em.file(&db("active-account.json"), serde_json::to_string_pretty(&doc)?.as_bytes())?;
    bundle.profile = Some(Artifact {
        source,
        data: UserProfile {
            user_id: Some(u.user_id.clone()),
            first_name: Some(u.first_name.clone()),
            last_name: Some(u.last_name.clone()),
            gender: Some(u.gender.clone()),
            date_of_birth: Some(u.date_of_birth.clone()),
            email: Some(u.email.clone()),
            home_address: Some(json!(address)),
            phone: Some(u.phone.clone()),
            social,
            extras: obj(vec![("accountType", json!("bosch-id"))]),
        },
    });

    // bike-info.json
    let frame = format!("WBK{}", &b.battery_serial[..6]);
    let doc = json!({"bikes": [{
        "driveUnitSerialNumber": b.drive_unit_serial, "batterySerialNumber": b.battery_serial,
        "partNumber": b.part_number, "softwareVersion": b.software_version,
        "hardwareVersion": b.hardware_version,
        "batteryPacks": [{"serialNumber": b.battery_serial, "capacityWh": b.capacity_wh}],
        "brand": "Generic", "frameNumber": frame
    }]});
    let source = em.file(&db("bike-info.json"), serde_json::to_string_pretty(&doc)?.as_bytes())?;
    bundle.bikes = Some(Artifact {
        source,
        data: vec![BikeInfo {
            serials: [
                ("driveUnitSerialNumber", &b.drive_unit_serial),
                ("batterySerialNumber", &b.battery_serial),
                ("partNumber", &b.part_number),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
            software_version: Some(b.software_version.clone()),
            hardware_version: Some(b.hardware_version.clone()),
            battery_packs: vec![obj(vec![("serialNumber", json!(b.battery_serial)), ("capacityWh", json!(b.capacity_wh))])],
            extras: obj(vec![("brand", json!("Generic")), ("frameNumber", json!(frame))]),
        }],
    });

    bundle.user_settings = Some(emit_user_settings(case, em, &db("user-settings.db"))?);
    bundle.nav = Some(emit_nav(case, em, &db("NavStorage.sqlite"))?);
    bundle.tracking = Some(emit_tracking(case, em, &db("tracking.db"))?);

    let pending_rel = db("pending_uploads.bin");
    let p = em.file(&pending_rel, &case.seed.to_le_bytes().repeat(16))?;
    bundle.raw_leftovers.insert(pending_rel, p.sha256);

    bundle.last_position = Some(emit_gnss(case, em, "system/db/gnssSettings.json")?);

    // WifiManagerSettings.json
    let entries: Vec<Value> = case
        .wifi
        .iter()
        .map(|w| {
            json!({"id": format!("\"{}\"", w.ssid), "psk": format!("\"{}\"", w.passphrase), "security": "WPA2",
                   "hidden": false, "lastModified": ms(w.modified)})
        })
        .collect();
    let source = em.file("system/db/WifiManagerSettings.json", serde_json::to_string_pretty(&entries)?.as_bytes())?;
    for w in &case.wifi {
        bundle.wifi.push(Artifact {
            source: source.clone(),
            data: WifiNetwork {
                ssid: w.ssid.clone(),
                passphrase: Some(w.passphrase.clone()),
                security: Some("WPA2".into()),
                settings: obj(vec![("hidden", json!(false)), ("lastModified", json!(ms(w.modified)))]),
                last_modified: Some(w.modified),
                generation: Generation::Gen2,
            },
        });
    }

    bundle.analytics = Some(emit_analytics(case, em, "system/db/analytics.db")?);
    bundle.bluetooth = emit_cef_log(case, em, "system/webfs/logs/cef_debug.log")?;
    bundle.logs.push(syslog(case, em, "system/webfs/logs/log/messages")?);
    Ok(bundle)
}

fn emit_user_settings(case: &SyntheticCase, em: &mut Emitter<'_>, rel: &str) -> Result<Artifact<UserSettings>, ForgeError> {
    let app: Vec<(&str, Value)> = vec![
        ("units", json!("metric")),
        ("language", json!("en-GB")),
        ("homeCity", json!(case.user.city)),
    ];
    let system: Vec<(&str, Value)> = vec![("displayBrightness", json!(80)), ("autoShutdownMinutes", json!(15))];
    let source = em.sqlite(rel, |c| {
        // `value` has no declared type so integers stay integers.
        c.execute_batch(
            "CREATE TABLE settings_app (stored_setting TEXT, value);
             CREATE TABLE settings_system (stored_setting TEXT, value);",
        )?;
        for (table, rows) in [("settings_app", &app), ("settings_system", &system)] {
            for (k, v) in rows {
                let sql = format!("INSERT INTO {table} VALUES (?1, ?2)");
                match v {
                    Value::Number(n) => c.execute(&sql, params![k, n.as_i64()])?,
                    other => c.execute(&sql, params![k, other.as_str()])?,
                };
            }
        }
        Ok(())
    })?;
    let entries = |rows: &[(&str, Value)]| -> Vec<SettingEntry> {
        rows.iter()
            .enumerate()
            .map(|(i, (k, v))| SettingEntry { row_id: Some(i as i64 + 1), key: k.to_string(), value: v.clone(), extras: Extras::new() })
            .collect()
    };
    Ok(Artifact {
        source,
        data: UserSettings { settings_app: entries(&app), settings_system: entries(&system), other_tables: BTreeMap::new() },
    })
}

fn emit_nav(case: &SyntheticCase, em: &mut Emitter<'_>, rel: &str) -> Result<Artifact<NavData>, ForgeError> {
    let (favourites, recents) = case.places.split_at(case.places.len().min(2));
    let route = case.trips.first().map(|t| {
        let wps: Vec<[f64; 2]> = t.points.iter().step_by(5).map(|p| [p.latitude, p.longitude]).collect();
        let last = t.points.last().unwrap();
        (format!("Ride {}", t.id), last.latitude, last.longitude, t.start(), wps)
    });
    let consumption: Vec<f64> = (0..6).map(|i| 8.5 + i as f64 * 0.75 + (case.bike.capacity_wh % 7) as f64 * 0.25).collect();
    let source = em.sqlite(rel, |c| {
        c.execute_batch(
            "CREATE TABLE Locations (name TEXT, latitude REAL, longitude REAL, modified INTEGER, category TEXT);
             CREATE TABLE Recents (name TEXT, latitude REAL, longitude REAL, modified INTEGER);
             CREATE TABLE Routes (name TEXT, latitude REAL, longitude REAL, modified INTEGER, waypoints TEXT);
             CREATE TABLE Consumptions (vector TEXT);",
        )?;
        for p in favourites {
            c.execute(
                "INSERT INTO Locations VALUES (?1, ?2, ?3, ?4, 'favourite')",
                params![p.name, p.latitude, p.longitude, ms(p.modified)],
            )?;
        }
        for p in recents {
            c.execute("INSERT INTO Recents VALUES (?1, ?2, ?3, ?4)", params![p.name, p.latitude, p.longitude, ms(p.modified)])?;
        }
        if let Some((name, lat, lon, t, wps)) = &route {
            let text = serde_json::to_string(wps).expect("waypoints serialize");
            c.execute("INSERT INTO Routes VALUES (?1, ?2, ?3, ?4, ?5)", params![name, lat, lon, ms(*t), text])?;
        }
        let text = serde_json::to_string(&consumption).expect("vector serializes");
        c.execute("INSERT INTO Consumptions VALUES (?1)", params![text])?;
        Ok(())
    })?;
    let place = |i: usize, p: &crate::case::PlaceSpec, extras: Extras| NavPlace {
        row_id: Some(i as i64 + 1),
        name: Some(p.name.clone()),
        latitude: p.latitude,
        longitude: p.longitude,
        modified: Some(p.modified),
        extras,
    };
    let data = NavData {
        consumptions: vec![Consumption { row_id: Some(1), vector: consumption, extras: Extras::new() }],
        locations: favourites.iter().enumerate().map(|(i, p)| place(i, p, obj(vec![("category", json!("favourite"))]))).collect(),
        recents: recents.iter().enumerate().map(|(i, p)| place(i, p, Extras::new())).collect(),
        routes: route
            .into_iter()
            .map(|(name, latitude, longitude, t, waypoints)| NavRoute {
                row_id: Some(1),
                name: Some(name),
                latitude,
                longitude,
                modified: Some(t),
                waypoints,
                extras: Extras::new(),
            })
            .collect(),
        quarantined: Vec::new(),
    };
    Ok(Artifact { source, data })
}

/// Rider metrics are sampled on every fifth fix.
fn metric_points(t: &TripSpec) -> impl Iterator<Item = (usize, &crate::case::PointSpec)> {
    t.points.iter().enumerate().step_by(5)
}

fn emit_tracking(case: &SyntheticCase, em: &mut Emitter<'_>, rel: &str) -> Result<Artifact<TrackingData>, ForgeError> {
    let summary = |t: &TripSpec| {
        let duration = t.start().seconds_until(t.end());
        let avg = if duration > 0.0 { round2(t.distance_m() / duration) } else { 0.0 };
        (round2(t.distance_m()), duration, avg)
    };
    let metric = |t: &TripSpec, i: usize| {
        let hr = t.heart_rate + (i % 7) as f64;
        let cadence = t.cadence + (i % 5) as f64;
        (hr, cadence, round2(cadence * 0.4), round2(cadence * 2.5))
    };
    let source = em.sqlite(rel, |c| {
        c.execute_batch(
            "CREATE TABLE trips (trip_id INTEGER, start_time INTEGER, end_time INTEGER, distance REAL, duration REAL,
                max_speed REAL, avg_speed REAL, odometer_start REAL, odometer_end REAL, title TEXT);
             CREATE TABLE trip_points (trip_id INTEGER, timestamp INTEGER, latitude REAL, longitude REAL,
                altitude REAL, speed REAL);
             CREATE TABLE trip_rider_metrics (trip_id INTEGER, timestamp INTEGER, heart_rate REAL, cadence REAL,
                torque REAL, power REAL);
             CREATE TABLE sync_state (key TEXT, value TEXT);",
        )?;
        for t in &case.trips {
            let (dist, duration, avg) = summary(t);
            c.execute(
                "INSERT INTO trips VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)",
                params![
                    t.id,
                    ms(t.start()),
                    ms(t.end()),
                    dist,
                    duration,
                    t.max_speed(),
                    avg,
                    t.odometer_start,
                    t.odometer_end,
                    format!("Ride {}", t.id)
                ],
            )?;
        }
        let mut pts = c.prepare("INSERT INTO trip_points VALUES (?1, ?2, ?3, ?4, ?5, ?6)")?;
        let mut mets = c.prepare("INSERT INTO trip_rider_metrics VALUES (?1, ?2, ?3, ?4, ?5, ?6)")?;
        for t in &case.trips {
            for p in &t.points {
                pts.execute(params![t.id, ms(p.time), p.latitude, p.longitude, p.altitude, p.speed])?;
            }
            for (i, p) in metric_points(t) {
                let (hr, cad, tq, pw) = metric(t, i);
                mets.execute(params![t.id, ms(p.time), hr, cad, tq, pw])?;
            }
        }
        c.execute("INSERT INTO sync_state VALUES ('lastUpload', ?1)", params![case.epoch.to_rfc3339()])?;
        Ok(())
    })?;

    let trips = case
        .trips
        .iter()
        .map(|t| {
            let (dist, duration, avg) = summary(t);
            TripRecord {
                trip_id: t.id.to_string(),
                start_time: Some(t.start()),
                end_time: Some(t.end()),
                distance: Some(dist),
                duration: Some(duration),
                max_speed: Some(t.max_speed()),
                avg_speed: Some(avg),
                odometer_start: Some(t.odometer_start),
                odometer_end: Some(t.odometer_end),
                points: t
                    .points
                    .iter()
                    .map(|p| TrackPoint {
                        latitude: p.latitude,
                        longitude: p.longitude,
                        altitude: Some(p.altitude),
                        time: Some(p.time),
                        speed: Some(p.speed),
                    })
                    .collect(),
                metrics: metric_points(t)
                    .map(|(i, p)| {
                        let (hr, cad, tq, pw) = metric(t, i);
                        DriverMetric {
                            time: Some(p.time),
                            heart_rate: Some(hr),
                            cadence: Some(cad),
                            torque: Some(tq),
                            power: Some(pw),
                            extras: Extras::new(),
                        }
                    })
                    .collect(),
                extras: obj(vec![("title", json!(format!("Ride {}", t.id)))]),
            }
        })
        .collect();
    let tables = [
        ("sync_state", TableSemantics::Raw),
        ("trip_points", TableSemantics::TripPoints),
        ("trip_rider_metrics", TableSemantics::DriverMetrics),
        ("trips", TableSemantics::TripSummary),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let mut raw_leftovers = BTreeMap::new();
    raw_leftovers.insert(
        "sync_state".to_string(),
        LeftoverTable {
            row_count: 1,
            rows: vec![obj(vec![("key", json!("lastUpload")), ("value", json!(case.epoch.to_rfc3339()))])],
        },
    );
    Ok(Artifact { source, data: TrackingData { trips, tables, raw_leftovers, quarantined: Vec::new() } })
}

fn emit_gnss(case: &SyntheticCase, em: &mut Emitter<'_>, rel: &str) -> Result<Artifact<GnssSettings>, ForgeError> {
    let (lat, lon, alt, speed, t) = match case.trips.last().and_then(|t| t.points.last()) {
        Some(p) => (p.latitude, p.longitude, p.altitude, p.speed, p.time),
        None => {
            let p = &case.places[0];
            (p.latitude, p.longitude, 400.0, 0.0, case.epoch)
        }
    };
    let doc = json!({
        "version": 2,
        "lastPosition": {"latitude": lat, "longitude": lon, "altitude": alt, "speed": speed,
                         "timestamp": ms(t), "accuracy": 3.5}
    });
    let source = em.file(rel, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    let last_position = LastPosition {
        latitude: Some(lat),
        longitude: Some(lon),
        altitude: Some(alt),
        speed: Some(speed),
        timestamp: ms(t),
        time: t,
        extras: obj(vec![("accuracy", json!(3.5))]),
    };
    Ok(Artifact { source, data: GnssSettings { last_position, extras: obj(vec![("version", json!(2))]) } })
}

fn emit_analytics(case: &SyntheticCase, em: &mut Emitter<'_>, rel: &str) -> Result<Artifact<Vec<AnalyticsEvent>>, ForgeError> {
    // Every other event carries a parameter object.
    let params_of = |i: usize| i.is_multiple_of(2).then(|| json!({"source": "bui", "seq": i}));
    let source = em.sqlite(rel, |c| {
        c.execute_batch("CREATE TABLE analytics_events (timestamp INTEGER, event TEXT, params TEXT);")?;
        for (i, (kind, t)) in case.events.iter().enumerate() {
            let p = params_of(i).map(|v| v.to_string());
            c.execute("INSERT INTO analytics_events VALUES (?1, ?2, ?3)", params![ms(*t), kind, p])?;
        }
        Ok(())
    })?;
    let events = case
        .events
        .iter()
        .enumerate()
        .map(|(i, (kind, t))| AnalyticsEvent {
            row_id: Some(i as i64 + 1),
            timestamp: *t,
            kind: kind.clone(),
            params: match params_of(i) {
                Some(Value::Object(m)) => m.into_iter().collect(),
                _ => Extras::new(),
            },
            params_raw: None,
            extras: Extras::new(),
        })
        .collect();
    Ok(Artifact { source, data: events })
}

/// Chromium-style lines carry only month and day, so a session line with a
/// full date precedes each year's first entry.
fn emit_cef_log(case: &SyntheticCase, em: &mut Emitter<'_>, rel: &str) -> Result<Vec<Artifact<BluetoothDevice>>, ForgeError> {
    let mut devices: Vec<_> = case.bluetooth.iter().collect();
    devices.sort_by(|a, b| (a.seen, &a.address).cmp(&(b.seen, &b.address)));
    let mut lines: Vec<String> = Vec::new();
    let mut expected = Vec::new();
    let mut year = None;
    for d in devices {
        let dt = d.seen.to_datetime();
        let y = dt.format("%Y").to_string();
        if year.as_ref() != Some(&y) {
            lines.push(format!("[1:1:{}:INFO:main.cc(41)] Session start {}", dt.format("%m%d/%H%M%S%.3f"), d.seen));
            year = Some(y);
        }
        let prefix = format!("[412:433:{}:INFO:bluetooth_adapter.cc(312)]", dt.format("%m%d/%H%M%S%.3f"));
        lines.push(format!("{prefix} Device discovered: {} name: \"{}\"", d.address, d.name));
        expected.push((lines.len(), d, Some(d.name.clone()), None));
        if d.trusted {
            lines.push(format!("{prefix} Device trusted: {}", d.address));
            expected.push((lines.len(), d, None, Some(true)));
        }
    }
    let text = lines.join("\n") + "\n";
    let source = em.file(rel, text.as_bytes())?;
    Ok(expected
        .into_iter()
        .map(|(line, d, name, trusted)| Artifact {
            source: source.clone(),
            data: BluetoothDevice {
                address: Some(d.address.clone()),
                name,
                trusted,
                source: BluetoothSource::CefLog,
                observed_at: Some(d.seen),
                extras: obj(vec![("line", json!(line))]),
            },
        })
        .collect())
}
