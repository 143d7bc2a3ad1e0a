//! Runs every applicable decoder over an extracted tree and collects the
//! results, each tagged with the file it came from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::*;
use crate::tree::{file_name, join};

pub(crate) const GEN2_USER_DATA: &str = "users/buiowner/data";
const GEN1_SETTINGS_MARK: &str = "Main/Apps/Settings/";
const GEN1_PROFILE: &str = "userObject.json";

/// `<...>/Main/Apps/Settings/<id>` when `path` is a gen-1 profile file.
pub(crate) fn gen1_user_dir(path: &str) -> Option<&str> {
    let dir = path.strip_suffix(GEN1_PROFILE)?.strip_suffix('/')?;
    let (head, id) = dir.rsplit_once('/')?;
    let ok = (head == GEN1_SETTINGS_MARK.trim_end_matches('/') || head.ends_with(&format!("/{}", GEN1_SETTINGS_MARK.trim_end_matches('/'))))
        && !id.is_empty();
    ok.then_some(dir)
}

/// Tree prefix in front of `users/buiowner/data/`, possibly empty.
pub(crate) fn gen2_prefix(path: &str) -> Option<&str> {
    if path.starts_with(GEN2_USER_DATA) && path[GEN2_USER_DATA.len()..].starts_with('/') {
        return Some("");
    }
    let needle = format!("/{GEN2_USER_DATA}/");
    path.find(&needle).map(|i| &path[..i])
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Profile,
    SettingsIni,
    ChartsDb,
    EbikeDb,
    GpxDir,
    ConnmanDir,
    BluegoDir,
    LogDir,
    WifiSettings,
    GnssSettings,
    AnalyticsDb,
    CefLog,
    UserSettingsDb,
    BikeInfo,
    NavStorage,
    TrackingDb,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 16] = [
        Self::Profile,
        Self::SettingsIni,
        Self::ChartsDb,
        Self::EbikeDb,
        Self::GpxDir,
        Self::ConnmanDir,
        Self::BluegoDir,
        Self::LogDir,
        Self::WifiSettings,
        Self::GnssSettings,
        Self::AnalyticsDb,
        Self::CefLog,
        Self::UserSettingsDb,
        Self::BikeInfo,
        Self::NavStorage,
        Self::TrackingDb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Profile => "profile",
            Self::SettingsIni => "settings-ini",
            Self::ChartsDb => "charts-db",
            Self::EbikeDb => "ebike-db",
            Self::GpxDir => "gpx-dir",
            Self::ConnmanDir => "connman-dir",
            Self::BluegoDir => "bluego-dir",
            Self::LogDir => "log-dir",
            Self::WifiSettings => "wifi-settings",
            Self::GnssSettings => "gnss-settings",
            Self::AnalyticsDb => "analytics-db",
            Self::CefLog => "cef-log",
            Self::UserSettingsDb => "user-settings-db",
            Self::BikeInfo => "bike-info",
            Self::NavStorage => "nav-storage",
            Self::TrackingDb => "tracking-db",
        }
    }

    fn is_dir(self) -> bool {
        matches!(self, Self::GpxDir | Self::ConnmanDir | Self::BluegoDir | Self::LogDir)
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown artifact kind {s:?}"))
    }
}

/// Tree-relative location of each artifact.
pub type ArtifactPaths = BTreeMap<ArtifactKind, String>;

/// Expected locations for `generation`; nothing here is checked for existence.
pub fn canonical_paths(tree: &FileTree, generation: Generation) -> ArtifactPaths {
    let files = tree.files();
    let mut p = ArtifactPaths::new();
    match generation {
        Generation::Gen1 => {
            if let Some(user) = files.iter().find_map(|f| gen1_user_dir(f)) {
                p.insert(ArtifactKind::Profile, join(user, GEN1_PROFILE));
                p.insert(ArtifactKind::SettingsIni, join(user, "Settings.ini"));
                p.insert(ArtifactKind::ChartsDb, join(user, "EBikeCharts"));
                p.insert(ArtifactKind::EbikeDb, join(user, "EBike"));
                p.insert(ArtifactKind::GpxDir, join(user, "gpx"));
                let appdata = user.find(GEN1_SETTINGS_MARK).map(|i| &user[..i]).unwrap_or("");
                p.insert(ArtifactKind::LogDir, join(appdata, "var/log"));
            } else {
                p.insert(ArtifactKind::LogDir, "home/appdata/var/log".into());
            }
            p.insert(ArtifactKind::ConnmanDir, "var/lib/connman".into());
            p.insert(ArtifactKind::BluegoDir, "var/lib/bluego".into());
        }
        Generation::Gen2 => {
            let prefix = files.iter().find_map(|f| gen2_prefix(f)).unwrap_or("");
            let sys = |rel: &str| join(prefix, rel);
            let user = |name: &str| join(prefix, &format!("{GEN2_USER_DATA}/system/db/{name}"));
            p.insert(ArtifactKind::AnalyticsDb, sys("system/db/analytics.db"));
            p.insert(ArtifactKind::WifiSettings, sys("system/db/WifiManagerSettings.json"));
            p.insert(ArtifactKind::GnssSettings, sys("system/db/gnssSettings.json"));
            p.insert(ArtifactKind::CefLog, sys("system/webfs/logs/cef_debug.log"));
            p.insert(ArtifactKind::LogDir, sys("system/webfs/logs/log"));
            p.insert(ArtifactKind::Profile, user("active-account.json"));
            p.insert(ArtifactKind::UserSettingsDb, user("user-settings.db"));
            p.insert(ArtifactKind::BikeInfo, user("bike-info.json"));
            p.insert(ArtifactKind::NavStorage, user("NavStorage.sqlite"));
            p.insert(ArtifactKind::TrackingDb, user("tracking.db"));
        }
        Generation::Unknown => {}
    }
    p
}

#[derive(Clone, Debug, Default)]
pub struct BundleOptions {
    /// Skips detection when set.
    pub generation: Option<Generation>,
    /// Replace canonical locations, e.g. for partial acquisitions.
    pub overrides: ArtifactPaths,
    pub tracking_profile: SchemaProfile,
    pub cef: CefScanConfig,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbsentArtifact {
    pub kind: ArtifactKind,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseBundle {
    pub generation: Generation,
    pub origin: Option<String>,
    pub profile: Option<Artifact<UserProfile>>,
    pub settings: Option<Artifact<BikeSettings>>,
    pub user_settings: Option<Artifact<UserSettings>>,
    pub bikes: Option<Artifact<Vec<BikeInfo>>>,
    pub wifi: Vec<Artifact<WifiNetwork>>,
    pub bluetooth: Vec<Artifact<BluetoothDevice>>,
    pub charts: Option<Artifact<ChartsData>>,
    pub ebike: Option<Artifact<EBikeData>>,
    pub tracking: Option<Artifact<TrackingData>>,
    pub nav: Option<Artifact<NavData>>,
    pub analytics: Option<Artifact<Vec<AnalyticsEvent>>>,
    pub last_position: Option<Artifact<GnssSettings>>,
    pub planned_routes: Vec<Artifact<PlannedRoute>>,
    pub logs: Vec<Artifact<LogFile>>,
    /// Expected artifacts that were not found; never synthesized.
    pub absent: Vec<AbsentArtifact>,
    /// Files inside artifact directories that no decoder consumed, with digests.
    pub raw_leftovers: BTreeMap<String, String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl CaseBundle {
    fn empty(generation: Generation, origin: Option<String>) -> Self {
        Self {
            generation,
            origin,
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

    /// Every source file referenced by the bundle.
    pub fn sources(&self) -> BTreeSet<&Provenance> {
        let singles = [
            self.profile.as_ref().map(|a| &a.source),
            self.settings.as_ref().map(|a| &a.source),
            self.user_settings.as_ref().map(|a| &a.source),
            self.bikes.as_ref().map(|a| &a.source),
            self.charts.as_ref().map(|a| &a.source),
            self.ebike.as_ref().map(|a| &a.source),
            self.tracking.as_ref().map(|a| &a.source),
            self.nav.as_ref().map(|a| &a.source),
            self.analytics.as_ref().map(|a| &a.source),
            self.last_position.as_ref().map(|a| &a.source),
        ];
        singles
            .into_iter()
            .flatten()
            .chain(self.wifi.iter().map(|a| &a.source))
            .chain(self.bluetooth.iter().map(|a| &a.source))
            .chain(self.planned_routes.iter().map(|a| &a.source))
            .chain(self.logs.iter().map(|a| &a.source))
            .collect()
    }
}

struct Assembler<'a> {
    tree: &'a FileTree,
    bundle: CaseBundle,
    claimed: BTreeSet<String>,
}

impl<'a> Assembler<'a> {
    fn provenance(&mut self, rel: &str) -> Option<(Vec<u8>, Provenance)> {
        match self.tree.read(rel) {
            Ok(bytes) => {
                self.claimed.insert(rel.to_string());
                let source = Provenance {
                    path: rel.to_string(),
                    sha256: crate::canonical::sha256_hex(&bytes),
                    origin: self.tree.origin().map(str::to_string),
                };
                Some((bytes, source))
            }
            Err(e) => {
                self.error(rel, format!("unreadable: {e}"));
                None
            }
        }
    }

    fn warn_all(&mut self, rel: &str, warnings: Vec<String>) {
        for w in warnings {
            self.bundle.diagnostics.push(Diagnostic { path: Some(rel.to_string()), level: DiagnosticLevel::Warning, message: w });
        }
    }

    fn error(&mut self, rel: &str, message: String) {
        self.bundle.diagnostics.push(Diagnostic { path: Some(rel.to_string()), level: DiagnosticLevel::Error, message });
    }

    /// Reads a file artifact and runs `parse`; failures become diagnostics.
    fn file<T>(
        &mut self,
        rel: &str,
        parse: impl FnOnce(&[u8], &std::path::Path) -> Result<Parsed<T>, ArtifactError>,
    ) -> Option<Artifact<T>> {
        let (bytes, source) = self.provenance(rel)?;
        match parse(&bytes, &self.tree.path(rel)) {
            Ok(parsed) => {
                self.warn_all(rel, parsed.warnings);
                Some(Artifact { source, data: parsed.value })
            }
            Err(e) => {
                self.error(rel, e.to_string());
                None
            }
        }
    }

    fn files_under(&self, dir: &str) -> Vec<String> {
        let prefix = format!("{}/", dir.trim_end_matches('/'));
        self.tree.files().into_iter().filter(|f| f.starts_with(&prefix)).collect()
    }
}

fn exists(tree: &FileTree, kind: ArtifactKind, rel: &str) -> bool {
    if kind.is_dir() {
        tree.is_dir(rel)
    } else {
        tree.is_file(rel)
    }
}

pub fn assemble_bundle(tree: &FileTree, options: &BundleOptions) -> CaseBundle {
    let generation = options.generation.unwrap_or_else(|| detect_generation(tree));
    let mut paths = canonical_paths(tree, generation);
    paths.extend(options.overrides.iter().map(|(k, v)| (*k, v.trim_start_matches('/').to_string())));

    let mut a = Assembler { tree, bundle: CaseBundle::empty(generation, tree.origin().map(str::to_string)), claimed: BTreeSet::new() };
    if generation == Generation::Unknown && paths.is_empty() {
        a.bundle.diagnostics.push(Diagnostic {
            path: None,
            level: DiagnosticLevel::Error,
            message: "generation not recognized; no artifact locations known".into(),
        });
        return a.bundle;
    }

    for (&kind, rel) in &paths {
        if !exists(tree, kind, rel) {
            a.bundle.absent.push(AbsentArtifact { kind, path: rel.clone() });
            continue;
        }
        match kind {
            ArtifactKind::Profile => {
                a.bundle.profile = a.file(rel, |b, _| parse_user_profile(b, generation));
            }
            ArtifactKind::SettingsIni => a.bundle.settings = a.file(rel, |b, _| Ok(parse_settings_ini(b))),
            ArtifactKind::ChartsDb => a.bundle.charts = a.file(rel, |_, p| parse_charts_db(p)),
            ArtifactKind::EbikeDb => a.bundle.ebike = a.file(rel, |_, p| parse_ebike_db(p)),
            ArtifactKind::UserSettingsDb => a.bundle.user_settings = a.file(rel, |_, p| parse_user_settings_db(p)),
            ArtifactKind::BikeInfo => a.bundle.bikes = a.file(rel, |b, _| parse_bike_info(b)),
            ArtifactKind::NavStorage => a.bundle.nav = a.file(rel, |_, p| parse_nav_storage(p)),
            ArtifactKind::TrackingDb => {
                a.bundle.tracking = a.file(rel, |_, p| parse_tracking_db(p, &options.tracking_profile));
            }
            ArtifactKind::AnalyticsDb => a.bundle.analytics = a.file(rel, |_, p| parse_analytics_db(p)),
            ArtifactKind::GnssSettings => a.bundle.last_position = a.file(rel, |b, _| parse_gnss_settings(b)),
            ArtifactKind::WifiSettings => {
                if let Some(art) = a.file(rel, |b, _| parse_wifi_manager_settings(b)) {
                    let source = art.source;
                    a.bundle.wifi.extend(art.data.into_iter().map(|data| Artifact { source: source.clone(), data }));
                }
            }
            ArtifactKind::CefLog => {
                if let Some(art) = a.file(rel, |b, _| scan_cef_log(b, &options.cef)) {
                    let source = art.source;
                    a.bundle.bluetooth.extend(art.data.into_iter().map(|data| Artifact { source: source.clone(), data }));
                }
            }
            ArtifactKind::ConnmanDir => {
                for f in a.files_under(rel) {
                    if file_name(&f) != "settings" {
                        continue;
                    }
                    if let Some(art) = a.file(&f, |b, _| Ok(parse_connman_settings(b))) {
                        let source = art.source;
                        a.bundle.wifi.extend(art.data.into_iter().map(|data| Artifact { source: source.clone(), data }));
                    }
                }
            }
            ArtifactKind::BluegoDir => {
                for f in a.files_under(rel) {
                    // BlueZ-style `<adapter>/<device>/info` layout names the
                    // device by directory instead of by file.
                    let name = match file_name(&f) {
                        "info" => f.rsplit('/').nth(1).unwrap_or("info").to_string(),
                        n => n.to_string(),
                    };
                    if let Some(art) = a.file(&f, |b, _| Ok(parse_bluego_device(&name, b))) {
                        a.bundle.bluetooth.push(art);
                    }
                }
            }
            ArtifactKind::GpxDir => {
                for f in a.files_under(rel) {
                    if !f.to_ascii_lowercase().ends_with(".gpx") {
                        continue;
                    }
                    if let Some(art) = a.file(&f, |b, _| parse_gpx(b).map(Parsed::clean)) {
                        a.bundle.planned_routes.push(art);
                    }
                }
            }
            ArtifactKind::LogDir => {
                for f in a.files_under(rel) {
                    if let Some(art) = a.file(&f, |b, _| Ok(Parsed::clean(parse_log(b)))) {
                        a.bundle.logs.push(art);
                    }
                }
            }
        }
    }

    // Leftovers: unconsumed files next to the decoded ones.
    let mut dirs: BTreeSet<String> = BTreeSet::new();
    for (&kind, rel) in &paths {
        if kind.is_dir() {
            dirs.insert(rel.clone());
        } else if let Some((parent, _)) = rel.rsplit_once('/') {
            dirs.insert(parent.to_string());
        }
    }
    for dir in dirs {
        for f in a.files_under(&dir) {
            if !a.claimed.contains(&f) && !a.bundle.raw_leftovers.contains_key(&f) {
                match tree.sha256(&f) {
                    Ok(d) => {
                        a.bundle.raw_leftovers.insert(f, d);
                    }
                    Err(e) => a.error(&f, format!("unreadable: {e}")),
                }
            }
        }
    }
    a.bundle.diagnostics.sort();
    a.bundle
}

/// Wi-Fi and Bluetooth records only, from the canonical locations.
pub fn parse_connectivity(tree: &FileTree, generation: Generation) -> (Vec<WifiNetwork>, Vec<BluetoothDevice>) {
    let wanted = [ArtifactKind::ConnmanDir, ArtifactKind::BluegoDir, ArtifactKind::WifiSettings, ArtifactKind::CefLog];
    let mut overrides = canonical_paths(tree, generation);
    overrides.retain(|k, _| wanted.contains(k));
    let options = BundleOptions { generation: Some(Generation::Unknown), overrides, ..Default::default() };
    let b = assemble_bundle(tree, &options);
    (b.wifi.into_iter().map(|a| a.data).collect(), b.bluetooth.into_iter().map(|a| a.data).collect())
}
