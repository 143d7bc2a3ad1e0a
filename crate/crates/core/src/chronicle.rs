//! One ordered timeline over every timestamped record, GPS track
//! reconstruction and GPX export.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::artifacts::{Artifact, CaseBundle, Generation, Provenance, TrackPoint};
use crate::canonical::to_canonical_line;
use crate::geo::haversine_m;
use crate::time::Timestamp;

pub const DEFAULT_GAP_S: f64 = 300.0;

/// Declaration order is the tie-break priority for equal instants.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventSource {
    EbikeDb,
    Tracking,
    Analytics,
    Gnss,
    Wifi,
    Bluetooth,
    Nav,
    Settings,
    Syslog,
}

impl fmt::Display for EventSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub time: Timestamp,
    pub source: EventSource,
    pub kind: String,
    /// Where inside the source file, e.g. `Localization#12` or `line 40`.
    pub locator: String,
    pub payload: Value,
    pub provenance: Provenance,
}

/// Records that have a time field but no decodable value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UntimedRecord {
    pub source: EventSource,
    pub kind: String,
    pub locator: String,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub events: Vec<TimelineEvent>,
    pub quarantined: Vec<UntimedRecord>,
}

impl Timeline {
    /// JSON lines, one event per line, stable key order.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&to_canonical_line(e).expect("timeline events serialize"));
            out.push('\n');
        }
        out
    }
}

fn event_key(e: &TimelineEvent) -> (Timestamp, EventSource, &str, &str, &str) {
    (e.time, e.source, &e.kind, &e.provenance.path, &e.locator)
}

/// Total order: instant, source priority, then content, so the result is
/// independent of input order.
pub fn compare_events(a: &TimelineEvent, b: &TimelineEvent) -> Ordering {
    event_key(a).cmp(&event_key(b)).then_with(|| {
        let pa = to_canonical_line(&a.payload).unwrap_or_default();
        let pb = to_canonical_line(&b.payload).unwrap_or_default();
        pa.cmp(&pb).then_with(|| a.provenance.cmp(&b.provenance))
    })
}

pub fn sort_events(events: &mut [TimelineEvent]) {
    events.sort_by(compare_events);
}

struct Collector {
    timeline: Timeline,
}

impl Collector {
    fn push<T: Serialize>(
        &mut self,
        time: Option<Timestamp>,
        source: EventSource,
        kind: &str,
        locator: String,
        payload: &T,
        provenance: &Provenance,
    ) {
        match time {
            Some(time) => self.timeline.events.push(TimelineEvent {
                time,
                source,
                kind: kind.to_string(),
                locator,
                payload: serde_json::to_value(payload).unwrap_or(Value::Null),
                provenance: provenance.clone(),
            }),
            None => self.timeline.quarantined.push(UntimedRecord {
                source,
                kind: kind.to_string(),
                locator,
                provenance: provenance.clone(),
            }),
        }
    }

    fn rows<T: Serialize>(
        &mut self,
        art: &Artifact<impl Sized>,
        table: &str,
        kind: &str,
        rows: &[T],
        row_id: impl Fn(&T) -> Option<i64>,
        time: impl Fn(&T) -> Option<Timestamp>,
    ) {
        for (i, r) in rows.iter().enumerate() {
            let loc = match row_id(r) {
                Some(id) => format!("{table}#{id}"),
                None => format!("{table}[{i}]"),
            };
            self.push(time(r), EventSource::EbikeDb, kind, loc, r, &art.source);
        }
    }
}

pub fn build_timeline(bundle: &CaseBundle) -> Timeline {
    let mut c = Collector { timeline: Timeline::default() };

    if let Some(art) = &bundle.ebike {
        let d = &art.data;
        c.rows(art, "Activities", "activity", &d.activities, |r| r.row_id, |r| Some(r.timestamp));
        for r in &d.activities {
            if r.stop_time.is_some() {
                let loc = format!("Activities#{}", r.row_id.unwrap_or_default());
                c.push(r.stop_time, EventSource::EbikeDb, "activity-stop", loc, r, &art.source);
            }
        }
        c.rows(art, "AmbientData", "ambient-sample", &d.ambient, |r| r.row_id, |r| Some(r.timestamp));
        c.rows(art, "BikeBattery", "battery-sample", &d.bike_battery, |r| r.row_id, |r| Some(r.timestamp));
        c.rows(art, "DriveUnit", "drive-unit-sample", &d.drive_unit, |r| r.row_id, |r| Some(r.timestamp));
        c.rows(art, "Operational", "operational-sample", &d.operational, |r| r.row_id, |r| Some(r.timestamp));
        c.rows(art, "Driver", "driver-sample", &d.driver, |r| r.row_id, |r| Some(r.timestamp));
        c.rows(art, "Localization", "position", &d.localization, |r| r.row_id, |r| Some(r.timestamp));
    }

    if let Some(art) = &bundle.tracking {
        for trip in &art.data.trips {
            let summary = serde_json::json!({
                "trip_id": trip.trip_id,
                "distance": trip.distance,
                "duration": trip.duration,
                "odometer_start": trip.odometer_start,
                "odometer_end": trip.odometer_end,
            });
            let loc = format!("trip {}", trip.trip_id);
            c.push(trip.start_time, EventSource::Tracking, "trip-start", loc.clone(), &summary, &art.source);
            c.push(trip.end_time, EventSource::Tracking, "trip-end", loc.clone(), &summary, &art.source);
            for (i, p) in trip.points.iter().enumerate() {
                c.push(p.time, EventSource::Tracking, "position", format!("{loc} point {i}"), p, &art.source);
            }
            for (i, m) in trip.metrics.iter().enumerate() {
                c.push(m.time, EventSource::Tracking, "driver-sample", format!("{loc} metric {i}"), m, &art.source);
            }
        }
    }

    if let Some(art) = &bundle.analytics {
        for (i, e) in art.data.iter().enumerate() {
            let loc = e.row_id.map_or(format!("analytics_events[{i}]"), |id| format!("analytics_events#{id}"));
            c.push(Some(e.timestamp), EventSource::Analytics, &e.kind, loc, e, &art.source);
        }
    }

    if let Some(art) = &bundle.last_position {
        let p = &art.data.last_position;
        c.push(Some(p.time), EventSource::Gnss, "last-position", "lastPosition".into(), p, &art.source);
    }

    for art in &bundle.wifi {
        if art.data.last_modified.is_some() {
            let loc = format!("ssid {}", art.data.ssid);
            c.push(art.data.last_modified, EventSource::Wifi, "wifi-network-modified", loc, &art.data, &art.source);
        }
    }

    for art in &bundle.bluetooth {
        if art.data.observed_at.is_some() {
            let mut loc = art.data.address.clone().unwrap_or_default();
            if let Some(line) = art.data.extras.get("line") {
                loc = format!("line {line} {loc}");
            }
            c.push(art.data.observed_at, EventSource::Bluetooth, "bluetooth-device-seen", loc, &art.data, &art.source);
        }
    }

    if let Some(art) = &bundle.nav {
        let n = &art.data;
        for (table, kind, list) in [("Locations", "nav-location-modified", &n.locations), ("Recents", "nav-recent-modified", &n.recents)] {
            for (i, p) in list.iter().enumerate() {
                if p.modified.is_some() {
                    let loc = p.row_id.map_or(format!("{table}[{i}]"), |id| format!("{table}#{id}"));
                    c.push(p.modified, EventSource::Nav, kind, loc, p, &art.source);
                }
            }
        }
        for (i, r) in n.routes.iter().enumerate() {
            if r.modified.is_some() {
                let loc = r.row_id.map_or(format!("Routes[{i}]"), |id| format!("Routes#{id}"));
                c.push(r.modified, EventSource::Nav, "nav-route-modified", loc, r, &art.source);
            }
        }
    }

    if let Some(art) = &bundle.settings {
        for s in &art.data.consents {
            c.push(s.time, EventSource::Settings, "consent-granted", s.key.clone(), s, &art.source);
        }
    }

    for art in &bundle.logs {
        for e in &art.data.entries {
            let payload = serde_json::json!({ "message": e.message });
            c.push(Some(e.time), EventSource::Syslog, "log-line", format!("line {}", e.line), &payload, &art.source);
        }
    }

    sort_events(&mut c.timeline.events);
    c.timeline
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackStats {
    pub points: usize,
    /// Sum of great-circle legs, metres.
    pub distance_m: f64,
    pub duration_s: f64,
    pub max_gap_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub trip_id: Option<String>,
    /// Ascending by time.
    pub points: Vec<TrackPoint>,
    pub stats: TrackStats,
}

impl Track {
    pub fn new(trip_id: Option<String>, points: Vec<TrackPoint>) -> Self {
        let stats = track_stats(&points);
        Self { trip_id, points, stats }
    }
}

pub fn track_stats(points: &[TrackPoint]) -> TrackStats {
    let mut s = TrackStats { points: points.len(), ..Default::default() };
    for w in points.windows(2) {
        s.distance_m += haversine_m(w[0].latitude, w[0].longitude, w[1].latitude, w[1].longitude);
        if let (Some(a), Some(b)) = (w[0].time, w[1].time) {
            s.max_gap_s = s.max_gap_s.max(a.seconds_until(b));
        }
    }
    if let (Some(a), Some(b)) = (points.first().and_then(|p| p.time), points.last().and_then(|p| p.time)) {
        s.duration_s = a.seconds_until(b);
    }
    s
}

/// Sorts by time (stable, so equal instants keep input order) and splits
/// wherever consecutive points are more than `gap_s` apart. Points without
/// a time cannot be placed and are left out.
pub fn reconstruct_tracks(points: &[TrackPoint], gap_s: f64) -> Vec<Track> {
    let mut timed: Vec<&TrackPoint> = points.iter().filter(|p| p.time.is_some()).collect();
    timed.sort_by_key(|p| p.time);
    let mut tracks = Vec::new();
    let mut current: Vec<TrackPoint> = Vec::new();
    for p in timed {
        if let Some(prev) = current.last() {
            if prev.time.zip(p.time).is_some_and(|(a, b)| a.seconds_until(b) > gap_s) {
                tracks.push(std::mem::take(&mut current));
            }
        }
        current.push(p.clone());
    }
    if !current.is_empty() {
        tracks.push(current);
    }
    tracks
        .into_iter()
        .enumerate()
        .map(|(i, pts)| Track::new(Some((i + 1).to_string()), pts))
        .collect()
}

/// Gen-1: gap-split Localization rows, numbered from "1".
/// Gen-2: one track per recorded trip, keyed by its trip id.
pub fn tracks_for_bundle(bundle: &CaseBundle, gap_s: f64) -> Vec<Track> {
    match (bundle.generation, &bundle.ebike, &bundle.tracking) {
        (Generation::Gen2, _, Some(t)) | (Generation::Unknown, None, Some(t)) => t
            .data
            .trips
            .iter()
            .map(|trip| {
                let mut pts: Vec<TrackPoint> = trip.points.iter().filter(|p| p.time.is_some()).cloned().collect();
                pts.sort_by_key(|p| p.time);
                Track::new(Some(trip.trip_id.clone()), pts)
            })
            .collect(),
        (_, Some(e), _) => reconstruct_tracks(&e.data.track(), gap_s),
        _ => Vec::new(),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ChronicleError {
    #[error("track has no points")]
    EmptyTrack,
}

fn escape(text: &str) -> String {
    quick_xml::escape::escape(text).into_owned()
}

/// GPX 1.1. Coordinates use the shortest exact decimal form, so parsing the
/// output gives back the same `f64`s.
pub fn export_gpx(track: &Track) -> Result<String, ChronicleError> {
    if track.points.is_empty() {
        return Err(ChronicleError::EmptyTrack);
    }
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <gpx version=\"1.1\" creator=\"nyonscope\" xmlns=\"http://www.topografix.com/GPX/1/1\">\n  <trk>\n",
    );
    if let Some(id) = &track.trip_id {
        out.push_str(&format!("    <name>{}</name>\n", escape(id)));
    }
    out.push_str("    <trkseg>\n");
    for p in &track.points {
        out.push_str(&format!("      <trkpt lat=\"{:?}\" lon=\"{:?}\">", p.latitude, p.longitude));
        if let Some(ele) = p.altitude {
            out.push_str(&format!("<ele>{ele:?}</ele>"));
        }
        if let Some(t) = p.time {
            out.push_str(&format!("<time>{}</time>", t.to_rfc3339()));
        }
        out.push_str("</trkpt>\n");
    }
    out.push_str("    </trkseg>\n  </trk>\n</gpx>\n");
    Ok(out)
}
