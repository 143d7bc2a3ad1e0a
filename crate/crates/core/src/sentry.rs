//! Consistency rules that flag implausible or edited records.
//!
//! The artifacts carry no signatures, so every rule here is a plausibility
//! argument, and each finding states the threshold it was judged against.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::artifacts::{CaseBundle, Provenance, TrackPoint};
use crate::geo::haversine_m;
use crate::time::Timestamp;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rule {
    Step25,
    MonotonicTime,
    SpeedPlausibility,
    Odometer,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::Step25, Rule::MonotonicTime, Rule::SpeedPlausibility, Rule::Odometer];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Step25 => "STEP25",
            Rule::MonotonicTime => "MONOTONIC_TIME",
            Rule::SpeedPlausibility => "SPEED_PLAUSIBILITY",
            Rule::Odometer => "ODOMETER",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warn,
    Alert,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TamperFinding {
    pub rule: Rule,
    pub severity: Severity,
    pub subject: Provenance,
    /// Record inside the subject file, e.g. `Localization#41`.
    pub locator: String,
    pub detail: String,
    pub threshold: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentryConfig {
    pub rules: BTreeSet<Rule>,
    /// Expected NTDistance increment, metres.
    pub distance_step_m: f64,
    pub max_speed_mps: f64,
    /// Allowed ratio between implied and recorded speed.
    pub speed_factor: f64,
    /// Speeds below this are treated as equal to it before comparing ratios,
    /// so GPS jitter at walking pace is not flagged.
    pub speed_floor_mps: f64,
    /// Consecutive points further apart than this are not compared for speed.
    pub segment_gap_s: f64,
}

impl Default for SentryConfig {
    fn default() -> Self {
        Self {
            rules: Rule::ALL.into_iter().collect(),
            distance_step_m: 25.0,
            max_speed_mps: 25.0,
            speed_factor: 3.0,
            speed_floor_mps: 2.0,
            segment_gap_s: 300.0,
        }
    }
}

/// A point sequence in storage order with a locator per point.
struct Sequence<'a> {
    subject: &'a Provenance,
    points: Vec<(String, &'a TrackPoint)>,
}

fn sequences(bundle: &CaseBundle) -> Vec<Sequence<'_>> {
    let mut out = Vec::new();
    if let Some(art) = &bundle.ebike {
        let points = art
            .data
            .localization
            .iter()
            .enumerate()
            .map(|(i, r)| (r.row_id.map_or(format!("Localization[{i}]"), |id| format!("Localization#{id}")), &r.point))
            .collect();
        out.push(Sequence { subject: &art.source, points });
    }
    if let Some(art) = &bundle.tracking {
        for trip in &art.data.trips {
            let points =
                trip.points.iter().enumerate().map(|(i, p)| (format!("trip {} point {i}", trip.trip_id), p)).collect();
            out.push(Sequence { subject: &art.source, points });
        }
    }
    out
}

struct Checker<'a> {
    cfg: &'a SentryConfig,
    findings: BTreeSet<TamperFinding>,
}

impl Checker<'_> {
    fn add(&mut self, rule: Rule, severity: Severity, subject: &Provenance, locator: String, detail: String, threshold: String) {
        self.findings.insert(TamperFinding { rule, severity, subject: subject.clone(), locator, detail, threshold });
    }

    fn step25(&mut self, bundle: &CaseBundle) {
        let Some(art) = &bundle.charts else { return };
        let step = self.cfg.distance_step_m;
        for w in art.data.samples.windows(2) {
            let delta = w[1].nt_distance - w[0].nt_distance;
            if (delta - step).abs() > 1e-9 {
                let loc = w[1].row_id.map_or_else(|| "ChartsData".to_string(), |id| format!("ChartsData#{id}"));
                self.add(
                    Rule::Step25,
                    Severity::Warn,
                    &art.source,
                    loc,
                    format!("NTDistance {} -> {} (delta {delta})", w[0].nt_distance, w[1].nt_distance),
                    format!("step {step} m"),
                );
            }
        }
    }

    fn monotonic(&mut self, seqs: &[Sequence<'_>]) {
        for s in seqs {
            let mut last: Option<(Timestamp, &str)> = None;
            for (loc, p) in &s.points {
                let Some(t) = p.time else { continue };
                if let Some((prev, prev_loc)) = last {
                    if t < prev {
                        self.add(
                            Rule::MonotonicTime,
                            Severity::Alert,
                            s.subject,
                            loc.clone(),
                            format!("time {} precedes {} of {prev_loc}", t, prev),
                            "non-decreasing in storage order".into(),
                        );
                    }
                }
                last = Some((t, loc));
            }
        }
    }

    fn speed(&mut self, seqs: &[Sequence<'_>]) {
        let c = self.cfg;
        let threshold = format!(
            "max {} m/s, factor {}, floor {} m/s, gap {} s",
            c.max_speed_mps, c.speed_factor, c.speed_floor_mps, c.segment_gap_s
        );
        for s in seqs {
            for w in s.points.windows(2) {
                let ((_, a), (loc, b)) = (&w[0], &w[1]);
                let (Some(ta), Some(tb)) = (a.time, b.time) else { continue };
                let dt = ta.seconds_until(tb);
                if dt < 0.0 || dt > c.segment_gap_s {
                    continue;
                }
                let d = haversine_m(a.latitude, a.longitude, b.latitude, b.longitude);
                if dt == 0.0 {
                    if d > 1.0 {
                        let detail = format!("{d:.1} m moved in zero time");
                        self.add(Rule::SpeedPlausibility, Severity::Warn, s.subject, loc.clone(), detail, threshold.clone());
                    }
                    continue;
                }
                let implied = d / dt;
                if implied > c.max_speed_mps {
                    let detail = format!("implied speed {implied:.2} m/s over {dt} s");
                    self.add(Rule::SpeedPlausibility, Severity::Warn, s.subject, loc.clone(), detail, threshold.clone());
                } else if let Some(recorded) = b.speed {
                    let (i, r) = (implied.max(c.speed_floor_mps), recorded.max(c.speed_floor_mps));
                    if i.max(r) / i.min(r) > c.speed_factor {
                        let detail = format!("implied {implied:.2} m/s vs recorded {recorded:.2} m/s");
                        self.add(Rule::SpeedPlausibility, Severity::Warn, s.subject, loc.clone(), detail, threshold.clone());
                    }
                }
            }
        }
    }

    fn odometer(&mut self, bundle: &CaseBundle) {
        let threshold = "non-decreasing over time".to_string();
        if let Some(art) = &bundle.ebike {
            let mut rows: Vec<_> = art.data.drive_unit.iter().filter(|r| r.odometer.is_some()).collect();
            rows.sort_by_key(|r| (r.timestamp, r.row_id));
            for w in rows.windows(2) {
                let (a, b) = (w[0].odometer.unwrap_or_default(), w[1].odometer.unwrap_or_default());
                if b < a {
                    let loc = w[1].row_id.map_or_else(|| "DriveUnit".to_string(), |id| format!("DriveUnit#{id}"));
                    self.add(Rule::Odometer, Severity::Alert, &art.source, loc, format!("odometer {a} -> {b}"), threshold.clone());
                }
            }
        }
        if let Some(art) = &bundle.tracking {
            let mut trips: Vec<_> = art.data.trips.iter().filter(|t| t.start_time.is_some()).collect();
            trips.sort_by(|x, y| x.start_time.cmp(&y.start_time).then_with(|| x.trip_id.cmp(&y.trip_id)));
            let mut prev_end: Option<(f64, &str)> = None;
            for t in trips {
                let loc = format!("trip {}", t.trip_id);
                if let (Some(s), Some(e)) = (t.odometer_start, t.odometer_end) {
                    if e < s {
                        self.add(Rule::Odometer, Severity::Alert, &art.source, loc.clone(), format!("odometer {s} -> {e} within trip"), threshold.clone());
                    }
                }
                if let (Some((pe, pid)), Some(s)) = (prev_end, t.odometer_start) {
                    if s < pe {
                        let detail = format!("starts at {s}, below end {pe} of trip {pid}");
                        self.add(Rule::Odometer, Severity::Alert, &art.source, loc.clone(), detail, threshold.clone());
                    }
                }
                if let Some(e) = t.odometer_end.or(t.odometer_start) {
                    prev_end = Some((e, &t.trip_id));
                }
            }
        }
    }
}

/// Evaluates the enabled rules; absent data is skipped silently. The result
/// is sorted and free of duplicates, so rule order cannot matter.
pub fn run_checks(bundle: &CaseBundle, config: &SentryConfig) -> Vec<TamperFinding> {
    let mut c = Checker { cfg: config, findings: BTreeSet::new() };
    let seqs = sequences(bundle);
    for rule in &config.rules {
        match rule {
            Rule::Step25 => c.step25(bundle),
            Rule::MonotonicTime => c.monotonic(&seqs),
            Rule::SpeedPlausibility => c.speed(&seqs),
            Rule::Odometer => c.odometer(bundle),
        }
    }
    c.findings.into_iter().collect()
}
