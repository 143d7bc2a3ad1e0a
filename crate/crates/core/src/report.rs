//! Case report: a key-sorted JSON document plus a Markdown rendering of it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::artifacts::{AbsentArtifact, CaseBundle, Diagnostic, Generation, Provenance};
use crate::canonical::{sha256_hex, to_canonical_json};
use crate::chronicle::{tracks_for_bundle, Timeline, TrackStats, DEFAULT_GAP_S};
use crate::sentry::{Severity, TamperFinding};
use crate::time::Timestamp;

/// Values the toolkit chose itself rather than observed on a device. The
/// Markdown banner lists them so a reader can tell convention from evidence.
pub const CONVENTION_FIELDS: &[(&str, &str)] = &[
    ("trips[].stats", "tracks split at gaps longer than 300 s; distances are haversine sums on a 6371008.8 m sphere"),
    ("trips[].trip_id (gen1)", "numbered in time order by the toolkit; the device stores no trip id"),
    ("timeline ordering", "ties broken by source priority ebike-db < tracking < analytics < gnss < wifi < bluetooth < nav < settings < syslog"),
    ("timestamps", "integers at or above 10^12 read as epoch milliseconds, below as seconds; rendered UTC"),
    ("findings[].rule", "plausibility heuristics with configurable thresholds, not proof of tampering"),
    ("findings STEP25", "assumes a 25 m charts logging cadence; warn only"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cited<T> {
    pub value: T,
    pub source: String,
    pub sha256: String,
}

impl<T> Cited<T> {
    fn new(value: T, p: &Provenance) -> Self {
        Self { value, source: p.path.clone(), sha256: p.sha256.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMeta {
    pub tool: String,
    pub origin: Option<String>,
    /// SHA-256 of the canonical JSON of the bundle the report was built from.
    pub bundle_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub user_id: Option<String>,
    pub name: Option<String>,
    pub email: Option<String>,
    pub date_of_birth: Option<String>,
    pub linked_accounts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BikeSummary {
    pub serials: BTreeMap<String, String>,
    pub software_version: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WifiSummary {
    pub ssid: String,
    pub security: Option<String>,
    pub passphrase: Option<String>,
    pub last_modified: Option<Timestamp>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BluetoothSummary {
    pub address: Option<String>,
    pub name: Option<String>,
    pub trusted: Option<bool>,
    pub observed_at: Option<Timestamp>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripSummary {
    pub trip_id: Option<String>,
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
    pub stats: TrackStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineRef {
    pub events: usize,
    pub untimed: usize,
    pub first: Option<Timestamp>,
    pub last: Option<Timestamp>,
    /// SHA-256 of the JSON-lines rendering.
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub case: CaseMeta,
    pub generation: Generation,
    pub profile: Option<Cited<ProfileSummary>>,
    pub bikes: Vec<Cited<BikeSummary>>,
    pub wifi: Vec<Cited<WifiSummary>>,
    pub bluetooth: Vec<Cited<BluetoothSummary>>,
    pub trips: Vec<Cited<TripSummary>>,
    pub timeline: TimelineRef,
    pub findings: Vec<TamperFinding>,
    pub absent: Vec<AbsentArtifact>,
    pub diagnostics: Vec<Diagnostic>,
    pub provenance: Vec<Provenance>,
}

impl Report {
    pub fn to_json(&self) -> String {
        to_canonical_json(self).expect("report serializes")
    }

    pub fn to_markdown(&self) -> String {
        render_markdown(self)
    }
}

fn trip_source(bundle: &CaseBundle) -> Option<&Provenance> {
    match bundle.generation {
        Generation::Gen1 => bundle.ebike.as_ref().map(|a| &a.source),
        _ => bundle.tracking.as_ref().map(|a| &a.source).or(bundle.ebike.as_ref().map(|a| &a.source)),
    }
}

pub fn render_report(bundle: &CaseBundle, timeline: &Timeline, findings: &[TamperFinding]) -> Report {
    let bundle_sha256 = sha256_hex(to_canonical_json(bundle).expect("bundle serializes").as_bytes());

    let profile = bundle.profile.as_ref().map(|a| {
        let p = &a.data;
        let name = match (&p.first_name, &p.last_name) {
            (None, None) => None,
            (f, l) => Some([f.as_deref(), l.as_deref()].into_iter().flatten().collect::<Vec<_>>().join(" ")),
        };
        let linked_accounts = p.social.iter().filter(|(_, v)| !v.is_null()).map(|(k, _)| k.clone()).collect();
        Cited::new(
            ProfileSummary {
                user_id: p.user_id.clone(),
                name,
                email: p.email.clone(),
                date_of_birth: p.date_of_birth.clone(),
                linked_accounts,
            },
            &a.source,
        )
    });

    let bikes = bundle
        .bikes
        .iter()
        .flat_map(|a| {
            a.data.iter().map(|b| {
                Cited::new(BikeSummary { serials: b.serials.clone(), software_version: b.software_version.clone() }, &a.source)
            })
        })
        .collect();

    let wifi = bundle
        .wifi
        .iter()
        .map(|a| {
            let w = &a.data;
            Cited::new(
                WifiSummary {
                    ssid: w.ssid.clone(),
                    security: w.security.clone(),
                    passphrase: w.passphrase.clone(),
                    last_modified: w.last_modified,
                },
                &a.source,
            )
        })
        .collect();

    let bluetooth = bundle
        .bluetooth
        .iter()
        .map(|a| {
            let d = &a.data;
            Cited::new(
                BluetoothSummary {
                    address: d.address.clone(),
                    name: d.name.clone(),
                    trusted: d.trusted,
                    observed_at: d.observed_at,
                },
                &a.source,
            )
        })
        .collect();

    let trips = match trip_source(bundle) {
        Some(src) => tracks_for_bundle(bundle, DEFAULT_GAP_S)
            .into_iter()
            .map(|t| {
                let summary = TripSummary {
                    trip_id: t.trip_id,
                    start: t.points.first().and_then(|p| p.time),
                    end: t.points.last().and_then(|p| p.time),
                    stats: t.stats,
                };
                Cited::new(summary, src)
            })
            .collect(),
        None => Vec::new(),
    };

    let timeline = TimelineRef {
        events: timeline.events.len(),
        untimed: timeline.quarantined.len(),
        first: timeline.events.first().map(|e| e.time),
        last: timeline.events.last().map(|e| e.time),
        sha256: sha256_hex(timeline.to_json_lines().as_bytes()),
    };

    let mut findings = findings.to_vec();
    findings.sort();
    findings.dedup();

    Report {
        case: CaseMeta {
            tool: format!("nyonscope {}", env!("CARGO_PKG_VERSION")),
            origin: bundle.origin.clone(),
            bundle_sha256,
        },
        generation: bundle.generation,
        profile,
        bikes,
        wifi,
        bluetooth,
        trips,
        timeline,
        findings,
        absent: bundle.absent.clone(),
        diagnostics: bundle.diagnostics.clone(),
        provenance: bundle.sources().into_iter().cloned().collect(),
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), T::to_string)
}

/// Keeps table cells on one line and stops stray pipes from adding columns.
fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace(['\n', '\r'], " ")
}

fn cite<T>(c: &Cited<T>) -> String {
    format!("`{}` ({})", cell(&c.source), &c.sha256[..c.sha256.len().min(12)])
}

fn render_markdown(r: &Report) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Case report\n");
    let _ = writeln!(md, "> **Toolkit-convention fields.** These values come from toolkit design choices, not from the device:");
    let _ = writeln!(md, ">");
    for (field, why) in CONVENTION_FIELDS {
        let _ = writeln!(md, "> - `{field}`: {why}");
    }
    let _ = writeln!(md);
    let _ = writeln!(md, "- Tool: {}", r.case.tool);
    let _ = writeln!(md, "- Origin: {}", cell(&opt(&r.case.origin)));
    let _ = writeln!(md, "- Generation: {}", r.generation);
    let _ = writeln!(md, "- Bundle SHA-256: `{}`", r.case.bundle_sha256);

    let alerts = r.findings.iter().filter(|f| f.severity == Severity::Alert).count();
    let _ = writeln!(md, "\n## Findings\n");
    if r.findings.is_empty() {
        let _ = writeln!(md, "No findings.");
    } else {
        let _ = writeln!(md, "{} finding(s), {alerts} alert(s).\n", r.findings.len());
        let _ = writeln!(md, "| Rule | Severity | Source | Record | Detail | Threshold |");
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for f in &r.findings {
            let sev = serde_json::to_value(f.severity).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let _ = writeln!(
                md,
                "| {} | {sev} | `{}` | {} | {} | {} |",
                f.rule,
                cell(&f.subject.path),
                cell(&f.locator),
                cell(&f.detail),
                cell(&f.threshold)
            );
        }
    }

    let _ = writeln!(md, "\n## Profile\n");
    match &r.profile {
        Some(p) => {
            let v = &p.value;
            let _ = writeln!(md, "- User id: {}", cell(&opt(&v.user_id)));
            let _ = writeln!(md, "- Name: {}", cell(&opt(&v.name)));
            let _ = writeln!(md, "- E-mail: {}", cell(&opt(&v.email)));
            let _ = writeln!(md, "- Date of birth: {}", cell(&opt(&v.date_of_birth)));
            if !v.linked_accounts.is_empty() {
                let _ = writeln!(md, "- Linked accounts: {}", v.linked_accounts.join(", "));
            }
            let _ = writeln!(md, "- Source: {}", cite(p));
        }
        None => {
            let _ = writeln!(md, "Not present.");
        }
    }

    if !r.bikes.is_empty() {
        let _ = writeln!(md, "\n## Bikes\n");
        for b in &r.bikes {
            let serials: Vec<String> = b.value.serials.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(md, "- {} (software {}) from {}", cell(&serials.join(", ")), cell(&opt(&b.value.software_version)), cite(b));
        }
    }

    let _ = writeln!(md, "\n## Wi-Fi networks\n");
    if r.wifi.is_empty() {
        let _ = writeln!(md, "None.");
    } else {
        let _ = writeln!(md, "| SSID | Security | Passphrase | Modified | Source |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for w in &r.wifi {
            let v = &w.value;
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                cell(&v.ssid),
                cell(&opt(&v.security)),
                cell(&opt(&v.passphrase)),
                opt(&v.last_modified),
                cite(w)
            );
        }
    }

    let _ = writeln!(md, "\n## Bluetooth devices\n");
    if r.bluetooth.is_empty() {
        let _ = writeln!(md, "None.");
    } else {
        let _ = writeln!(md, "| Address | Name | Trusted | Seen | Source |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for b in &r.bluetooth {
            let v = &b.value;
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                cell(&opt(&v.address)),
                cell(&opt(&v.name)),
                opt(&v.trusted),
                opt(&v.observed_at),
                cite(b)
            );
        }
    }

    let _ = writeln!(md, "\n## Trips\n");
    if r.trips.is_empty() {
        let _ = writeln!(md, "None.");
    } else {
        let _ = writeln!(md, "| Trip | Start | End | Points | Distance (m) | Duration (s) | Source |");
        let _ = writeln!(md, "|---|---|---|---|---|---|---|");
        for t in &r.trips {
            let v = &t.value;
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {:.1} | {:.0} | {} |",
                cell(&opt(&v.trip_id)),
                opt(&v.start),
                opt(&v.end),
                v.stats.points,
                v.stats.distance_m,
                v.stats.duration_s,
                cite(t)
            );
        }
    }

    let tl = &r.timeline;
    let _ = writeln!(md, "\n## Timeline\n");
    let _ = writeln!(
        md,
        "{} event(s) from {} to {}; {} untimed record(s). JSON-lines SHA-256 `{}`.",
        tl.events,
        opt(&tl.first),
        opt(&tl.last),
        tl.untimed,
        tl.sha256
    );

    if !r.absent.is_empty() || !r.diagnostics.is_empty() {
        let _ = writeln!(md, "\n## Gaps and diagnostics\n");
        for a in &r.absent {
            let _ = writeln!(md, "- absent: {} (`{}`)", a.kind, cell(&a.path));
        }
        for d in &r.diagnostics {
            let _ = writeln!(md, "- {:?}: `{}`: {}", d.level, cell(&opt(&d.path)), cell(&d.message));
        }
    }

    let _ = writeln!(md, "\n## Provenance\n");
    if r.provenance.is_empty() {
        let _ = writeln!(md, "No source files.");
    } else {
        let _ = writeln!(md, "| Path | SHA-256 |");
        let _ = writeln!(md, "|---|---|");
        for p in &r.provenance {
            let _ = writeln!(md, "| `{}` | `{}` |", cell(&p.path), p.sha256);
        }
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifacts::{assemble_bundle, BundleOptions};
    use crate::chronicle::build_timeline;
    use crate::sentry::Rule;
    use crate::tree::FileTree;

    fn empty_bundle() -> CaseBundle {
        let dir = tempfile::tempdir().unwrap();
        assemble_bundle(&FileTree::new(dir.path()), &BundleOptions::default())
    }

    #[test]
    fn empty_bundle_gives_minimal_report() {
        let b = empty_bundle();
        let r = render_report(&b, &build_timeline(&b), &[]);
        assert!(r.profile.is_none() && r.trips.is_empty() && r.findings.is_empty());
        let md = r.to_markdown();
        assert!(md.contains("Toolkit-convention fields"));
        assert!(md.contains("No findings."));
        assert_eq!(r.to_json(), render_report(&b, &build_timeline(&b), &[]).to_json());
    }

    #[test]
    fn alerts_reach_markdown() {
        let b = empty_bundle();
        let subject = Provenance { path: "a|b".into(), sha256: "ff".into(), origin: None };
        let f = TamperFinding {
            rule: Rule::MonotonicTime,
            severity: Severity::Alert,
            subject,
            locator: "Localization#7".into(),
            detail: "time went back".into(),
            threshold: "non-decreasing".into(),
        };
        let r = render_report(&b, &build_timeline(&b), &[f.clone(), f]);
        assert_eq!(r.findings.len(), 1);
        let md = r.to_markdown();
        assert!(md.contains("| MONOTONIC_TIME | alert | `a\\|b` | Localization#7 |"));
    }
}
