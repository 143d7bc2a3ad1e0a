use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use super::{ArtifactError, TrackPoint};
use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedRoute {
    pub name: Option<String>,
    /// Waypoints, route points and track points in document order.
    pub points: Vec<TrackPoint>,
}

fn xml_err(e: impl std::fmt::Display) -> ArtifactError {
    ArtifactError::Xml(e.to_string())
}

fn point_from(e: &BytesStart<'_>) -> Result<TrackPoint, ArtifactError> {
    let (mut lat, mut lon) = (None, None);
    for attr in e.attributes() {
        let attr = attr.map_err(xml_err)?;
        let value = attr.unescape_value().map_err(xml_err)?;
        match attr.key.local_name().as_ref() {
            b"lat" => lat = value.trim().parse::<f64>().ok(),
            b"lon" => lon = value.trim().parse::<f64>().ok(),
            _ => {}
        }
    }
    match (lat, lon) {
        (Some(lat), Some(lon)) => TrackPoint::new(lat, lon),
        _ => Err(ArtifactError::invalid("gpx point", "lat/lon attribute missing or not numeric")),
    }
}

/// Namespace-agnostic: elements are matched by local name only.
pub fn parse_gpx(bytes: &[u8]) -> Result<PlannedRoute, ArtifactError> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    let mut route = PlannedRoute { name: None, points: Vec::new() };
    let mut open_point: Option<TrackPoint> = None;
    let mut saw_root = false;

    loop {
        let event = reader.read_event_into(&mut buf).map_err(xml_err)?;
        match event {
            Event::Start(e) => {
                let local = e.local_name().as_ref().to_vec();
                if stack.is_empty() {
                    if local != b"gpx" {
                        return Err(ArtifactError::Xml("root element is not gpx".into()));
                    }
                    saw_root = true;
                }
                if matches!(local.as_slice(), b"wpt" | b"rtept" | b"trkpt") {
                    open_point = Some(point_from(&e)?);
                }
                stack.push(local);
            }
            Event::Empty(e) => {
                let local = e.local_name();
                if stack.is_empty() {
                    return Err(ArtifactError::Xml("root element is not gpx".into()));
                }
                if matches!(local.as_ref(), b"wpt" | b"rtept" | b"trkpt") {
                    route.points.push(point_from(&e)?);
                }
            }
            Event::End(_) => {
                let local = stack.pop().unwrap_or_default();
                if matches!(local.as_slice(), b"wpt" | b"rtept" | b"trkpt") {
                    if let Some(p) = open_point.take() {
                        route.points.push(p);
                    }
                }
            }
            Event::Text(t) => {
                let text = t.unescape().map_err(xml_err)?.into_owned();
                let parent = stack.len().checked_sub(2).and_then(|i| stack.get(i)).map(Vec::as_slice);
                match (stack.last().map(Vec::as_slice), parent) {
                    (Some(b"ele"), _) => {
                        if let Some(p) = open_point.as_mut() {
                            p.altitude = text.trim().parse().ok();
                        }
                    }
                    (Some(b"time"), Some(b"wpt" | b"rtept" | b"trkpt")) => {
                        if let Some(p) = open_point.as_mut() {
                            p.time = Timestamp::parse(text.trim());
                        }
                    }
                    (Some(b"name"), Some(b"rte" | b"trk" | b"metadata")) if route.name.is_none() => {
                        route.name = Some(text);
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !saw_root {
        return Err(ArtifactError::Xml("no gpx element".into()));
    }
    if !stack.is_empty() {
        return Err(ArtifactError::Xml("unclosed elements at end of document".into()));
    }
    if route.points.is_empty() {
        return Err(ArtifactError::NoPoints);
    }
    Ok(route)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<gpx xmlns="http://www.topografix.com/GPX/1/1" version="1.1" creator="x">
  <rte><name>Sunday &amp; lake</name>
    <rtept lat="48.1" lon="11.5"><ele>520.5</ele></rtept>
    <rtept lat="48.2" lon="11.6"/>
  </rte>
  <trk><trkseg><trkpt lat="48.3" lon="11.7"><time>2023-06-14T09:00:00Z</time></trkpt></trkseg></trk>
</gpx>"#;

    #[test]
    fn points_and_name() {
        let r = parse_gpx(DOC.as_bytes()).unwrap();
        assert_eq!(r.name.as_deref(), Some("Sunday & lake"));
        assert_eq!(r.points.len(), 3);
        assert_eq!(r.points[0].altitude, Some(520.5));
        assert_eq!(r.points[2].time, Timestamp::parse("2023-06-14T09:00:00Z"));
    }

    #[test]
    fn prefixed_namespace() {
        let doc = r#"<g:gpx xmlns:g="http://www.topografix.com/GPX/1/0"><g:wpt lat="1" lon="2"/></g:gpx>"#;
        assert_eq!(parse_gpx(doc.as_bytes()).unwrap().points.len(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_gpx(b"<gpx></gpx>"), Err(ArtifactError::NoPoints)));
        assert!(matches!(parse_gpx(br#"<gpx><wpt lat="91" lon="0"/></gpx>"#), Err(ArtifactError::CoordinateOutOfRange(..))));
        assert!(matches!(parse_gpx(b"<gpx><wpt"), Err(ArtifactError::Xml(_))));
        assert!(matches!(parse_gpx(b"<kml/>"), Err(ArtifactError::Xml(_))));
    }
}
