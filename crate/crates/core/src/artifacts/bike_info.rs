use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::excerpt::parse_json_document;
use super::{normalize_key, value_as_string, ArtifactError, Extras, JsonFields, Parsed};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BikeInfo {
    /// Every `*serial*` / `*partNumber*` key of the bike object.
    pub serials: BTreeMap<String, String>,
    pub software_version: Option<String>,
    pub hardware_version: Option<String>,
    pub battery_packs: Vec<Extras>,
    pub extras: Extras,
}

fn is_serial_key(key: &str) -> bool {
    let k = normalize_key(key);
    k.contains("serial") || k.contains("partnumber")
}

pub fn parse_bike_info(bytes: &[u8]) -> Result<Parsed<Vec<BikeInfo>>, ArtifactError> {
    let (doc, _) = parse_json_document(bytes)?;
    let items = match doc {
        Value::Array(items) => items,
        Value::Object(mut map) => match map.remove("bikes") {
            Some(Value::Array(items)) => items,
            _ => vec![Value::Object(map)],
        },
        _ => return Err(ArtifactError::invalid("bike-info", "expected a list of bikes")),
    };
    let mut bikes = Vec::new();
    let mut warnings = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        let Value::Object(map) = item else {
            warnings.push(format!("entry {i}: not an object, skipped"));
            continue;
        };
        let mut f = JsonFields::new(map);
        let mut bike = BikeInfo {
            software_version: f.take_string(&["softwareVersion", "software_version", "swVersion"]),
            hardware_version: f.take_string(&["hardwareVersion", "hardware_version", "hwVersion"]),
            ..Default::default()
        };
        match f.take(&["batteryPacks", "battery_packs", "batteries"]) {
            Some(Value::Array(packs)) => {
                for pack in packs {
                    match pack {
                        Value::Object(m) => bike.battery_packs.push(m.into_iter().collect()),
                        other => warnings.push(format!("entry {i}: battery pack {other} is not an object")),
                    }
                }
            }
            Some(other) => {
                bike.extras.insert("batteryPacks".into(), other);
            }
            None => {}
        }
        for (k, v) in f.into_extras() {
            match value_as_string(&v) {
                Some(s) if is_serial_key(&k) => {
                    bike.serials.insert(k, s);
                }
                _ => {
                    bike.extras.insert(k, v);
                }
            }
        }
        if bike.serials.is_empty() {
            warnings.push(format!("entry {i}: no serial or part number"));
        }
        bikes.push(bike);
    }
    Ok(Parsed::new(bikes, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bikes_with_packs() {
        let doc = br#"[
            {"driveUnitSerialNumber": "4711", "driveUnitPartNumber": "0275007", "softwareVersion": "1.2.3",
             "hardwareVersion": "B", "batteryPacks": [{"serialNumber": "BP1", "capacityWh": 625}], "nickname": "red"},
            {"frameNumber": "WXYZ", "bikeSerial": 12, "batteryPacks": []}
        ]"#;
        let p = parse_bike_info(doc).unwrap();
        assert!(p.warnings.is_empty());
        let b = p.value;
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].serials.len(), 2);
        assert_eq!(b[0].battery_packs[0]["capacityWh"], 625);
        assert_eq!(b[0].extras["nickname"], "red");
        assert_eq!(b[1].serials["bikeSerial"], "12");
        assert_eq!(b[1].extras["frameNumber"], "WXYZ");
    }

    #[test]
    fn empty_list() {
        assert!(parse_bike_info(b"[]").unwrap().value.is_empty());
    }
}
