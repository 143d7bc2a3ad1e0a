//! Seeded synthetic cases. Everything downstream (files, images, manifests)
//! is a pure function of the [`SyntheticCase`] built here.

use nyonscope::geo::haversine_m;
use nyonscope::{Generation, Timestamp};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::tamper::{TamperSpec, TimestampMode, Waypoint};

/// Second-generation units keep only this many recent trips.
pub const GEN2_TRIP_LIMIT: usize = 100;
/// Logging cadence of `ChartsData`, metres per row.
pub const CHARTS_STEP_M: i64 = 25;
/// Spacing of consecutive GPS fixes inside a trip.
pub const FIX_INTERVAL_MS: i64 = 5_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }
}

impl Default for BoundingBox {
    /// Lake Geneva shore around Nyon.
    fn default() -> Self {
        Self { min_lat: 46.30, max_lat: 46.50, min_lon: 6.05, max_lon: 6.35 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgeOptions {
    pub trips: usize,
    pub min_points: usize,
    pub max_points: usize,
    pub wifi_networks: usize,
    pub bluetooth_devices: usize,
    pub bbox: BoundingBox,
    /// Adds forged fixes with this timestamp mode (gen-1 only).
    pub tamper: Option<TimestampMode>,
}

impl Default for ForgeOptions {
    fn default() -> Self {
        Self {
            trips: 3,
            min_points: 12,
            max_points: 40,
            wifi_networks: 2,
            bluetooth_devices: 2,
            bbox: BoundingBox::default(),
            tamper: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub user_id: String,
    pub first_name: String,
    pub last_name: String,
    pub gender: String,
    pub date_of_birth: String,
    pub email: String,
    pub street: String,
    pub city: String,
    pub phone: String,
    pub strava: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
    pub time: Timestamp,
    /// Recorded ground speed, m/s.
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripSpec {
    pub id: i64,
    pub points: Vec<PointSpec>,
    /// Metres, as the drive unit would count them.
    pub odometer_start: f64,
    pub odometer_end: f64,
    pub heart_rate: f64,
    pub cadence: f64,
}

impl TripSpec {
    pub fn start(&self) -> Timestamp {
        self.points[0].time
    }

    pub fn end(&self) -> Timestamp {
        self.points[self.points.len() - 1].time
    }

    pub fn distance_m(&self) -> f64 {
        path_length(&self.points)
    }

    pub fn max_speed(&self) -> f64 {
        self.points.iter().map(|p| p.speed).fold(0.0, f64::max)
    }
}

pub fn path_length(points: &[PointSpec]) -> f64 {
    points.windows(2).map(|w| haversine_m(w[0].latitude, w[0].longitude, w[1].latitude, w[1].longitude)).sum()
}

/// One `ChartsData` row; the distance column is implied by the row index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartsRow {
    pub altitude: f64,
    pub speed: f64,
    pub cadence: f64,
    pub heart_rate: f64,
    pub state_of_charge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartsSpec {
    pub start_distance: i64,
    pub rows: Vec<ChartsRow>,
}

impl ChartsSpec {
    pub fn distance(&self, index: usize) -> i64 {
        self.start_distance + CHARTS_STEP_M * index as i64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WifiSpec {
    pub ssid: String,
    pub passphrase: String,
    pub modified: Timestamp,
    /// Station MAC used in the connman service id.
    pub station: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BluetoothSpec {
    pub address: String,
    pub name: String,
    pub trusted: bool,
    pub seen: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BikeSpec {
    pub drive_unit_serial: String,
    pub battery_serial: String,
    pub part_number: String,
    pub software_version: String,
    pub hardware_version: String,
    pub capacity_wh: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaceSpec {
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub modified: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCase {
    pub seed: u64,
    pub generation: Generation,
    pub user: UserSpec,
    pub bike: BikeSpec,
    /// Chronological; gen-2 cases hold at most [`GEN2_TRIP_LIMIT`].
    pub trips: Vec<TripSpec>,
    /// Gen-1 only; empty for gen-2.
    pub charts: ChartsSpec,
    pub wifi: Vec<WifiSpec>,
    pub bluetooth: Vec<BluetoothSpec>,
    /// Navigation favourites (gen-2) or planned-route waypoints (gen-1).
    pub places: Vec<PlaceSpec>,
    /// Consent stamps written to Settings.ini (gen-1).
    pub consents: Vec<(String, Timestamp)>,
    /// Analytics event kinds with their times (gen-2).
    pub events: Vec<(String, Timestamp)>,
    /// Start of the period the case covers.
    pub epoch: Timestamp,
    /// Fixes to be forged into the tree after emission.
    pub tamper: Option<TamperSpec>,
}

const FIRST_NAMES: &[&str] = &["Jane", "Luca", "Amélie", "Jonas", "Mia", "Noah", "Lea", "Elias"];
const LAST_NAMES: &[&str] = &["Doe", "Muster", "Rossi", "Favre", "Keller", "Dubois", "Meier"];
const CITIES: &[&str] = &["Nyon", "Gland", "Rolle", "Coppet", "Prangins"];
const SSIDS: &[&str] = &["Galaxy Note10+0c95", "HomeNet", "Cafe du Lac", "FRITZ!Box 7590", "iPhone de Léa", "guest"];
const DEVICE_NAMES: &[&str] = &["Pixel 7", "Galaxy S21", "iPhone", "Garmin HRM", "Forerunner 255"];
const EVENTS: &[&str] = &["BUI350_SYSTEM_WAKEUP", "BUI350_SYSTEM_SHUTDOWN", "BUI350_RIDE_START", "BUI350_RIDE_END"];

fn digits(rng: &mut impl Rng, n: usize) -> String {
    (0..n).map(|i| char::from(b'0' + rng.gen_range(if i == 0 { 1 } else { 0 }..10u8))).collect()
}

fn hex_upper(rng: &mut impl Rng, n: usize) -> String {
    (0..n).map(|_| char::from_digit(rng.gen_range(0..16), 16).unwrap().to_ascii_uppercase()).collect()
}

fn mac(rng: &mut impl Rng) -> String {
    (0..6).map(|_| format!("{:02X}", rng.gen::<u8>())).collect::<Vec<_>>().join(":")
}

/// Micro-degree rounding, as a GNSS receiver would report.
fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn forge_trip_points(rng: &mut impl Rng, bbox: &BoundingBox, start: Timestamp, count: usize) -> Vec<PointSpec> {
    let margin = 0.02;
    let mut lat = rng.gen_range(bbox.min_lat + margin..bbox.max_lat - margin);
    let mut lon = rng.gen_range(bbox.min_lon + margin..bbox.max_lon - margin);
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut alt = rng.gen_range(380.0..520.0);
    let mut t = start.millis();
    let mut points = vec![PointSpec { latitude: round6(lat), longitude: round6(lon), altitude: round2(alt), time: start, speed: 0.0 }];
    for _ in 1..count {
        // Fix intervals jitter by up to half a second.
        let dt = FIX_INTERVAL_MS + rng.gen_range(-500..=500);
        let v = rng.gen_range(3.0..9.0);
        heading += rng.gen_range(-0.4..0.4);
        let d = v * dt as f64 / 1000.0;
        let mut nlat = lat + d * heading.cos() / 111_195.0;
        let mut nlon = lon + d * heading.sin() / (111_195.0 * lat.to_radians().cos());
        if !bbox.contains(nlat, nlon) {
            heading += std::f64::consts::PI;
            nlat = lat + d * heading.cos() / 111_195.0;
            nlon = lon + d * heading.sin() / (111_195.0 * lat.to_radians().cos());
        }
        lat = nlat;
        lon = nlon;
        alt += rng.gen_range(-1.5..1.5);
        t += dt;
        let prev = points.last().unwrap();
        let (plat, plon) = (round6(lat), round6(lon));
        // Recorded speed agrees with the implied one to within 10 %.
        let implied = haversine_m(prev.latitude, prev.longitude, plat, plon) / (dt as f64 / 1000.0);
        let speed = round2(implied * rng.gen_range(0.9..1.1));
        points.push(PointSpec {
            latitude: plat,
            longitude: plon,
            altitude: round2(alt),
            time: Timestamp::from_millis(t).unwrap(),
            speed,
        });
    }
    points
}

/// Deterministic: the same seed, generation and options always give the same case.
pub fn forge_case(seed: u64, generation: Generation, options: &ForgeOptions) -> SyntheticCase {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let first = *FIRST_NAMES.choose(&mut rng).unwrap();
    let last = *LAST_NAMES.choose(&mut rng).unwrap();
    let user = UserSpec {
        user_id: digits(&mut rng, 13),
        first_name: first.to_string(),
        last_name: last.to_string(),
        gender: ["female", "male", "diverse"].choose(&mut rng).unwrap().to_string(),
        date_of_birth: format!("{}-{:02}-{:02}", rng.gen_range(1950..2006), rng.gen_range(1..13), rng.gen_range(1..29)),
        email: format!("{}.{}@example.com", first.to_lowercase(), last.to_lowercase()),
        street: format!("Route de Genève {}", rng.gen_range(1..200)),
        city: CITIES.choose(&mut rng).unwrap().to_string(),
        phone: format!("+4179{}", digits(&mut rng, 7)),
        strava: rng.gen_bool(0.5).then(|| digits(&mut rng, 8)),
    };
    let bike = BikeSpec {
        drive_unit_serial: format!("{}{}", digits(&mut rng, 4), hex_upper(&mut rng, 6)),
        battery_serial: digits(&mut rng, 10),
        part_number: format!("0275007{}", digits(&mut rng, 3)),
        software_version: format!("{}.{}.{}", rng.gen_range(1..4), rng.gen_range(0..20), rng.gen_range(0..100)),
        hardware_version: format!("{}.0", rng.gen_range(1..4)),
        capacity_wh: *[500, 625, 750].choose(&mut rng).unwrap(),
    };

    // 2022-01-01 plus up to ~500 days.
    let epoch_ms = 1_640_995_200_000 + rng.gen_range(0..500i64) * 86_400_000;
    let epoch = Timestamp::from_millis(epoch_ms).unwrap();
    let mut t = epoch_ms + rng.gen_range(6..10) * 3_600_000;
    let mut odometer = rng.gen_range(100_000..3_000_000) as f64;
    let mut trips = Vec::with_capacity(options.trips);
    for i in 0..options.trips {
        let count = rng.gen_range(options.min_points..=options.max_points.max(options.min_points));
        let points = forge_trip_points(&mut rng, &options.bbox, Timestamp::from_millis(t).unwrap(), count.max(2));
        let dist = path_length(&points).round();
        let trip = TripSpec {
            id: i as i64 + 1,
            odometer_start: odometer,
            odometer_end: odometer + dist,
            heart_rate: rng.gen_range(95..165) as f64,
            cadence: rng.gen_range(55..90) as f64,
            points,
        };
        odometer += dist + rng.gen_range(0..5_000) as f64;
        t = trip.end().millis() + rng.gen_range(2..30) * 3_600_000;
        trips.push(trip);
    }
    if generation == Generation::Gen2 && trips.len() > GEN2_TRIP_LIMIT {
        trips.drain(..trips.len() - GEN2_TRIP_LIMIT);
    }
    let horizon = trips.last().map_or(t, |tr| tr.end().millis()) + 3_600_000;

    let mut charts = ChartsSpec { start_distance: rng.gen_range(0..4_000) * CHARTS_STEP_M, rows: Vec::new() };
    if generation == Generation::Gen1 {
        let total: f64 = trips.iter().map(TripSpec::distance_m).sum();
        let mut soc = rng.gen_range(70.0..100.0f64);
        for _ in 0..(total / CHARTS_STEP_M as f64) as usize {
            soc = (soc - rng.gen_range(0.0..0.05)).max(5.0);
            charts.rows.push(ChartsRow {
                altitude: round2(rng.gen_range(380.0..520.0)),
                speed: round2(rng.gen_range(3.0..9.0)),
                cadence: rng.gen_range(50..95) as f64,
                heart_rate: rng.gen_range(90..170) as f64,
                state_of_charge: round2(soc),
            });
        }
    }

    let mut ssids: Vec<&str> = SSIDS.to_vec();
    ssids.shuffle(&mut rng);
    let wifi = ssids
        .into_iter()
        .take(options.wifi_networks)
        .map(|ssid| WifiSpec {
            ssid: ssid.to_string(),
            passphrase: format!("{}{}", hex_upper(&mut rng, 6).to_lowercase(), digits(&mut rng, 4)),
            modified: Timestamp::from_millis(rng.gen_range(epoch_ms..horizon)).unwrap(),
            station: hex_upper(&mut rng, 12).to_lowercase(),
        })
        .collect();
    let bluetooth = (0..options.bluetooth_devices)
        .map(|_| BluetoothSpec {
            address: mac(&mut rng),
            name: DEVICE_NAMES.choose(&mut rng).unwrap().to_string(),
            trusted: rng.gen_bool(0.5),
            // Whole seconds: bluego stores epoch seconds.
            seen: Timestamp::from_secs(rng.gen_range(epoch_ms..horizon) / 1000).unwrap(),
        })
        .collect();
    let bbox = options.bbox;
    let places: Vec<PlaceSpec> = ["Home", "Work", "Bakery"]
        .iter()
        .map(|name| PlaceSpec {
            name: format!("{name}, {}", user.city),
            latitude: round6(rng.gen_range(bbox.min_lat..bbox.max_lat)),
            longitude: round6(rng.gen_range(bbox.min_lon..bbox.max_lon)),
            modified: Timestamp::from_millis(rng.gen_range(epoch_ms..horizon)).unwrap(),
        })
        .collect();
    let consents = ["LocationDataAllowed", "HealthDataAllowed"]
        .iter()
        .map(|k| (k.to_string(), Timestamp::from_secs(rng.gen_range(epoch_ms - 86_400_000..epoch_ms) / 1000).unwrap()))
        .collect();
    let mut events: Vec<(String, Timestamp)> = (0..rng.gen_range(2..6))
        .map(|_| {
            let kind = EVENTS.choose(&mut rng).unwrap().to_string();
            (kind, Timestamp::from_millis(rng.gen_range(epoch_ms..horizon)).unwrap())
        })
        .collect();
    events.sort_by_key(|e| e.1);

    // Drawn last so that the clean part of the case does not depend on it.
    let tamper = options.tamper.map(|mode| {
        let (mut lat, mut lon) = match trips.last().and_then(|t| t.points.last()) {
            Some(p) => (p.latitude, p.longitude),
            None => (places[0].latitude, places[0].longitude),
        };
        let count = rng.gen_range(4..10);
        let mut waypoints = Vec::with_capacity(count);
        for _ in 0..count {
            lat = (lat + rng.gen_range(-0.0004..0.0004)).clamp(bbox.min_lat, bbox.max_lat);
            lon = (lon + rng.gen_range(-0.0004..0.0004)).clamp(bbox.min_lon, bbox.max_lon);
            waypoints.push(Waypoint { latitude: round6(lat), longitude: round6(lon), altitude: Some(round2(rng.gen_range(380.0..520.0))) });
        }
        TamperSpec { waypoints, mode }
    });

    SyntheticCase {
        seed,
        generation,
        user,
        bike,
        trips,
        charts,
        wifi,
        bluetooth,
        places,
        consents,
        events,
        epoch,
        tamper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_case() {
        let o = ForgeOptions::default();
        assert_eq!(forge_case(1, Generation::Gen1, &o), forge_case(1, Generation::Gen1, &o));
        assert_ne!(forge_case(1, Generation::Gen1, &o), forge_case(2, Generation::Gen1, &o));
    }

    #[test]
    fn no_trips_no_points() {
        let c = forge_case(3, Generation::Gen1, &ForgeOptions { trips: 0, ..Default::default() });
        assert!(c.trips.is_empty());
        assert!(c.charts.rows.is_empty());
    }

    #[test]
    fn gen2_keeps_last_hundred() {
        let o = ForgeOptions { trips: 103, min_points: 2, max_points: 3, ..Default::default() };
        let c = forge_case(4, Generation::Gen2, &o);
        assert_eq!(c.trips.len(), GEN2_TRIP_LIMIT);
        assert_eq!(c.trips[0].id, 4);
    }

    #[test]
    fn points_stay_in_box_and_plausible() {
        let o = ForgeOptions { trips: 5, ..Default::default() };
        for seed in 0..20 {
            let c = forge_case(seed, Generation::Gen1, &o);
            for trip in &c.trips {
                for w in trip.points.windows(2) {
                    assert!(o.bbox.contains(w[1].latitude, w[1].longitude));
                    let dt = w[0].time.seconds_until(w[1].time);
                    assert!(dt > 0.0);
                    let v = haversine_m(w[0].latitude, w[0].longitude, w[1].latitude, w[1].longitude) / dt;
                    assert!(v < 12.0, "{v}");
                }
            }
        }
    }
}
