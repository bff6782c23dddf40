//! Spherical geodesy used throughout the engine: great-circle distance,
//! initial bearing, heading arithmetic and the relative-direction classes
//! that every encoder and policy shares.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate lat={lat}, lng={lng}")]
    InvalidPoint { lat: f64, lng: f64 },
    #[error("heading {0} is not finite")]
    InvalidHeading(f64),
    #[error("bearing is undefined between coincident points ({lat}, {lng})")]
    CoincidentPoints { lat: f64, lng: f64 },
}

/// A WGS84 latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lng: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lng: f64) -> Result<Self, GeoError> {
        let valid = lat.is_finite() && lng.is_finite() && (-90.0..=90.0).contains(&lat) && lng > -180.0 && lng <= 180.0;
        if valid {
            Ok(Self { lat, lng })
        } else {
            Err(GeoError::InvalidPoint { lat, lng })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lng(&self) -> f64 {
        self.lng
    }
}

/// A compass heading in degrees, always normalized to `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Heading(f64);

impl Heading {
    pub const NORTH: Heading = Heading(0.0);

    pub fn new(degrees: f64) -> Result<Self, GeoError> {
        if degrees.is_finite() {
            Ok(Heading(normalize_degrees(degrees)))
        } else {
            Err(GeoError::InvalidHeading(degrees))
        }
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    /// Rotates by a signed offset (positive is clockwise).
    pub fn rotate(self, offset: f64) -> Heading {
        Heading(normalize_degrees(self.0 + offset))
    }
}

impl TryFrom<f64> for Heading {
    type Error = GeoError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Heading::new(value)
    }
}

impl From<Heading> for f64 {
    fn from(h: Heading) -> f64 {
        h.0
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}°", self.0)
    }
}

/// Maps any finite angle into `[0, 360)`.
pub fn normalize_degrees(x: f64) -> f64 {
    let r = ((x % 360.0) + 360.0) % 360.0;
    // (-tiny % 360) + 360 rounds to exactly 360.0
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Where something lies relative to the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelativeDirection {
    Forward,
    Left,
    Right,
    Back,
}

impl RelativeDirection {
    pub const ALL: [RelativeDirection; 4] = [
        RelativeDirection::Forward,
        RelativeDirection::Left,
        RelativeDirection::Right,
        RelativeDirection::Back,
    ];

    /// Signed offset of the class center from the travel heading.
    pub fn center_offset(self) -> f64 {
        match self {
            RelativeDirection::Forward => 0.0,
            RelativeDirection::Left => -90.0,
            RelativeDirection::Right => 90.0,
            RelativeDirection::Back => 180.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelativeDirection::Forward => "Forward",
            RelativeDirection::Left => "Left",
            RelativeDirection::Right => "Right",
            RelativeDirection::Back => "Back",
        }
    }

    /// Classifies a signed offset in `(-180, 180]`.
    pub fn classify(delta: f64) -> RelativeDirection {
        if (-45.0..=45.0).contains(&delta) {
            RelativeDirection::Forward
        } else if (-135.0..-45.0).contains(&delta) {
            RelativeDirection::Left
        } else if delta > 45.0 && delta <= 135.0 {
            RelativeDirection::Right
        } else {
            RelativeDirection::Back
        }
    }
}

impl fmt::Display for RelativeDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Great-circle distance in meters (haversine, mean Earth radius).
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lng - a.lng).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Initial great-circle bearing from `from` towards `to`.
pub fn bearing(from: GeoPoint, to: GeoPoint) -> Result<Heading, GeoError> {
    if from == to {
        return Err(GeoError::CoincidentPoints {
            lat: from.lat,
            lng: from.lng,
        });
    }
    let phi1 = from.lat.to_radians();
    let phi2 = to.lat.to_radians();
    let dlambda = (to.lng - from.lng).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    Ok(Heading(normalize_degrees(y.atan2(x).to_degrees())))
}

/// Smallest absolute angle between two headings, in `[0, 180]`.
pub fn angular_diff(h1: Heading, h2: Heading) -> f64 {
    let d = (h1.0 - h2.0).abs();
    d.min(360.0 - d)
}

/// Signed offset of `target` from `current` in `(-180, 180]` and its class.
pub fn relative_direction(target: Heading, current: Heading) -> (f64, RelativeDirection) {
    let mut delta = normalize_degrees(target.0 - current.0 + 180.0) - 180.0;
    // the modular form yields [-180, 180); fold -180 onto +180
    if delta <= -180.0 {
        delta = 180.0;
    }
    (delta, RelativeDirection::classify(delta))
}

/// Cardinal grid step for a heading: N (-1,0), E (0,1), S (1,0), W (0,-1).
pub fn heading_to_grid_offset(h: Heading) -> (i32, i32) {
    let d = h.0;
    if !(45.0..315.0).contains(&d) {
        (-1, 0)
    } else if d < 135.0 {
        (0, 1)
    } else if d < 225.0 {
        (1, 0)
    } else {
        (0, -1)
    }
}

/// Eight-point compass word, 45° sectors centered on North.
pub fn compass_word(h: Heading) -> &'static str {
    const WORDS: [&str; 8] = [
        "North",
        "Northeast",
        "East",
        "Southeast",
        "South",
        "Southwest",
        "West",
        "Northwest",
    ];
    let sector = (normalize_degrees(h.0 + 22.5) / 45.0).floor() as usize % 8;
    WORDS[sector]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lng: f64) -> GeoPoint {
        GeoPoint::new(lat, lng).unwrap()
    }

    fn h(d: f64) -> Heading {
        Heading::new(d).unwrap()
    }

    #[test]
    fn haversine_identity_and_one_degree() {
        assert_eq!(haversine_distance(p(0.0, 0.0), p(0.0, 0.0)), 0.0);
        // R * pi / 180 with R = 6371 km
        let d = haversine_distance(p(0.0, 0.0), p(0.0, 1.0));
        assert!((d - 111_194.926_644_558_7).abs() < 1e-6, "{d}");
        assert!((d - 111_195.0).abs() <= 1.0);
    }

    #[test]
    fn bearing_cardinal_cases() {
        assert_eq!(bearing(p(0.0, 0.0), p(1.0, 0.0)).unwrap().degrees(), 0.0);
        assert!((bearing(p(0.0, 0.0), p(0.0, 1.0)).unwrap().degrees() - 90.0).abs() < 1e-12);
        assert!((bearing(p(0.0, 0.0), p(-1.0, 0.0)).unwrap().degrees() - 180.0).abs() < 1e-12);
        assert!((bearing(p(0.0, 0.0), p(0.0, -1.0)).unwrap().degrees() - 270.0).abs() < 1e-12);
    }

    #[test]
    fn bearing_rejects_coincident_points() {
        assert!(matches!(
            bearing(p(40.7, -74.0), p(40.7, -74.0)),
            Err(GeoError::CoincidentPoints { .. })
        ));
    }

    #[test]
    fn point_validation() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.0).is_err());
        assert!(GeoPoint::new(0.0, 180.0).is_ok());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(Heading::new(f64::INFINITY).is_err());
    }

    #[test]
    fn heading_normalizes() {
        assert_eq!(h(360.0).degrees(), 0.0);
        assert_eq!(h(-90.0).degrees(), 270.0);
        assert_eq!(h(725.0).degrees(), 5.0);
        assert!(h(-1e-18).degrees() < 360.0);
        assert_eq!(h(10.0).rotate(-20.0).degrees(), 350.0);
    }

    #[test]
    fn angular_diff_cases() {
        assert_eq!(angular_diff(h(10.0), h(350.0)), 20.0);
        assert_eq!(angular_diff(h(123.4), h(123.4)), 0.0);
        assert_eq!(angular_diff(h(0.0), h(180.0)), 180.0);
    }

    #[test]
    fn relative_direction_cases() {
        assert_eq!(relative_direction(h(90.0), h(0.0)), (90.0, RelativeDirection::Right));
        assert_eq!(relative_direction(h(0.0), h(0.0)), (0.0, RelativeDirection::Forward));
        assert_eq!(relative_direction(h(270.0), h(0.0)), (-90.0, RelativeDirection::Left));
        assert_eq!(relative_direction(h(180.0), h(0.0)), (180.0, RelativeDirection::Back));
    }

    #[test]
    fn classification_boundaries() {
        use RelativeDirection::*;
        assert_eq!(RelativeDirection::classify(45.0), Forward);
        assert_eq!(RelativeDirection::classify(-45.0), Forward);
        assert_eq!(RelativeDirection::classify(45.1), Right);
        assert_eq!(RelativeDirection::classify(135.0), Right);
        assert_eq!(RelativeDirection::classify(135.1), Back);
        assert_eq!(RelativeDirection::classify(-135.0), Left);
        assert_eq!(RelativeDirection::classify(-135.1), Back);
        assert_eq!(RelativeDirection::classify(180.0), Back);
    }

    #[test]
    fn grid_offsets() {
        assert_eq!(heading_to_grid_offset(h(30.0)), (-1, 0));
        assert_eq!(heading_to_grid_offset(h(90.0)), (0, 1));
        assert_eq!(heading_to_grid_offset(h(224.9)), (1, 0));
        assert_eq!(heading_to_grid_offset(h(225.0)), (0, -1));
        assert_eq!(heading_to_grid_offset(h(315.0)), (-1, 0));
        assert_eq!(heading_to_grid_offset(h(314.999)), (0, -1));
        assert_eq!(heading_to_grid_offset(h(45.0)), (0, 1));
    }

    #[test]
    fn compass_words() {
        assert_eq!(compass_word(h(208.6)), "Southwest");
        assert_eq!(compass_word(h(119.0)), "Southeast");
        assert_eq!(compass_word(h(298.0)), "Northwest");
        assert_eq!(compass_word(h(359.0)), "North");
        assert_eq!(compass_word(h(22.5)), "Northeast");
    }

    proptest! {
        #[test]
        fn angular_diff_symmetric_and_bounded(a in 0.0f64..360.0, b in 0.0f64..360.0) {
            let d = angular_diff(h(a), h(b));
            prop_assert_eq!(d, angular_diff(h(b), h(a)));
            prop_assert!((0.0..=180.0).contains(&d));
        }

        #[test]
        fn haversine_symmetric(a in -80.0f64..80.0, b in -179.0f64..179.0,
                               c in -80.0f64..80.0, d in -179.0f64..179.0) {
            let x = p(a, b);
            let y = p(c, d);
            prop_assert_eq!(haversine_distance(x, y), haversine_distance(y, x));
        }

        #[test]
        fn bearing_to_self_direction_is_forward(a in -80.0f64..80.0, b in -179.0f64..179.0,
                                                da in -0.01f64..0.01, db in -0.01f64..0.01) {
            let x = p(a, b);
            let y = p(a + da, b + db);
            prop_assume!(x != y);
            let br = bearing(x, y).unwrap();
            prop_assert_eq!(relative_direction(br, br), (0.0, RelativeDirection::Forward));
        }

        #[test]
        fn delta_in_half_open_range(t in 0.0f64..360.0, c in 0.0f64..360.0) {
            let (delta, _) = relative_direction(h(t), h(c));
            prop_assert!(delta > -180.0 && delta <= 180.0);
        }
    }
}
