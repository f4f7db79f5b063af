use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A WGS84 coordinate in decimal degrees.
///
/// Stored and serialized at full `f64` precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lng: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Lat,
    Lng,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Lat => "lat",
            Axis::Lng => "lng",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{0} out of range")]
pub struct OutOfRange(pub Axis);

impl GeoPoint {
    pub fn new(lat: f64, lng: f64) -> Result<Self, OutOfRange> {
        validate_geo(lat, lng)
    }
}

/// Checks the closed bounds `lat ∈ [-90, 90]`, `lng ∈ [-180, 180]`.
/// NaN fails both.
pub fn validate_geo(lat: f64, lng: f64) -> Result<GeoPoint, OutOfRange> {
    if !(-90.0..=90.0).contains(&lat) {
        return Err(OutOfRange(Axis::Lat));
    }
    if !(-180.0..=180.0).contains(&lng) {
        return Err(OutOfRange(Axis::Lng));
    }
    Ok(GeoPoint { lat, lng })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn origin() {
        assert_eq!(validate_geo(0.0, 0.0), Ok(GeoPoint { lat: 0.0, lng: 0.0 }));
    }

    #[test]
    fn lat_over() {
        assert_eq!(validate_geo(91.0, 0.0), Err(OutOfRange(Axis::Lat)));
    }

    #[test]
    fn closed_endpoints() {
        assert_eq!(
            validate_geo(-90.0, 180.0),
            Ok(GeoPoint {
                lat: -90.0,
                lng: 180.0
            })
        );
        assert_eq!(validate_geo(0.0, -180.5), Err(OutOfRange(Axis::Lng)));
        assert!(validate_geo(f64::NAN, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(lat in -90.0f64..=90.0, lng in -180.0f64..=180.0) {
            let p = validate_geo(lat, lng).unwrap();
            let text = serde_json::to_string(&p).unwrap();
            let back: GeoPoint = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back.lat.to_bits(), lat.to_bits());
            prop_assert_eq!(back.lng.to_bits(), lng.to_bits());
        }
    }
}
