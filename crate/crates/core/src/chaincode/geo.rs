//! Coordinates and distance checks.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeoError {
    #[error("cannot parse coordinate pair {0:?}, expected \"lat/lon\"")]
    Parse(String),
    #[error("coordinate out of range: {0}")]
    Range(String),
}

/// A latitude/longitude pair. Stored in the ledger as the canonical
/// `lat/lon` string with at most five decimal places (about one meter of
/// resolution), so ledger bytes never contain floating-point encodings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Range(format!("latitude {lat}")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Range(format!("longitude {lon}")));
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn parse(s: &str) -> Result<Self, GeoError> {
        let (lat, lon) = s.split_once('/').ok_or_else(|| GeoError::Parse(s.into()))?;
        let lat: f64 = lat.trim().parse().map_err(|_| GeoError::Parse(s.into()))?;
        let lon: f64 = lon.trim().parse().map_err(|_| GeoError::Parse(s.into()))?;
        GeoPoint::new(lat, lon)
    }

    /// Canonical `lat/lon` rendering: five decimal places with trailing
    /// zeros trimmed, matching how coordinates are printed in records.
    pub fn canonical(&self) -> String {
        format!("{}/{}", format_coord(self.lat), format_coord(self.lon))
    }
}

fn format_coord(x: f64) -> String {
    let s = format!("{x:.5}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters (haversine formula).
pub fn distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}
