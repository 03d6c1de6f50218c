//! Great-circle distances between geographic points.
//!
//! Distances supervise the location-module pretraining and drive the
//! distance-based baselines. All arithmetic is f64; the normalized form
//! divides by the maximum possible great-circle distance so results land
//! in [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Maximum great-circle distance on the sphere (half the circumference).
pub const MAX_DISTANCE_KM: f64 = std::f64::consts::PI * EARTH_RADIUS_KM;

/// A point on the Earth's surface, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// Latitude in [-90, 90].
    pub lat: f64,
    /// Longitude in [-180, 180].
    pub long: f64,
}

impl GeoPoint {
    /// Build a point, rejecting out-of-range or non-finite coordinates.
    pub fn new(lat: f64, long: f64) -> Result<Self> {
        let p = GeoPoint { lat, long };
        p.validate()?;
        Ok(p)
    }

    /// Check both coordinates against their legal ranges.
    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::InvalidCoordinate {
                field: "lat",
                value: self.lat,
            });
        }
        if !self.long.is_finite() || !(-180.0..=180.0).contains(&self.long) {
            return Err(Error::InvalidCoordinate {
                field: "long",
                value: self.long,
            });
        }
        Ok(())
    }
}

/// Great-circle distance between two points in kilometers (haversine).
///
/// Symmetric in its arguments down to the bit level: every term is either
/// squared or a commutative product.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> Result<f64> {
    a.validate()?;
    b.validate()?;

    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let half_dlat = (b.lat - a.lat).to_radians() / 2.0;
    let half_dlong = (b.long - a.long).to_radians() / 2.0;

    let h = half_dlat.sin().powi(2) + lat_a.cos() * lat_b.cos() * half_dlong.sin().powi(2);
    // Rounding can push h a hair past 1 for near-antipodal pairs.
    let central = 2.0 * h.sqrt().min(1.0).asin();
    Ok(central * EARTH_RADIUS_KM)
}

/// Great-circle distance scaled into [0, 1] by the antipodal maximum.
pub fn normalized_distance(a: GeoPoint, b: GeoPoint) -> Result<f64> {
    Ok(haversine_km(a, b)? / MAX_DISTANCE_KM)
}
