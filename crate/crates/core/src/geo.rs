//! Small-area equirectangular conversions between meters and degrees.

pub const METERS_PER_DEG_LAT: f64 = 111_320.0;

/// Conversion factors frozen at a reference latitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geo {
    pub ref_lat: f64,
    m_per_deg_lon: f64,
}

impl Geo {
    pub fn new(ref_lat: f64) -> Self {
        Geo { ref_lat, m_per_deg_lon: METERS_PER_DEG_LAT * ref_lat.to_radians().cos() }
    }

    pub fn m_per_deg_lon(&self) -> f64 {
        self.m_per_deg_lon
    }

    pub fn north_m_to_deg(&self, m: f64) -> f64 {
        m / METERS_PER_DEG_LAT
    }

    pub fn east_m_to_deg(&self, m: f64) -> f64 {
        m / self.m_per_deg_lon
    }

    pub fn lat_deg_to_m(&self, deg: f64) -> f64 {
        deg * METERS_PER_DEG_LAT
    }

    pub fn lon_deg_to_m(&self, deg: f64) -> f64 {
        deg * self.m_per_deg_lon
    }

    pub fn distance_m(&self, lat_a: f64, lon_a: f64, lat_b: f64, lon_b: f64) -> f64 {
        self.lat_deg_to_m(lat_b - lat_a).hypot(self.lon_deg_to_m(lon_b - lon_a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_distance() {
        let g = Geo::new(47.5);
        assert!((g.lat_deg_to_m(g.north_m_to_deg(123.0)) - 123.0).abs() < 1e-9);
        assert!((g.lon_deg_to_m(g.east_m_to_deg(-77.0)) + 77.0).abs() < 1e-9);
        assert!((g.m_per_deg_lon() - 111_320.0 * 47.5f64.to_radians().cos()).abs() < 1e-9);
        assert!((g.distance_m(47.5, -122.2, 47.5 + 3.0 / 111_320.0, -122.2) - 3.0).abs() < 1e-9);
    }
}
