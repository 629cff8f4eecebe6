/// Planar metric position (UTM-style easting/northing in meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub easting_m: f64,
    pub northing_m: f64,
}

impl GeoPoint {
    pub fn new(easting_m: f64, northing_m: f64) -> Self {
        Self {
            easting_m,
            northing_m,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.easting_m.is_finite() && self.northing_m.is_finite()
    }

    pub fn distance_m(&self, other: &GeoPoint) -> f64 {
        (self.easting_m - other.easting_m).hypot(self.northing_m - other.northing_m)
    }
}
