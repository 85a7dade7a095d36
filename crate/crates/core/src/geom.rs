use serde::{Deserialize, Serialize};

/// Point in display space. The display is the unit square with the origin
/// at the top-left corner and `y` growing downwards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Distance used by the update kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Euclidean distance in the display plane.
    #[default]
    Euclidean,
    /// Distance along the `x` coordinate only, wrapping modulo 1. Used when
    /// the display space is the scanned unit interval.
    Circular,
}

impl Metric {
    pub fn dist2(self, a: Point, b: Point) -> f64 {
        match self {
            Metric::Euclidean => a.dist2(b),
            Metric::Circular => {
                let d = (a.x - b.x).rem_euclid(1.0);
                let d = d.min(1.0 - d);
                d * d
            }
        }
    }
}
