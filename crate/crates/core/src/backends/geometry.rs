//! Image-space geometry for the capture path: lasso zones, detection
//! filtering and crop rectangles. Coordinates are pixels, y down.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("lasso needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("lasso encloses no area")]
    ZeroArea,
    #[error("lasso area overflows")]
    AreaOverflow,
    #[error("degenerate rectangle")]
    DegenerateRect,
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("crop is empty after clamping to the image")]
    EmptyCrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned rectangle, `min < max` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let r = Self { x_min, y_min, x_max, y_max };
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<(), GeometryError> {
        // NaN fails both comparisons.
        if self.x_max > self.x_min && self.y_max > self.y_min && self.x_max.is_finite() && self.x_min.is_finite() && self.y_max.is_finite() && self.y_min.is_finite() {
            Ok(())
        } else {
            Err(GeometryError::DegenerateRect)
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Point {
        Point::new((self.x_min + self.x_max) * 0.5, (self.y_min + self.y_max) * 0.5)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Whole pixels covered by the rectangle as `(x, y, width, height)`.
    pub fn to_pixels(&self) -> (u32, u32, u32, u32) {
        let x0 = self.x_min.floor().max(0.0) as u32;
        let y0 = self.y_min.floor().max(0.0) as u32;
        let x1 = self.x_max.ceil().max(0.0) as u32;
        let y1 = self.y_max.ceil().max(0.0) as u32;
        (x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub label: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: Rect,
}

impl DetectionBox {
    pub fn new(label: impl Into<String>, confidence: f64, bbox: Rect) -> Result<Self, GeometryError> {
        let d = Self {
            label: label.into(),
            confidence,
            bbox,
        };
        d.check()?;
        Ok(d)
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(GeometryError::Confidence(self.confidence));
        }
        self.bbox.check()
    }
}

/// Closed freehand polygon; the last point connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LassoPolygon {
    points: Vec<Point>,
}

impl LassoPolygon {
    pub fn new(points: Vec<Point>) -> Result<Self, GeometryError> {
        if points.len() < 3 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        let poly = Self { points };
        let area = poly.signed_area();
        if !area.is_finite() {
            return Err(GeometryError::AreaOverflow);
        }
        if area == 0.0 {
            return Err(GeometryError::ZeroArea);
        }
        Ok(poly)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Shoelace area, positive for counter-clockwise in y-up axes.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut twice = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            twice += a.x * b.y - b.x * a.y;
        }
        twice * 0.5
    }

    /// Even-odd rule: a horizontal ray from `p` crosses the boundary an odd
    /// number of times. Self-intersecting lassos are handled the same way.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.points.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[j];
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn bounds(&self) -> Rect {
        let mut r = Rect {
            x_min: f64::INFINITY,
            y_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for p in &self.points {
            r.x_min = r.x_min.min(p.x);
            r.y_min = r.y_min.min(p.y);
            r.x_max = r.x_max.max(p.x);
            r.y_max = r.y_max.max(p.y);
        }
        r
    }
}

impl<'de> Deserialize<'de> for LassoPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let points = Vec::<Point>::deserialize(d)?;
        LassoPolygon::new(points).map_err(serde::de::Error::custom)
    }
}

/// Boxes at or above `min_confidence` whose centre falls inside `lasso`, in
/// input order. Without a lasso only the confidence cut applies.
pub fn filter_detections(detections: &[DetectionBox], lasso: Option<&LassoPolygon>, min_confidence: f64) -> Result<Vec<DetectionBox>, GeometryError> {
    if !(0.0..=1.0).contains(&min_confidence) {
        return Err(GeometryError::Confidence(min_confidence));
    }
    Ok(detections
        .iter()
        .filter(|d| d.confidence >= min_confidence)
        .filter(|d| lasso.is_none_or(|l| l.contains(d.bbox.center())))
        .cloned()
        .collect())
}

/// Bounding rectangle of the lasso clamped to the image.
pub fn crop_rect(lasso: &LassoPolygon, image: ImageSize) -> Result<Rect, GeometryError> {
    let b = lasso.bounds();
    let r = Rect {
        x_min: b.x_min.clamp(0.0, image.width as f64),
        y_min: b.y_min.clamp(0.0, image.height as f64),
        x_max: b.x_max.clamp(0.0, image.width as f64),
        y_max: b.y_max.clamp(0.0, image.height as f64),
    };
    r.check().map_err(|_| GeometryError::EmptyCrop)?;
    Ok(r)
}
