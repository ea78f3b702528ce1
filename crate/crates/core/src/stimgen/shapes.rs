use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::hull::Point;

/// Samples taken along curved boundaries when a polygonal outline is needed.
pub const CURVE_SAMPLES: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Ellipse,
    Rectangle,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::Circle,
        Shape::Square,
        Shape::Triangle,
        Shape::Ellipse,
        Shape::Rectangle,
    ];
}

/// One object of a dot display.
///
/// `size` is the circumradius: every shape fits inside the disc of radius
/// `size` around `center`, which is what the non-overlap and containment
/// checks use. `aspect` is the minor/major ratio for ellipses and the
/// height/width ratio for rectangles (1 otherwise). `orientation` is a
/// rotation in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub center: Point,
    pub size: f64,
    pub aspect: f64,
    pub orientation: f64,
}

impl SceneObject {
    pub fn circle(center: Point, radius: f64) -> Self {
        SceneObject {
            shape: Shape::Circle,
            center,
            size: radius,
            aspect: 1.0,
            orientation: 0.0,
        }
    }

    fn rect_half_extents(&self) -> (f64, f64) {
        let w = self.size / (1.0 + self.aspect * self.aspect).sqrt();
        (w, w * self.aspect)
    }

    /// Vertices for polygonal shapes, in counter-clockwise order.
    fn polygon(&self) -> Vec<Point> {
        let (s, c) = self.orientation.sin_cos();
        let place = |x: f64, y: f64| -> Point {
            [self.center[0] + c * x - s * y, self.center[1] + s * x + c * y]
        };
        match self.shape {
            Shape::Square => (0..4)
                .map(|k| {
                    let t = PI / 4.0 + k as f64 * PI / 2.0;
                    place(self.size * t.cos(), self.size * t.sin())
                })
                .collect(),
            Shape::Triangle => (0..3)
                .map(|k| {
                    let t = PI / 2.0 + k as f64 * 2.0 * PI / 3.0;
                    place(self.size * t.cos(), self.size * t.sin())
                })
                .collect(),
            Shape::Rectangle => {
                let (w, h) = self.rect_half_extents();
                vec![place(w, h), place(-w, h), place(-w, -h), place(w, -h)]
            }
            Shape::Circle | Shape::Ellipse => {
                let (a, b) = self.semi_axes();
                (0..CURVE_SAMPLES)
                    .map(|k| {
                        let t = k as f64 * 2.0 * PI / CURVE_SAMPLES as f64;
                        place(a * t.cos(), b * t.sin())
                    })
                    .collect()
            }
        }
    }

    fn semi_axes(&self) -> (f64, f64) {
        match self.shape {
            Shape::Ellipse => (self.size, self.size * self.aspect),
            _ => (self.size, self.size),
        }
    }

    /// Points on the boundary: exact vertices for polygons, evenly spaced
    /// samples for curved shapes.
    pub fn boundary_points(&self) -> Vec<Point> {
        self.polygon()
    }

    /// Exact geometric area.
    pub fn area(&self) -> f64 {
        let r = self.size;
        match self.shape {
            Shape::Circle => PI * r * r,
            Shape::Ellipse => PI * r * r * self.aspect,
            Shape::Square => 2.0 * r * r,
            Shape::Triangle => 3.0 * 3f64.sqrt() / 4.0 * r * r,
            Shape::Rectangle => {
                let (w, h) = self.rect_half_extents();
                4.0 * w * h
            }
        }
    }

    /// Whether point `p` lies inside the (closed) shape.
    pub fn contains(&self, p: Point) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        if dx * dx + dy * dy > self.size * self.size {
            return false;
        }
        // rotate into the object's frame
        let (s, c) = self.orientation.sin_cos();
        let x = c * dx + s * dy;
        let y = -s * dx + c * dy;
        match self.shape {
            Shape::Circle => true,
            Shape::Ellipse => {
                let (a, b) = self.semi_axes();
                (x / a).powi(2) + (y / b).powi(2) <= 1.0
            }
            Shape::Square => {
                let h = self.size / 2f64.sqrt();
                x.abs() <= h && y.abs() <= h
            }
            Shape::Rectangle => {
                let (w, h) = self.rect_half_extents();
                x.abs() <= w && y.abs() <= h
            }
            Shape::Triangle => {
                let verts = self.polygon();
                (0..3).all(|k| {
                    let a = verts[k];
                    let b = verts[(k + 1) % 3];
                    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
                })
            }
        }
    }

    /// Gap between the bounding discs of two objects (negative when they
    /// intersect). A lower bound on the true boundary gap.
    pub fn gap_to(&self, other: &SceneObject) -> f64 {
        let d = ((self.center[0] - other.center[0]).powi(2)
            + (self.center[1] - other.center[1]).powi(2))
        .sqrt();
        d - self.size - other.size
    }

    /// Whether the whole object lies inside the unit field.
    pub fn inside_field(&self) -> bool {
        self.boundary_points()
            .iter()
            .all(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]))
            && self.center[0] - self.size >= 0.0
            && self.center[0] + self.size <= 1.0
            && self.center[1] - self.size >= 0.0
            && self.center[1] + self.size <= 1.0
    }
}
