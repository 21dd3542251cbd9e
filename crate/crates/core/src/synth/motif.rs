use std::f32::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Planted tissue element classes. Only `TumorBlob` is a lesion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotifClass {
    TumorBlob,
    LymphocyteDot,
    CollagenStripe,
    LumenHole,
    Background,
}

impl MotifClass {
    pub const PLANTED: [MotifClass; 4] = [
        MotifClass::TumorBlob,
        MotifClass::LymphocyteDot,
        MotifClass::CollagenStripe,
        MotifClass::LumenHole,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MotifClass::TumorBlob => "tumor_blob",
            MotifClass::LymphocyteDot => "lymphocyte_dot",
            MotifClass::CollagenStripe => "collagen_stripe",
            MotifClass::LumenHole => "lumen_hole",
            MotifClass::Background => "background",
        }
    }

    pub fn is_lesion(self) -> bool {
        self == MotifClass::TumorBlob
    }
}

impl fmt::Display for MotifClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Axis-aligned pixel box; `y`/`x` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub y: i64,
    pub x: i64,
    pub h: i64,
    pub w: i64,
}

impl BBox {
    pub fn intersects(&self, other: &BBox) -> bool {
        self.y < other.y + other.h
            && other.y < self.y + self.h
            && self.x < other.x + other.w
            && other.x < self.x + self.w
    }

    pub fn contains_point(&self, y: f32, x: f32) -> bool {
        y >= self.y as f32 && y < (self.y + self.h) as f32 && x >= self.x as f32 && x < (self.x + self.w) as f32
    }

    pub fn area(&self) -> i64 {
        self.h.max(0) * self.w.max(0)
    }
}

/// Geometry of a planted motif, relative to its center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Radius-modulated disc: `r(θ) = radius·(1 − depth·(1 + sin(lobes·θ + phase))/2)`.
    /// Always inside the disc of `radius`.
    Blob {
        radius: f32,
        depth: f32,
        lobes: u32,
        phase: f32,
    },
    Disc {
        radius: f32,
    },
    /// Sinusoidal band along `angle`, `length` long.
    Stripe {
        length: f32,
        angle: f32,
        amplitude: f32,
        wavelength: f32,
        half_width: f32,
        phase: f32,
    },
    Ellipse {
        semi_major: f32,
        semi_minor: f32,
        angle: f32,
    },
}

impl Shape {
    /// Radius of a disc about the center enclosing the whole shape.
    pub fn bounding_radius(&self) -> f32 {
        match *self {
            Shape::Blob { radius, .. } | Shape::Disc { radius } => radius,
            Shape::Stripe {
                length,
                amplitude,
                half_width,
                ..
            } => (length / 2.0).hypot(amplitude + half_width),
            Shape::Ellipse { semi_major, .. } => semi_major,
        }
    }

    /// Membership of the offset `(dy, dx)` from the center.
    pub fn contains(&self, dy: f32, dx: f32) -> bool {
        match *self {
            Shape::Blob {
                radius,
                depth,
                lobes,
                phase,
            } => {
                let d2 = dy * dy + dx * dx;
                if d2 >= radius * radius {
                    return false;
                }
                let theta = dy.atan2(dx);
                let r = radius * (1.0 - depth * (1.0 + (lobes as f32 * theta + phase).sin()) / 2.0);
                d2 < r * r
            }
            Shape::Disc { radius } => dy * dy + dx * dx < radius * radius,
            Shape::Stripe {
                length,
                angle,
                amplitude,
                wavelength,
                half_width,
                phase,
            } => {
                let (s, c) = angle.sin_cos();
                let along = dx * c + dy * s;
                let across = -dx * s + dy * c;
                if along.abs() > length / 2.0 {
                    return false;
                }
                let center = amplitude * (2.0 * PI * along / wavelength + phase).sin();
                (across - center).abs() < half_width
            }
            Shape::Ellipse {
                semi_major,
                semi_minor,
                angle,
            } => {
                let (s, c) = angle.sin_cos();
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / semi_major).powi(2) + (v / semi_minor).powi(2) < 1.0
            }
        }
    }
}

/// One inventory entry of an annotated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    pub class: MotifClass,
    /// Center `(y, x)` in scene pixels.
    pub center: (f32, f32),
    pub bbox: BBox,
    pub shape: Shape,
}

impl Motif {
    pub fn new(class: MotifClass, center: (f32, f32), shape: Shape) -> Self {
        let r = shape.bounding_radius();
        let y0 = (center.0 - r).floor() as i64;
        let x0 = (center.1 - r).floor() as i64;
        let y1 = (center.0 + r).ceil() as i64 + 1;
        let x1 = (center.1 + r).ceil() as i64 + 1;
        Motif {
            class,
            center,
            bbox: BBox {
                y: y0,
                x: x0,
                h: y1 - y0,
                w: x1 - x0,
            },
            shape,
        }
    }

    /// Whether pixel `(y, x)` (its integer grid position) is covered.
    pub fn covers(&self, y: i64, x: i64) -> bool {
        self.shape.contains(y as f32 - self.center.0, x as f32 - self.center.1)
    }

    /// Tight box of covered pixels within `[0, h) x [0, w)`.
    pub fn clip_bbox(&mut self, height: usize, width: usize) {
        let mut y0 = i64::MAX;
        let mut x0 = i64::MAX;
        let mut y1 = i64::MIN;
        let mut x1 = i64::MIN;
        for y in self.bbox.y.max(0)..(self.bbox.y + self.bbox.h).min(height as i64) {
            for x in self.bbox.x.max(0)..(self.bbox.x + self.bbox.w).min(width as i64) {
                if self.covers(y, x) {
                    y0 = y0.min(y);
                    x0 = x0.min(x);
                    y1 = y1.max(y);
                    x1 = x1.max(x);
                }
            }
        }
        self.bbox = if y0 == i64::MAX {
            BBox {
                y: self.center.0 as i64,
                x: self.center.1 as i64,
                h: 0,
                w: 0,
            }
        } else {
            BBox {
                y: y0,
                x: x0,
                h: y1 - y0 + 1,
                w: x1 - x0 + 1,
            }
        };
    }

    pub fn distance_to(&self, y: f32, x: f32) -> f32 {
        (self.center.0 - y).hypot(self.center.1 - x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_stays_inside_its_disc() {
        let s = Shape::Blob {
            radius: 10.0,
            depth: 0.3,
            lobes: 4,
            phase: 0.7,
        };
        for dy in -12..=12 {
            for dx in -12..=12 {
                if s.contains(dy as f32, dx as f32) {
                    assert!(((dy * dy + dx * dx) as f32) < 100.0);
                }
            }
        }
        assert!(s.contains(0.0, 0.0));
    }

    #[test]
    fn bbox_intersection() {
        let a = BBox { y: 0, x: 0, h: 4, w: 4 };
        assert!(a.intersects(&BBox { y: 3, x: 3, h: 2, w: 2 }));
        assert!(!a.intersects(&BBox { y: 4, x: 0, h: 2, w: 2 }));
    }

    #[test]
    fn clipped_bbox_is_tight() {
        let mut m = Motif::new(MotifClass::LymphocyteDot, (10.0, 10.0), Shape::Disc { radius: 2.0 });
        m.clip_bbox(100, 100);
        // integer points with dy²+dx² < 4: offsets -1..=1
        assert_eq!(m.bbox, BBox { y: 9, x: 9, h: 3, w: 3 });
    }
}
