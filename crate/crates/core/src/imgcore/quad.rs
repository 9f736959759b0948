use serde::{Deserialize, Serialize};

use super::warp::AffineWarp;
use crate::error::{Error, Result};

/// Quadrilateral region of interest with sub-pixel corners in winding order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub corners: [(f64, f64); 4],
}

/// Axis-aligned box `x, y, w, h` with `(x, y)` the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    /// Overlap of two boxes, absent when they only touch or are disjoint.
    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x = self.x.max(other.x);
        let y = self.y.max(other.y);
        let w = (self.x + self.w).min(other.x + other.w) - x;
        let h = (self.y + self.h).min(other.y + other.h) - y;
        (w > 0.0 && h > 0.0).then_some(BoundingBox { x, y, w, h })
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        inter / (self.area() + other.area() - inter)
    }
}

impl Quad {
    /// Validates that the corners form a simple polygon of positive area.
    pub fn new(corners: [(f64, f64); 4]) -> Result<Self> {
        let q = Self { corners };
        q.validate()?;
        Ok(q)
    }

    pub fn from_box(b: &BoundingBox) -> Self {
        Self {
            corners: [
                (b.x, b.y),
                (b.x + b.w, b.y),
                (b.x + b.w, b.y + b.h),
                (b.x, b.y + b.h),
            ],
        }
    }

    /// Axis-aligned square of side `side` centred on `(cx, cy)`.
    pub fn square(cx: f64, cy: f64, side: f64) -> Self {
        let h = 0.5 * side;
        Self::from_box(&BoundingBox {
            x: cx - h,
            y: cy - h,
            w: side,
            h: side,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .corners
            .iter()
            .any(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::DegenerateRegion { area: f64::NAN });
        }
        let area = self.area();
        if area <= 0.0 || self.is_self_intersecting() {
            return Err(Error::DegenerateRegion { area });
        }
        Ok(())
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        let c = &self.corners;
        let mut s = 0.0;
        for i in 0..4 {
            let (x0, y0) = c[i];
            let (x1, y1) = c[(i + 1) % 4];
            s += x0 * y1 - x1 * y0;
        }
        0.5 * s.abs()
    }

    fn is_self_intersecting(&self) -> bool {
        let c = &self.corners;
        segments_cross(c[0], c[1], c[2], c[3]) || segments_cross(c[1], c[2], c[3], c[0])
    }

    pub fn centroid(&self) -> (f64, f64) {
        let (sx, sy) = self
            .corners
            .iter()
            .fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x, ay + y));
        (0.25 * sx, 0.25 * sy)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut x0 = f64::INFINITY;
        let mut y0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for &(x, y) in &self.corners {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        BoundingBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    /// Centre and side of the smallest axis-aligned square sharing the
    /// bounding box's centre that covers the quad.
    pub fn bounding_square(&self) -> ((f64, f64), f64) {
        let b = self.bounding_box();
        (b.center(), b.w.max(b.h))
    }

    pub fn warped(&self, w: &AffineWarp) -> Quad {
        let mut corners = self.corners;
        for c in &mut corners {
            *c = w.apply(c.0, c.1);
        }
        Quad { corners }
    }

    pub fn scaled(&self, s: f64) -> Quad {
        let mut corners = self.corners;
        for c in &mut corners {
            *c = (c.0 * s, c.1 * s);
        }
        Quad { corners }
    }

    /// Point-in-polygon by crossing number; points on the boundary may go either way.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let c = &self.corners;
        let mut inside = false;
        let mut j = 3;
        for i in 0..4 {
            let (xi, yi) = c[i];
            let (xj, yj) = c[j];
            if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Integer pixel centres inside the quad, in row-major order, clipped to
    /// `[0, width) x [0, height)`.
    pub fn pixels(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let b = self.bounding_box();
        let x0 = b.x.ceil().max(0.0) as usize;
        let y0 = b.y.ceil().max(0.0) as usize;
        let x1 = (b.x + b.w).floor().min(width as f64 - 1.0);
        let y1 = (b.y + b.h).floor().min(height as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            return Vec::new();
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(x as f64, y as f64) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Integer lattice points inside the quad with no clipping.
    pub fn lattice_points(&self) -> Vec<(f64, f64)> {
        let b = self.bounding_box();
        let mut out = Vec::new();
        let mut y = b.y.ceil();
        while y <= b.y + b.h {
            let mut x = b.x.ceil();
            while x <= b.x + b.w {
                if self.contains(x, y) {
                    out.push((x, y));
                }
                x += 1.0;
            }
            y += 1.0;
        }
        out
    }
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Proper crossing of segments `ab` and `cd`.
fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bowtie_and_flat() {
        assert!(Quad::new([(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(Quad::new([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]).is_err());
        assert!(Quad::new([(0.0, 0.0), (4.0, 0.0), (4.0, 3.0), (0.0, 3.0)]).is_ok());
    }

    #[test]
    fn area_and_pixels_of_box() {
        let q = Quad::from_box(&BoundingBox {
            x: 2.0,
            y: 3.0,
            w: 4.0,
            h: 2.0,
        });
        assert_eq!(q.area(), 8.0);
        // interior lattice points strictly inside: x in 3..=5, y = 4 plus
        // boundary points decided by the crossing rule
        let px = q.pixels(100, 100);
        assert!(px.contains(&(4, 4)));
        assert!(!px.contains(&(7, 4)));
    }

    #[test]
    fn iou_basics() {
        let a = BoundingBox {
            x: 0.0,
            y: 0.0,
            w: 10.0,
            h: 10.0,
        };
        let b = BoundingBox {
            x: 5.0,
            y: 0.0,
            w: 10.0,
            h: 10.0,
        };
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn rotated_square_contains_center() {
        let w = AffineWarp::similarity_about(5.0, 5.0, 1.0, 0.7, 0.0, 0.0);
        let q = Quad::square(5.0, 5.0, 4.0).warped(&w);
        assert!(q.contains(5.0, 5.0));
        assert!(!q.contains(8.0, 8.0));
        assert!((q.area() - 16.0).abs() < 1e-9);
    }
}
