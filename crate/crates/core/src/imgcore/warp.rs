use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};

/// Warps whose linear part has `|det|` at or below this are rejected as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;

/// Six-parameter affine warp
/// `W(x, y; p) = (p1*x + p3*y + p5, p2*x + p4*y + p6)`.
///
/// The linear part is stored column-major (`p1, p2` is the image of the x axis,
/// `p3, p4` the image of the y axis) followed by the translation `p5, p6`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AffineWarp {
    pub p: [f64; 6],
}

impl Default for AffineWarp {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineWarp {
    pub const IDENTITY: AffineWarp = AffineWarp {
        p: [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    };

    pub const fn new(p: [f64; 6]) -> Self {
        Self { p }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::new([1.0, 0.0, 0.0, 1.0, tx, ty])
    }

    /// Counter-clockwise rotation by `theta` radians about the origin
    /// (in the x-right, y-down image frame this appears clockwise).
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new([c, s, -s, c, 0.0, 0.0])
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self::new([sx, 0.0, 0.0, sy, 0.0, 0.0])
    }

    /// Rotation by `theta` and uniform `scale` about `(cx, cy)`, then a shift of `(tx, ty)`.
    pub fn similarity_about(cx: f64, cy: f64, scale: f64, theta: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let a = scale * c;
        let b = scale * s;
        Self::new([
            a,
            b,
            -b,
            a,
            cx - a * cx + b * cy + tx,
            cy - b * cx - a * cy + ty,
        ])
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = &self.p;
        (p[0] * x + p[2] * y + p[4], p[1] * x + p[3] * y + p[5])
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.p[0] * self.p[3] - self.p[2] * self.p[1]
    }

    pub fn is_invertible(&self) -> bool {
        self.det().abs() > SINGULAR_TOLERANCE && self.p.iter().all(|v| v.is_finite())
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &AffineWarp) -> AffineWarp {
        let a = &self.p;
        let b = &other.p;
        AffineWarp::new([
            a[0] * b[0] + a[2] * b[1],
            a[1] * b[0] + a[3] * b[1],
            a[0] * b[2] + a[2] * b[3],
            a[1] * b[2] + a[3] * b[3],
            a[0] * b[4] + a[2] * b[5] + a[4],
            a[1] * b[4] + a[3] * b[5] + a[5],
        ])
    }

    pub fn invert(&self) -> Result<AffineWarp> {
        let det = self.det();
        if !self.is_invertible() {
            return Err(Error::SingularWarp { det });
        }
        let p = &self.p;
        let i0 = p[3] / det;
        let i1 = -p[1] / det;
        let i2 = -p[2] / det;
        let i3 = p[0] / det;
        Ok(AffineWarp::new([
            i0,
            i1,
            i2,
            i3,
            -(i0 * p[4] + i2 * p[5]),
            -(i1 * p[4] + i3 * p[5]),
        ]))
    }

    /// The linear part of this warp acting about `(cx, cy)`, i.e. the warp that
    /// fixes `(cx, cy)` and shares this warp's 2x2 matrix.
    pub fn linear_about(&self, cx: f64, cy: f64) -> AffineWarp {
        let p = &self.p;
        AffineWarp::new([
            p[0],
            p[1],
            p[2],
            p[3],
            cx - p[0] * cx - p[2] * cy,
            cy - p[1] * cx - p[3] * cy,
        ])
    }

    /// Conjugates by a uniform scaling: the same geometric warp expressed in
    /// coordinates multiplied by `s`.
    pub fn rescaled(&self, s: f64) -> AffineWarp {
        let mut p = self.p;
        p[4] *= s;
        p[5] *= s;
        AffineWarp::new(p)
    }

    /// Largest parameter-wise absolute difference.
    pub fn max_param_diff(&self, other: &AffineWarp) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest displacement between where `self` and `other` send any of `points`.
    pub fn max_displacement<'a>(
        &self,
        other: &AffineWarp,
        points: impl IntoIterator<Item = &'a (f64, f64)>,
    ) -> f64 {
        points
            .into_iter()
            .map(|&(x, y)| {
                let (ax, ay) = self.apply(x, y);
                let (bx, by) = other.apply(x, y);
                (ax - bx).hypot(ay - by)
            })
            .fold(0.0, f64::max)
    }
}

/// Resamples `src` through `warp`: output pixel `(x, y)` takes the bilinear
/// sample of `src` at `W(x, y)`.
pub fn warp_image(
    src: &Image,
    warp: &AffineWarp,
    out_width: usize,
    out_height: usize,
) -> Result<Image> {
    if !warp.is_invertible() {
        return Err(Error::SingularWarp { det: warp.det() });
    }
    if out_width == 0 || out_height == 0 {
        return Err(Error::InvalidArgument(format!(
            "output size {out_width}x{out_height}"
        )));
    }
    let p = warp.p;
    let mut data = Vec::with_capacity(out_width * out_height);
    for y in 0..out_height {
        let yf = y as f64;
        let mut sx = p[2] * yf + p[4];
        let mut sy = p[3] * yf + p[5];
        for _ in 0..out_width {
            data.push(src.sample_value(sx, sy));
            sx += p[0];
            sy += p[1];
        }
    }
    Image::new(out_width, out_height, data)
}
