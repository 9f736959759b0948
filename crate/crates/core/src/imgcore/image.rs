use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel raster, row-major, one `f64` per pixel.
///
/// Loaders and renderers produce intensities in `[0, 1]`; derived rasters such
/// as gradients may leave that range but are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Result of a sub-pixel lookup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub value: f64,
    /// False when the requested position lay outside `[0, w-1] x [0, h-1]`
    /// and the value was taken from the clamped border.
    pub in_bounds: bool,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// True if `(x, y)` lies inside the sampling domain `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Bilinear interpolation with clamp-to-edge outside the domain.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Sample {
        let in_bounds = self.contains(x, y);
        Sample {
            value: self.sample_value(x, y),
            in_bounds,
        }
    }

    /// Same as [`Image::sample`] without the bounds flag.
    #[inline]
    pub fn sample_value(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        // NaN falls through to 0 via the clamp on the integer index.
        let xc = x.clamp(0.0, max_x);
        let yc = y.clamp(0.0, max_y);
        let x0 = xc.floor();
        let y0 = yc.floor();
        let fx = xc - x0;
        let fy = yc - y0;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        let top = self.data[row0 + x0] + fx * (self.data[row0 + x1] - self.data[row0 + x0]);
        let bottom = self.data[row1 + x0] + fx * (self.data[row1 + x1] - self.data[row1 + x0]);
        top + fy * (bottom - top)
    }

    /// Bilinear value together with its partial derivatives `(v, dv/dx, dv/dy)`.
    ///
    /// The interpolant is only piecewise smooth; on a cell boundary the two
    /// one-sided slopes are averaged. Derivatives vanish along a clamped axis.
    #[inline]
    pub fn sample_with_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let xc = x.clamp(0.0, max_x);
        let yc = y.clamp(0.0, max_y);
        let x0f = xc.floor().min((max_x - 1.0).max(0.0));
        let y0f = yc.floor().min((max_y - 1.0).max(0.0));
        let fx = xc - x0f;
        let fy = yc - y0f;
        let (x0, y0) = (x0f as usize, y0f as usize);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let at = |xx: usize, yy: usize| self.data[yy * self.width + xx];
        let (a, b, c, d) = (at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1));
        let top = a + fx * (b - a);
        let bottom = c + fx * (d - c);
        let value = top + fy * (bottom - top);

        let slope_x = |xx: usize, fy: f64| {
            // d/dx of the cell starting at column xx, at row fraction fy
            let t = at(xx + 1, y0) - at(xx, y0);
            let u = at(xx + 1, y1) - at(xx, y1);
            t + fy * (u - t)
        };
        let slope_y = |yy: usize, fx: f64| {
            let t = at(x0, yy + 1) - at(x0, yy);
            let u = at(x1, yy + 1) - at(x1, yy);
            t + fx * (u - t)
        };
        let gx = if x < 0.0 || x > max_x || self.width < 2 {
            0.0
        } else if fx == 0.0 && x0 > 0 {
            0.5 * (slope_x(x0 - 1, fy) + slope_x(x0, fy))
        } else if fx == 1.0 && x1 + 1 < self.width {
            0.5 * (slope_x(x0, fy) + slope_x(x1, fy))
        } else {
            slope_x(x0, fy)
        };
        let gy = if y < 0.0 || y > max_y || self.height < 2 {
            0.0
        } else if fy == 0.0 && y0 > 0 {
            0.5 * (slope_y(y0 - 1, fx) + slope_y(y0, fx))
        } else if fy == 1.0 && y1 + 1 < self.height {
            0.5 * (slope_y(y0, fx) + slope_y(y1, fx))
        } else {
            slope_y(y0, fx)
        };
        (value, gx, gy)
    }

    /// Catmull-Rom bicubic value and its exact partial derivatives
    /// `(v, dv/dx, dv/dy)`, with clamp-to-edge taps. The interpolant is C1,
    /// so the derivatives are continuous across cell boundaries.
    pub fn sample_cubic_with_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let xc = x.clamp(0.0, max_x);
        let yc = y.clamp(0.0, max_y);
        let x0 = xc.floor();
        let y0 = yc.floor();
        let (wx, dx) = catmull_rom(xc - x0);
        let (wy, dy) = catmull_rom(yc - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let col = |k: isize| (x0 + k - 1).clamp(0, self.width as isize - 1) as usize;
        let cols = [col(0), col(1), col(2), col(3)];
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for (j, (wyj, dyj)) in wy.iter().zip(&dy).enumerate() {
            let row =
                (y0 + j as isize - 1).clamp(0, self.height as isize - 1) as usize * self.width;
            let (mut r, mut rd) = (0.0, 0.0);
            for (i, &c) in cols.iter().enumerate() {
                let p = self.data[row + c];
                r += wx[i] * p;
                rd += dx[i] * p;
            }
            v += wyj * r;
            gx += wyj * rd;
            gy += dyj * r;
        }
        if x < 0.0 || x > max_x {
            gx = 0.0;
        }
        if y < 0.0 || y > max_y {
            gy = 0.0;
        }
        (v, gx, gy)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Largest absolute per-pixel difference; panics on mismatched dimensions.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.dims(), other.dims(), "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy of the `w x h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        Ok(Image::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    pub(crate) fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }
}

/// Interpolant used where sub-pixel values and their derivatives are needed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Bilinear,
    /// Catmull-Rom; less biased than bilinear on fine texture.
    #[default]
    Cubic,
}

impl Interpolation {
    #[inline]
    pub fn value(self, img: &Image, x: f64, y: f64) -> f64 {
        match self {
            Interpolation::Bilinear => img.sample_value(x, y),
            Interpolation::Cubic => img.sample_cubic_with_gradient(x, y).0,
        }
    }

    #[inline]
    pub fn with_gradient(self, img: &Image, x: f64, y: f64) -> (f64, f64, f64) {
        match self {
            Interpolation::Bilinear => img.sample_with_gradient(x, y),
            Interpolation::Cubic => img.sample_cubic_with_gradient(x, y),
        }
    }
}

/// Catmull-Rom weights of the taps at offsets -1..=2 for fraction `t`, and
/// their derivatives with respect to `t`.
#[inline]
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

/// Image gradients `(dI/dx, dI/dy)`: central differences in the interior,
/// one-sided differences on the border rows and columns.
pub fn gradient(img: &Image) -> Result<(Image, Image)> {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let d = img.data();
    for y in 0..h {
        let row = y * w;
        gx[row] = d[row + 1] - d[row];
        for x in 1..w - 1 {
            gx[row + x] = 0.5 * (d[row + x + 1] - d[row + x - 1]);
        }
        gx[row + w - 1] = d[row + w - 1] - d[row + w - 2];
    }
    for x in 0..w {
        gy[x] = d[w + x] - d[x];
        gy[(h - 1) * w + x] = d[(h - 1) * w + x] - d[(h - 2) * w + x];
    }
    for y in 1..h - 1 {
        for x in 0..w {
            gy[y * w + x] = 0.5 * (d[(y + 1) * w + x] - d[(y - 1) * w + x]);
        }
    }
    Ok((
        Image {
            width: w,
            height: h,
            data: gx,
        },
        Image {
            width: w,
            height: h,
            data: gy,
        },
    ))
}
