//! Gaussian pyramid with 2x decimation.
//!
//! Each level is blurred with the separable binomial kernel `[1, 4, 6, 4, 1] / 16`
//! (replicated border) and every even pixel is kept, so pixel `i` on level
//! `l + 1` sits exactly on pixel `2i` of level `l`. Coordinates therefore map
//! between levels by a pure factor of two, which keeps warp conversion exact.

use super::image::Image;

#[derive(Clone, Debug)]
pub struct Pyramid {
    levels: Vec<Image>,
}

impl Pyramid {
    /// Builds up to `levels` levels, stopping early once a level would drop
    /// below `min_side` pixels on its short side.
    pub fn build(base: &Image, levels: usize, min_side: usize) -> Self {
        let mut out = vec![base.clone()];
        while out.len() < levels.max(1) {
            let prev = out.last().unwrap();
            let (w, h) = prev.dims();
            let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
            if nw.min(nh) < min_side {
                break;
            }
            let blurred = blur5(prev);
            out.push(Image::from_fn(nw, nh, |x, y| blurred.get(2 * x, 2 * y)));
        }
        Self { levels: out }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, l: usize) -> &Image {
        &self.levels[l]
    }

    /// Factor mapping level-0 coordinates onto level `l`.
    pub fn scale(l: usize) -> f64 {
        0.5f64.powi(l as i32)
    }
}

pub fn blur5(img: &Image) -> Image {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = img.dims();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horizontal = Image::from_fn(w, h, |x, y| {
        K.iter()
            .enumerate()
            .map(|(k, c)| c * img.get(clampi(x as isize + k as isize - 2, w), y))
            .sum()
    });
    Image::from_fn(w, h, |x, y| {
        K.iter()
            .enumerate()
            .map(|(k, c)| c * horizontal.get(x, clampi(y as isize + k as isize - 2, h)))
            .sum()
    })
}
