use std::collections::VecDeque;

use crate::imgcore::{AffineWarp, Image};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

/// Per-pixel `|a(x) - b(W(x))|`, or `None` where the warped sample fell
/// outside `b`. Panics if `a` and `b` differ in size.
pub fn abs_difference(a: &Image, b: &Image, w: &AffineWarp) -> Vec<Option<f64>> {
    assert_eq!(a.dims(), b.dims(), "difference of differently sized images");
    let (width, height) = a.dims();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = w.apply(x as f64, y as f64);
            let s = b.sample(u, v);
            out.push(s.in_bounds.then(|| (a.get(x, y) - s.value).abs()));
        }
    }
    out
}

/// Background subtraction: set where `|a(x) - b(W(x))| > threshold`;
/// pixels whose warped sample leaves `b` are forced off.
pub fn difference_mask(a: &Image, b: &Image, w: &AffineWarp, threshold: f64) -> BinaryMask {
    threshold_differences(&abs_difference(a, b, w), a.width(), a.height(), threshold)
}

pub(crate) fn threshold_differences(
    diff: &[Option<f64>],
    width: usize,
    height: usize,
    threshold: f64,
) -> BinaryMask {
    BinaryMask {
        width,
        height,
        bits: diff
            .iter()
            .map(|d| matches!(d, Some(v) if *v > threshold))
            .collect(),
    }
}

/// Morphological opening with a `(2r+1)²` square structuring element.
///
/// Erosion treats the outside of the mask as unset, so the result is the
/// exact planar opening of the set and the operation is idempotent.
pub fn morphological_clean(m: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return m.clone();
    }
    dilate(&erode(m, radius), radius)
}

/// Morphological closing (dilation then erosion), used to merge fragments of a
/// textured target whose interior differences are patchy.
pub fn morphological_close(m: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return m.clone();
    }
    erode(&dilate(m, radius), radius)
}

fn erode(m: &BinaryMask, r: usize) -> BinaryMask {
    // Separable: a pixel survives iff every pixel in its row window and then
    // column window is set.
    let h = sweep(m, r, true, true);
    sweep(&h, r, false, true)
}

fn dilate(m: &BinaryMask, r: usize) -> BinaryMask {
    let h = sweep(m, r, true, false);
    sweep(&h, r, false, false)
}

/// One 1-D min (`all = true`) or max filter pass along rows or columns,
/// using running counts so the cost is independent of `r`.
fn sweep(m: &BinaryMask, r: usize, horizontal: bool, all: bool) -> BinaryMask {
    let (w, h) = (m.width, m.height);
    let (len, lines) = if horizontal { (w, h) } else { (h, w) };
    let idx = |line: usize, i: usize| {
        if horizontal {
            line * w + i
        } else {
            i * w + line
        }
    };
    let mut out = BinaryMask::new(w, h);
    let window = 2 * r + 1;
    for line in 0..lines {
        // count of set pixels in [i - r, i + r] clipped to the line
        let mut count = 0usize;
        for i in 0..r.min(len) {
            count += m.bits[idx(line, i)] as usize;
        }
        for i in 0..len {
            if i + r < len {
                count += m.bits[idx(line, i + r)] as usize;
            }
            if i > r {
                count -= m.bits[idx(line, i - r - 1)] as usize;
            }
            out.bits[idx(line, i)] = if all {
                // out-of-range positions count as unset
                count == window
            } else {
                count > 0
            };
        }
    }
    out
}

/// One 8-connected component of a mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    pub bounds: (usize, usize, usize, usize),
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// All 8-connected components in raster-scan order of their first pixel.
pub fn connected_components(m: &BinaryMask) -> Vec<Component> {
    let (w, h) = (m.width, m.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !m.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            pixels.push((x, y));
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if m.bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        out.push(Component {
            bounds: (x0, y0, x1, y1),
            pixels,
        });
    }
    out
}

/// The component with the largest area if that area reaches `min_area`.
/// Equal areas resolve to the component found first in raster order.
pub fn largest_component(m: &BinaryMask, min_area: usize) -> Option<Component> {
    let mut best: Option<Component> = None;
    for c in connected_components(m) {
        if best.as_ref().is_none_or(|b| c.area() > b.area()) {
            best = Some(c);
        }
    }
    best.filter(|c| c.area() >= min_area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            x >= x0 && x < x0 + side && y >= y0 && y < y0 + side
        })
    }

    /// Brute-force opening straight from the definition: union of every
    /// placement of the structuring element that fits inside the set.
    fn opening_oracle(m: &BinaryMask, r: usize) -> BinaryMask {
        let (w, h) = (m.width(), m.height());
        let r = r as isize;
        let mut out = BinaryMask::new(w, h);
        for cy in 0..h as isize {
            for cx in 0..w as isize {
                let fits = (-r..=r).all(|dy| {
                    (-r..=r).all(|dx| {
                        let (x, y) = (cx + dx, cy + dy);
                        x >= 0
                            && y >= 0
                            && x < w as isize
                            && y < h as isize
                            && m.get(x as usize, y as usize)
                    })
                });
                if fits {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            out.set((cx + dx) as usize, (cy + dy) as usize, true);
                        }
                    }
                }
            }
        }
        out
    }

    /// Flood fill with an explicit stack, independent of the BFS labeler.
    fn component_areas_oracle(m: &BinaryMask) -> Vec<usize> {
        let (w, h) = (m.width(), m.height());
        let mut label = vec![0usize; w * h];
        let mut areas = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !m.get(x, y) || label[y * w + x] != 0 {
                    continue;
                }
                areas.push(0);
                let id = areas.len();
                let mut stack = vec![(x, y)];
                label[y * w + x] = id;
                while let Some((px, py)) = stack.pop() {
                    areas[id - 1] += 1;
                    for ny in py.saturating_sub(1)..=(py + 1).min(h - 1) {
                        for nx in px.saturating_sub(1)..=(px + 1).min(w - 1) {
                            if m.get(nx, ny) && label[ny * w + nx] == 0 {
                                label[ny * w + nx] = id;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
        areas
    }

    #[test]
    fn identical_images_give_empty_mask() {
        let img = Image::from_fn(20, 20, |x, y| ((x * y) % 7) as f64 / 7.0);
        assert!(difference_mask(&img, &img, &AffineWarp::IDENTITY, 0.05).is_empty());
    }

    #[test]
    fn planted_square_is_found() {
        let a = Image::filled(40, 40, 0.3);
        let b = Image::from_fn(40, 40, |x, y| {
            if (12..22).contains(&x) && (5..15).contains(&y) {
                0.9
            } else {
                0.3
            }
        });
        let m = difference_mask(&a, &b, &AffineWarp::IDENTITY, 0.12);
        let truth = square(40, 40, 12, 5, 10);
        let inter = (0..40)
            .flat_map(|y| (0..40).map(move |x| (x, y)))
            .filter(|&(x, y)| m.get(x, y) && truth.get(x, y))
            .count();
        let union = (0..40)
            .flat_map(|y| (0..40).map(move |x| (x, y)))
            .filter(|&(x, y)| m.get(x, y) || truth.get(x, y))
            .count();
        assert!(inter as f64 / union as f64 >= 0.9);
    }

    #[test]
    fn threshold_one_never_fires() {
        let a = Image::filled(10, 10, 0.0);
        let b = Image::filled(10, 10, 1.0);
        assert!(difference_mask(&a, &b, &AffineWarp::IDENTITY, 1.0).is_empty());
    }

    #[test]
    fn out_of_bounds_samples_are_off() {
        let a = Image::filled(10, 10, 0.0);
        let b = Image::filled(10, 10, 1.0);
        let m = difference_mask(&a, &b, &AffineWarp::translation(5.0, 0.0), 0.5);
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(m.get(x, y), x + 5 <= 9);
            }
        }
    }

    #[test]
    fn opening_removes_isolated_pixels() {
        let mut m = BinaryMask::new(15, 15);
        m.set(7, 7, true);
        m.set(2, 11, true);
        assert!(morphological_clean(&m, 1).is_empty());
    }

    #[test]
    fn opening_keeps_solid_square() {
        let m = square(40, 40, 5, 8, 20);
        assert_eq!(morphological_clean(&m, 1), m);
        let edge = square(30, 30, 0, 0, 20);
        assert_eq!(morphological_clean(&edge, 1), edge);
    }

    #[test]
    fn opening_strips_scattered_noise_from_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = square(64, 64, 20, 20, 20);
        let mut m = truth.clone();
        let mut added = 0;
        while added < 30 {
            let (x, y): (usize, usize) = (rng.random_range(0..64), rng.random_range(0..64));
            // isolated: no set pixel in the 8-neighbourhood (including the square)
            let isolated = (y.saturating_sub(1)..=(y + 1).min(63))
                .all(|ny| (x.saturating_sub(1)..=(x + 1).min(63)).all(|nx| !m.get(nx, ny)));
            if isolated {
                m.set(x, y, true);
                added += 1;
            }
        }
        assert_eq!(opening_oracle(&m, 1), truth);
        assert_eq!(morphological_clean(&m, 1), truth);
    }

    #[test]
    fn largest_component_cases() {
        assert!(largest_component(&BinaryMask::new(30, 30), 100).is_none());

        // 5x10 = 50 and 20x20 = 400
        let m = BinaryMask::from_fn(60, 60, |x, y| {
            (x < 5 && y < 10) || ((30..50).contains(&x) && (30..50).contains(&y))
        });
        let c = largest_component(&m, 100).unwrap();
        assert_eq!(c.area(), 400);
        assert_eq!(c.bounds, (30, 30, 49, 49));
        let mut areas = component_areas_oracle(&m);
        areas.sort();
        assert_eq!(areas, vec![50, 400]);

        // 9x11 = 99 just under the threshold
        let m = BinaryMask::from_fn(30, 30, |x, y| (2..11).contains(&x) && (3..14).contains(&y));
        assert_eq!(component_areas_oracle(&m), vec![99]);
        assert!(largest_component(&m, 100).is_none());
        assert_eq!(largest_component(&m, 99).unwrap().area(), 99);
    }

    #[test]
    fn diagonal_pixels_connect() {
        let m = BinaryMask::from_fn(5, 5, |x, y| x == y);
        assert_eq!(connected_components(&m).len(), 1);
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (4usize..24, 4usize..24, any::<u64>(), 0.2f64..0.8).prop_map(|(w, h, seed, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p))
        })
    }

    proptest! {
        #[test]
        fn opening_is_idempotent(m in arb_mask(), r in 1usize..3) {
            let once = morphological_clean(&m, r);
            prop_assert_eq!(morphological_clean(&once, r), once);
        }

        #[test]
        fn opening_matches_definition(m in arb_mask(), r in 1usize..3) {
            prop_assert_eq!(morphological_clean(&m, r), opening_oracle(&m, r));
        }

        #[test]
        fn components_only_cover_set_pixels(m in arb_mask()) {
            let comps = connected_components(&m);
            let total: usize = comps.iter().map(|c| c.area()).sum();
            prop_assert_eq!(total, m.count());
            for c in &comps {
                for &(x, y) in &c.pixels {
                    prop_assert!(m.get(x, y));
                }
            }
            let mut a: Vec<usize> = comps.iter().map(|c| c.area()).collect();
            let mut b = component_areas_oracle(&m);
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
