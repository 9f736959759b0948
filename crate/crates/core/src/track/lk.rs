//! Forwards-additive Lucas-Kanade alignment.
//!
//! The residual is `T(x) - I(W(x; p))` summed over the integer pixels of the
//! region in template coordinates. Gauss-Newton steps are solved in the
//! normalized frame of the region (see [`crate::motion`]) and guarded by a
//! step-halving line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{AffineWarp, Image, Interpolation, Pyramid, Quad};
use crate::motion::{Frame, MotionModel, NormalEquations};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LkConfig {
    pub model: MotionModel,
    /// Iteration cap per pyramid level.
    pub max_iterations: usize,
    pub pyramid_levels: usize,
    /// Convergence threshold on the largest region-corner displacement of a step, in pixels.
    pub corner_tolerance: f64,
    /// Largest final mean squared residual still reported as converged.
    pub residual_cap: f64,
    pub max_halvings: usize,
    /// Levels whose region holds fewer pixels than this are skipped.
    pub min_level_pixels: usize,
    /// Interpolant for the warped target and its gradient.
    pub interpolation: Interpolation,
}

impl Default for LkConfig {
    fn default() -> Self {
        Self {
            model: MotionModel::Affine,
            max_iterations: 30,
            pyramid_levels: 3,
            corner_tolerance: 0.05,
            residual_cap: 0.01,
            max_halvings: 8,
            min_level_pixels: 64,
            interpolation: Interpolation::Cubic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LkResult {
    pub warp: AffineWarp,
    pub converged: bool,
    pub iterations: usize,
    /// Mean squared residual at `warp` on the finest level.
    pub residual: f64,
}

struct Problem<'a> {
    target: &'a Image,
    points: Vec<(f64, f64)>,
    normalized: Vec<(f64, f64)>,
    values: Vec<f64>,
    frame: Frame,
    model: MotionModel,
    interp: Interpolation,
}

impl<'a> Problem<'a> {
    fn new(
        template: &Image,
        target: &'a Image,
        region: &Quad,
        model: MotionModel,
        interp: Interpolation,
    ) -> Self {
        let (w, h) = template.dims();
        let points: Vec<(f64, f64)> = region
            .pixels(w, h)
            .into_iter()
            .map(|(x, y)| (x as f64, y as f64))
            .collect();
        let values = points
            .iter()
            .map(|&(x, y)| template.get(x as usize, y as usize))
            .collect();
        let frame = Frame::from_points(points.iter());
        let normalized = points.iter().map(|&(x, y)| frame.normalize(x, y)).collect();
        Self {
            target,
            points,
            normalized,
            values,
            frame,
            model,
            interp,
        }
    }

    /// Mean squared residual over the points that land inside the target.
    fn mse(&self, w: &AffineWarp) -> f64 {
        let mut sse = 0.0;
        let mut n = 0usize;
        for (&(x, y), &t) in self.points.iter().zip(&self.values) {
            let (u, v) = w.apply(x, y);
            if self.target.contains(u, v) {
                let r = t - self.interp.value(self.target, u, v);
                sse += r * r;
                n += 1;
            }
        }
        if n == 0 {
            f64::INFINITY
        } else {
            sse / n as f64
        }
    }

    fn normal_equations(&self, w: &AffineWarp) -> NormalEquations {
        let mut ne = NormalEquations::new(self.model.dof());
        let mut row = [0.0; 6];
        for ((&(x, y), &(xn, yn)), &t) in self.points.iter().zip(&self.normalized).zip(&self.values)
        {
            let (u, v) = w.apply(x, y);
            if !self.target.contains(u, v) {
                continue;
            }
            let (value, gx, gy) = self.interp.with_gradient(self.target, u, v);
            self.model
                .jacobian_row(xn, yn, gx, gy, self.frame.s, &mut row);
            ne.add(&row, t - value);
        }
        ne
    }

    fn step(&self, w: &AffineWarp) -> Result<(AffineWarp, f64)> {
        let ne = self.normal_equations(w);
        let dq = ne.solve()?;
        let q = self.frame.to_normalized(w);
        let next = self
            .frame
            .from_normalized(&self.model.apply_increment(&q, &dq, 1.0));
        Ok((next, ne.mse()))
    }
}

/// One Gauss-Newton update. Returns the parameter increment in the absolute
/// parameterization together with the pre-update mean squared residual.
pub fn lk_step(
    template: &Image,
    target: &Image,
    region: &Quad,
    p: &AffineWarp,
    model: MotionModel,
    interp: Interpolation,
) -> Result<([f64; 6], f64)> {
    region.validate()?;
    if !p.is_invertible() {
        return Err(Error::SingularWarp { det: p.det() });
    }
    let problem = Problem::new(template, target, region, model, interp);
    let (next, mse) = problem.step(p)?;
    let mut delta = [0.0; 6];
    for (d, (a, b)) in delta.iter_mut().zip(next.p.iter().zip(&p.p)) {
        *d = a - b;
    }
    Ok((delta, mse))
}

/// Steepest-descent images `∇I(W(x;p)) · ∂W/∂p` over the region's pixels, one
/// row of six values per pixel, in the absolute parameter layout.
pub fn steepest_descent_images(
    target: &Image,
    region: &Quad,
    p: &AffineWarp,
    interp: Interpolation,
) -> Vec<[f64; 6]> {
    let (w, h) = target.dims();
    region
        .pixels(w, h)
        .into_iter()
        .map(|(x, y)| {
            let (x, y) = (x as f64, y as f64);
            let (u, v) = p.apply(x, y);
            let (_, gx, gy) = interp.with_gradient(target, u, v);
            [gx * x, gy * x, gx * y, gy * y, gx, gy]
        })
        .collect()
}

/// Coarse-to-fine iterative alignment of `target` to `template` over `region`.
pub fn lk_align(
    template: &Image,
    target: &Image,
    region: &Quad,
    p0: &AffineWarp,
    cfg: &LkConfig,
) -> Result<LkResult> {
    let levels = cfg.pyramid_levels.max(1);
    let tp = Pyramid::build(template, levels, 8);
    let ip = Pyramid::build(target, levels, 8);
    lk_align_pyramids(&tp, &ip, region, p0, cfg)
}

pub(crate) fn lk_align_pyramids(
    template: &Pyramid,
    target: &Pyramid,
    region: &Quad,
    p0: &AffineWarp,
    cfg: &LkConfig,
) -> Result<LkResult> {
    region.validate()?;
    if !p0.is_invertible() {
        return Err(Error::SingularWarp { det: p0.det() });
    }
    if template.level(0).dims() != target.level(0).dims() {
        // Different sizes are fine for LK but the pyramids must pair up.
        log::trace!("template and target differ in size");
    }
    let levels = template.len().min(target.len());
    let mut warp = *p0;
    let mut iterations = 0;
    let mut converged = false;
    for l in (0..levels).rev() {
        let s = Pyramid::scale(l);
        let level_region = region.scaled(s);
        let problem = Problem::new(
            template.level(l),
            target.level(l),
            &level_region,
            cfg.model,
            cfg.interpolation,
        );
        if problem.points.len() < cfg.min_level_pixels && l > 0 {
            continue;
        }
        let (w, level_converged, its) =
            align_level(&problem, warp.rescaled(s), &level_region, cfg)?;
        iterations += its;
        warp = w.rescaled(1.0 / s);
        if l == 0 {
            converged = level_converged;
        }
    }
    let finest = Problem::new(
        template.level(0),
        target.level(0),
        region,
        cfg.model,
        cfg.interpolation,
    );
    let residual = finest.mse(&warp);
    Ok(LkResult {
        warp,
        converged: converged && residual <= cfg.residual_cap,
        iterations,
        residual,
    })
}

fn align_level(
    problem: &Problem,
    init: AffineWarp,
    region: &Quad,
    cfg: &LkConfig,
) -> Result<(AffineWarp, bool, usize)> {
    let mut w = init;
    let mut mse = problem.mse(&w);
    for it in 1..=cfg.max_iterations {
        let (full, _) = problem.step(&w)?;
        let full_disp = full.max_displacement(&w, region.corners.iter());
        let mut candidate = full;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let m = problem.mse(&candidate);
            if m <= mse {
                accepted = Some((candidate, m));
                break;
            }
            candidate = halfway(&w, &candidate);
        }
        match accepted {
            Some((next, m)) => {
                w = next;
                mse = m;
            }
            None => {
                // A step too small to matter counts as convergence even if
                // floating-point noise made it slightly uphill.
                return Ok((w, full_disp < cfg.corner_tolerance, it));
            }
        }
        if full_disp < cfg.corner_tolerance {
            return Ok((w, true, it));
        }
    }
    Ok((w, false, cfg.max_iterations))
}

fn halfway(a: &AffineWarp, b: &AffineWarp) -> AffineWarp {
    let mut p = [0.0; 6];
    for (o, (x, y)) in p.iter_mut().zip(a.p.iter().zip(&b.p)) {
        *o = 0.5 * (x + y);
    }
    AffineWarp::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::warp_image;

    fn texture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (0.21 * x + 0.3).sin() * (0.17 * y).cos()
                + 0.1 * (0.11 * x - 0.13 * y).sin()
                + 0.07 * (0.05 * y + 0.31 * x).cos()
        })
    }

    fn region() -> Quad {
        Quad::square(60.0, 60.0, 50.0)
    }

    #[test]
    fn aligned_pair_is_a_fixed_point() {
        // Quarter turns with integer shifts resample without interpolation, so
        // the aligned pair is exact.
        let template = texture(120, 120);
        for (turns, tx, ty) in [
            (0, 3.0, -2.0),
            (1, 119.0, 4.0),
            (2, 121.0, 117.0),
            (3, -5.0, 118.0),
        ] {
            let p = AffineWarp::rotation(turns as f64 * std::f64::consts::FRAC_PI_2);
            let p = AffineWarp::new([
                p.p[0].round(),
                p.p[1].round(),
                p.p[2].round(),
                p.p[3].round(),
                tx,
                ty,
            ]);
            let inv = p.invert().unwrap();
            let target = warp_image(&template, &inv, 120, 120).unwrap();
            // target(W(x)) = template(W⁻¹(W(x))) = template(x)
            let reg = Quad::square(60.0, 60.0, 40.0);
            let (delta, residual) = lk_step(
                &template,
                &target,
                &reg,
                &p,
                MotionModel::Affine,
                Interpolation::Cubic,
            )
            .unwrap();
            let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            assert!(residual < 1e-6, "residual {residual}");
            assert!(norm < 1e-3, "delta {delta:?}");
        }
    }

    #[test]
    fn resampled_pair_is_nearly_fixed() {
        let template = Image::from_fn(120, 120, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (0.05 * x + 0.3).sin() * (0.04 * y).cos()
                + 0.1 * (0.03 * x - 0.045 * y).sin()
        });
        let p = AffineWarp::new([1.02, 0.03, -0.02, 0.99, 1.7, -0.6]);
        let target = warp_image(&template, &p.invert().unwrap(), 120, 120).unwrap();
        let (delta, residual) = lk_step(
            &template,
            &target,
            &region(),
            &p,
            MotionModel::Affine,
            Interpolation::Cubic,
        )
        .unwrap();
        let mut next = p;
        for (a, d) in next.p.iter_mut().zip(&delta) {
            *a += d;
        }
        assert!(residual < 1e-6, "residual {residual}");
        let moved = next.max_displacement(&p, region().corners.iter());
        assert!(
            moved < LkConfig::default().corner_tolerance,
            "step moves corners by {moved}"
        );
    }

    #[test]
    fn half_pixel_shift_step() {
        let template = texture(120, 120);
        // target(x) = template(x - 0.5): the template content sits half a pixel right
        let target = warp_image(&template, &AffineWarp::translation(-0.5, 0.0), 120, 120).unwrap();
        let (delta, _) = lk_step(
            &template,
            &target,
            &region(),
            &AffineWarp::IDENTITY,
            MotionModel::Affine,
            Interpolation::Cubic,
        )
        .unwrap();
        assert!((delta[4] - 0.5).abs() < 0.1, "{delta:?}");
        assert!(delta[5].abs() < 0.1, "{delta:?}");
    }

    #[test]
    fn flat_template_is_singular() {
        let flat = Image::filled(80, 80, 0.4);
        let r = lk_step(
            &flat,
            &flat,
            &Quad::square(40.0, 40.0, 30.0),
            &AffineWarp::IDENTITY,
            MotionModel::Affine,
            Interpolation::Cubic,
        );
        assert!(matches!(r, Err(Error::SingularHessian { .. })));
    }

    #[test]
    fn self_alignment_returns_identity() {
        let img = texture(100, 100);
        let r = lk_align(
            &img,
            &img,
            &Quad::square(50.0, 50.0, 60.0),
            &AffineWarp::IDENTITY,
            &LkConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!(
            r.warp.max_param_diff(&AffineWarp::IDENTITY) < 1e-4,
            "{:?}",
            r.warp
        );
    }

    #[test]
    fn recovers_planted_affine() {
        let template = texture(160, 160);
        let planted = AffineWarp::new([1.03, -0.04, 0.05, 0.97, 2.5, -4.0]);
        let target = warp_image(&template, &planted.invert().unwrap(), 160, 160).unwrap();
        let reg = Quad::square(80.0, 80.0, 70.0);
        let r = lk_align(
            &template,
            &target,
            &reg,
            &AffineWarp::IDENTITY,
            &LkConfig::default(),
        )
        .unwrap();
        assert!(r.converged, "{r:?}");
        let err = r.warp.max_displacement(&planted, reg.corners.iter());
        assert!(err < 0.25, "corner error {err}");
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let img = texture(90, 90);
        let p = AffineWarp::new([0.9813, 0.0217, -0.0291, 1.0107, 3.3149, -2.0871]);
        let reg = Quad::square(45.0, 45.0, 30.0);
        let pixels = reg.pixels(90, 90);
        for interp in [Interpolation::Bilinear, Interpolation::Cubic] {
            let sd = steepest_descent_images(&img, &reg, &p, interp);
            for k in 0..6 {
                let h = if k < 4 { 1e-8 } else { 1e-6 };
                let (mut plus, mut minus) = (p, p);
                plus.p[k] += h;
                minus.p[k] -= h;
                let (mut num, mut den) = (0.0, 0.0);
                for (row, &(x, y)) in sd.iter().zip(&pixels) {
                    let (x, y) = (x as f64, y as f64);
                    let (a, b) = plus.apply(x, y);
                    let (c, d) = minus.apply(x, y);
                    let fd = (interp.value(&img, a, b) - interp.value(&img, c, d)) / (2.0 * h);
                    num += (row[k] - fd).powi(2);
                    den += fd * fd;
                }
                let rel = (num / den).sqrt();
                assert!(rel < 1e-3, "{interp:?} parameter {k}: relative error {rel}");
            }
        }
    }
}
