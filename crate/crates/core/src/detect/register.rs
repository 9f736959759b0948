//! Coarse-to-fine global registration with residual trimming.
//!
//! The moving target is a small fraction of the frame, so each Gauss-Newton
//! iteration discards the largest residuals before building the normal
//! equations and the background alone drives the estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{gradient, AffineWarp, Image, Pyramid};
use crate::motion::{Frame, MotionModel, NormalEquations};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    pub model: MotionModel,
    /// Fraction of largest absolute residuals dropped every iteration.
    pub trim_fraction: f64,
    /// Residuals within this many robust standard deviations (from the median
    /// absolute residual) are always kept, so trimming never eats into noise.
    pub noise_band: f64,
    /// Consecutive non-decreasing iterations tolerated before giving up.
    pub max_stall: usize,
    pub max_iterations: usize,
    /// Pyramid depth cap; levels stop once the short side drops below `min_level_side`.
    pub max_levels: usize,
    pub min_level_side: usize,
    /// Per-level convergence threshold on the induced corner displacement, in level pixels.
    pub tolerance: f64,
    /// Sample budget per level; larger levels are strided.
    pub max_samples: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            model: MotionModel::Similarity,
            trim_fraction: 0.2,
            noise_band: 3.0,
            max_stall: 5,
            max_iterations: 40,
            max_levels: 8,
            min_level_side: 48,
            tolerance: 0.005,
            max_samples: 250_000,
        }
    }
}

/// Estimates the warp `W` with `prev(x) ≈ next(W(x))` over the static background.
pub fn register_global(prev: &Image, next: &Image, cfg: &RegistrationConfig) -> Result<AffineWarp> {
    prev.ensure_same_dims(next)?;
    let a = Pyramid::build(prev, cfg.max_levels, cfg.min_level_side);
    let b = Pyramid::build(next, cfg.max_levels, cfg.min_level_side);
    register_pyramids(&a, &b, cfg)
}

pub fn register_pyramids(
    prev: &Pyramid,
    next: &Pyramid,
    cfg: &RegistrationConfig,
) -> Result<AffineWarp> {
    if prev.level(0).dims() != next.level(0).dims() {
        return Err(Error::DimensionMismatch {
            expected: prev.level(0).dims(),
            got: next.level(0).dims(),
        });
    }
    if !(0.0..1.0).contains(&cfg.trim_fraction) {
        return Err(Error::InvalidArgument(format!(
            "trim fraction {}",
            cfg.trim_fraction
        )));
    }
    let levels = prev.len().min(next.len());
    let mut warp = AffineWarp::IDENTITY;
    let mut total_iterations = 0;
    for l in (0..levels).rev() {
        let s = Pyramid::scale(l);
        let level_warp = warp.rescaled(s);
        let solved = register_level(
            prev.level(l),
            next.level(l),
            level_warp,
            cfg,
            &mut total_iterations,
        )?;
        warp = solved.rescaled(1.0 / s);
    }
    Ok(warp)
}

struct LevelData<'a> {
    next: &'a Image,
    gx: Image,
    gy: Image,
    points: Vec<(f64, f64)>,
    normalized: Vec<(f64, f64)>,
    values: Vec<f64>,
    frame: Frame,
    model: MotionModel,
    keep_fraction: f64,
    noise_band: f64,
}

struct Evaluation {
    ne: NormalEquations,
    trimmed_mse: f64,
}

impl LevelData<'_> {
    fn evaluate(&self, q: &AffineWarp) -> Result<Evaluation> {
        let w = self.frame.from_normalized(q);
        let mut rows: Vec<([f64; 6], f64)> = Vec::with_capacity(self.points.len());
        let mut row = [0.0; 6];
        for ((&(x, y), &(xn, yn)), &t) in self.points.iter().zip(&self.normalized).zip(&self.values)
        {
            let (u, v) = w.apply(x, y);
            if !self.next.contains(u, v) {
                continue;
            }
            let r = t - self.next.sample_value(u, v);
            let gx = self.gx.sample_value(u, v);
            let gy = self.gy.sample_value(u, v);
            self.model
                .jacobian_row(xn, yn, gx, gy, self.frame.s, &mut row);
            rows.push((row, r));
        }
        if rows.len() < 4 * self.model.dof() {
            return Err(Error::RegistrationDiverged { iterations: 0 });
        }
        let keep = ((rows.len() as f64) * self.keep_fraction).ceil() as usize;
        let keep = keep.clamp(1, rows.len());
        let mut mags: Vec<f64> = rows.iter().map(|(_, r)| r.abs()).collect();
        let n = mags.len();
        let (_, &mut quantile, _) = mags.select_nth_unstable_by(keep - 1, |a, b| a.total_cmp(b));
        let (_, &mut median, _) = mags.select_nth_unstable_by(n / 2, |a, b| a.total_cmp(b));
        let band = self.noise_band * 1.4826 * median;
        let (cutoff, cap) = if band > quantile {
            (band, n)
        } else {
            (quantile, keep)
        };
        let mut ne = NormalEquations::new(self.model.dof());
        let mut kept = 0;
        for (row, r) in &rows {
            if r.abs() <= cutoff && kept < cap {
                ne.add(row, *r);
                kept += 1;
            }
        }
        let trimmed_mse = ne.mse();
        Ok(Evaluation { ne, trimmed_mse })
    }
}

fn register_level(
    prev: &Image,
    next: &Image,
    init: AffineWarp,
    cfg: &RegistrationConfig,
    total_iterations: &mut usize,
) -> Result<AffineWarp> {
    let (w, h) = prev.dims();
    let stride = (((w * h) as f64 / cfg.max_samples.max(1) as f64)
        .sqrt()
        .ceil() as usize)
        .max(1);
    let mut points = Vec::new();
    let mut values = Vec::new();
    for y in (0..h).step_by(stride) {
        for x in (0..w).step_by(stride) {
            points.push((x as f64, y as f64));
            values.push(prev.get(x, y));
        }
    }
    let frame = Frame::from_points(points.iter());
    let normalized = points.iter().map(|&(x, y)| frame.normalize(x, y)).collect();
    let (gx, gy) = gradient(next)?;
    let data = LevelData {
        next,
        gx,
        gy,
        points,
        normalized,
        values,
        frame,
        model: cfg.model,
        keep_fraction: 1.0 - cfg.trim_fraction,
        noise_band: cfg.noise_band,
    };
    let corners = [
        (0.0, 0.0),
        ((w - 1) as f64, 0.0),
        ((w - 1) as f64, (h - 1) as f64),
        (0.0, (h - 1) as f64),
    ];

    let mut q = frame.to_normalized(&init);
    let mut eval = data.evaluate(&q)?;
    let mut best = (q, eval.trimmed_mse);
    let mut stall = 0;
    let mut last_steps = Vec::new();
    for _ in 0..cfg.max_iterations {
        *total_iterations += 1;
        let dq = eval.ne.solve().map_err(|_| Error::RegistrationDiverged {
            iterations: *total_iterations,
        })?;
        let q_new = cfg.model.apply_increment(&q, &dq, 1.0);
        let disp = frame
            .from_normalized(&q_new)
            .max_displacement(&frame.from_normalized(&q), corners.iter());
        q = q_new;
        eval = data.evaluate(&q)?;
        if eval.trimmed_mse < best.1 {
            best = (q, eval.trimmed_mse);
            stall = 0;
        } else {
            stall += 1;
        }
        last_steps.push(disp);
        if disp < cfg.tolerance {
            break;
        }
        if stall >= cfg.max_stall {
            // A plateau reached with sub-tenth-pixel steps is convergence, not divergence.
            let recent = &last_steps[last_steps.len() - stall..];
            if recent.iter().all(|&d| d < 0.1) {
                break;
            }
            return Err(Error::RegistrationDiverged {
                iterations: *total_iterations,
            });
        }
    }
    Ok(frame.from_normalized(&best.0))
}
