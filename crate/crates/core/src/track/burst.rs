use serde::{Deserialize, Serialize};

use super::lk::{lk_align_pyramids, LkConfig};
use crate::augment::normalize_scale;
use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::imgcore::{blur5, AffineWarp, Image, Pyramid, Quad};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub lk: LkConfig,
    /// Side of the square patch cut for every tracked frame.
    pub template_size: usize,
    /// The tracked region is the detection box shrunk about its centre by this
    /// factor, keeping background pixels at the box corners out of the fit.
    pub seed_shrink: f64,
    /// Largest fraction of region pixels allowed to fall outside the frame.
    pub max_outside_fraction: f64,
    /// Initialize each transition with the previous inter-frame motion.
    pub predict_motion: bool,
    /// Binomial pre-smoothing passes applied to every frame before alignment.
    pub presmooth: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            lk: LkConfig::default(),
            template_size: 100,
            seed_shrink: 0.65,
            max_outside_fraction: 0.1,
            predict_motion: true,
            presmooth: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    /// Region in the burst's first frame.
    pub region: Quad,
    /// Maps first-frame coordinates into the current frame.
    pub cumulative_warp: AffineWarp,
    pub frame_index: usize,
    pub last_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackedTemplate {
    pub patch: Image,
    pub source_frame: usize,
    pub pose: AffineWarp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The sequence ended while the target was still tracked.
    EndOfSequence,
    NotConverged,
    ResidualExceeded,
    /// Too much of the region left the frame.
    LeftFrame,
    SingularHessian,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::EndOfSequence => "end_of_sequence",
            Termination::NotConverged => "not_converged",
            Termination::ResidualExceeded => "residual_exceeded",
            Termination::LeftFrame => "left_frame",
            Termination::SingularHessian => "singular_hessian",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BurstTrack {
    pub templates: Vec<TrackedTemplate>,
    /// One state per tracked frame, first frame included.
    pub states: Vec<TrackState>,
    pub termination: Termination,
    /// Square (in first-frame coordinates) from which patches are cut.
    pub patch_region: Quad,
}

impl BurstTrack {
    pub fn warps(&self) -> Vec<AffineWarp> {
        self.states.iter().map(|s| s.cumulative_warp).collect()
    }
}

/// Tracking region for a detection: its box shrunk about the centre.
pub fn seed_region(seed: &Detection, shrink: f64) -> Quad {
    let b = seed.bbox();
    let (cx, cy) = b.center();
    let k = 0.5 * shrink;
    Quad::from_box(&crate::imgcore::BoundingBox {
        x: cx - k * b.w,
        y: cy - k * b.h,
        w: shrink * b.w,
        h: shrink * b.h,
    })
}

/// Tracks from `frames[0]`, where `seed` was detected, until the target is lost
/// or the frames run out.
pub fn track_burst(frames: &[Image], seed: &Detection, cfg: &TrackConfig) -> Result<BurstTrack> {
    let region = seed_region(seed, cfg.seed_shrink);
    let ((cx, cy), side) = seed.region.bounding_square();
    track_region(frames, &region, &Quad::square(cx, cy, side), cfg)
}

/// Tracks `region` (first-frame coordinates) and cuts patches from `patch_region`.
pub fn track_region(
    frames: &[Image],
    region: &Quad,
    patch_region: &Quad,
    cfg: &TrackConfig,
) -> Result<BurstTrack> {
    region.validate()?;
    patch_region.validate()?;
    if frames.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    for f in &frames[1..] {
        frames[0].ensure_same_dims(f)?;
    }
    let lattice = region.lattice_points();
    let levels = cfg.lk.pyramid_levels.max(1);
    let build = |i: usize| {
        let mut f = frames[i].clone();
        for _ in 0..cfg.presmooth {
            f = blur5(&f);
        }
        Pyramid::build(&f, levels, 8)
    };

    let cut = |frame: &Image, w: &AffineWarp| -> Result<Image> {
        let (cx, cy) = patch_region.centroid();
        let (ux, uy) = w.apply(cx, cy);
        let ((_, _), side) = patch_region.bounding_square();
        normalize_scale(frame, &Quad::square(ux, uy, side), cfg.template_size)
    };

    let mut cumulative = AffineWarp::IDENTITY;
    let mut states = vec![TrackState {
        region: *region,
        cumulative_warp: cumulative,
        frame_index: 0,
        last_residual: 0.0,
    }];
    let mut templates = vec![TrackedTemplate {
        patch: cut(&frames[0], &cumulative)?,
        source_frame: 0,
        pose: cumulative,
    }];
    let mut termination = Termination::EndOfSequence;
    let mut previous_step = AffineWarp::IDENTITY;
    let mut current = build(0);
    for i in 0..frames.len() - 1 {
        let next = build(i + 1);
        let here = region.warped(&cumulative);
        let init = if cfg.predict_motion {
            previous_step
        } else {
            AffineWarp::IDENTITY
        };
        let outcome = match lk_align_pyramids(&current, &next, &here, &init, &cfg.lk) {
            Ok(r) => Ok(r),
            Err(Error::SingularHessian { .. }) => Err(Termination::SingularHessian),
            Err(e) => return Err(e),
        };
        let verdict = outcome.and_then(|r| {
            let candidate = r.warp.compose(&cumulative);
            let (w, h) = frames[i + 1].dims();
            let outside = lattice
                .iter()
                .filter(|&&(x, y)| {
                    let (u, v) = candidate.apply(x, y);
                    u < 0.0 || v < 0.0 || u > (w - 1) as f64 || v > (h - 1) as f64
                })
                .count();
            if outside as f64 > cfg.max_outside_fraction * lattice.len() as f64 {
                Err(Termination::LeftFrame)
            } else if r.residual > cfg.lk.residual_cap {
                Err(Termination::ResidualExceeded)
            } else if !r.converged {
                Err(Termination::NotConverged)
            } else {
                Ok((r, candidate))
            }
        });
        match verdict {
            Ok((r, candidate)) => {
                previous_step = r.warp;
                cumulative = candidate;
                states.push(TrackState {
                    region: *region,
                    cumulative_warp: cumulative,
                    frame_index: i + 1,
                    last_residual: r.residual,
                });
                templates.push(TrackedTemplate {
                    patch: cut(&frames[i + 1], &cumulative)?,
                    source_frame: i + 1,
                    pose: cumulative,
                });
                current = next;
            }
            Err(t) => {
                log::debug!("burst ends after frame {i}: {}", t.as_str());
                if i == 0 {
                    return Err(Error::EmptyBurst {
                        reason: t.as_str().to_string(),
                    });
                }
                termination = t;
                break;
            }
        }
    }
    Ok(BurstTrack {
        templates,
        states,
        termination,
        patch_region: *patch_region,
    })
}
