use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mask::{
    abs_difference, largest_component, morphological_clean, morphological_close,
    threshold_differences, BinaryMask, Component,
};
use super::register::{register_pyramids, RegistrationConfig};
use crate::error::{Error, Result};
use crate::imgcore::{AffineWarp, BoundingBox, Image, Pyramid, Quad};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub diff_threshold: f64,
    pub morph_radius: usize,
    /// Closing radius applied after the opening to join target fragments; 0 disables.
    pub close_radius: usize,
    /// Smallest accepted component area in pixels.
    pub min_area: usize,
    /// Consecutive overlapping detections required before tracking starts.
    pub persistence: usize,
    pub persistence_iou: f64,
    pub registration: RegistrationConfig,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            diff_threshold: 0.12,
            morph_radius: 1,
            close_radius: 3,
            min_area: 100,
            persistence: 3,
            persistence_iou: 0.5,
            registration: RegistrationConfig::default(),
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.diff_threshold > 0.0 && self.diff_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "diff_threshold {} outside (0, 1)",
                self.diff_threshold
            )));
        }
        if self.morph_radius == 0 {
            return Err(Error::InvalidArgument(
                "morph_radius must be at least 1".into(),
            ));
        }
        if self.persistence == 0 {
            return Err(Error::InvalidArgument(
                "persistence must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: usize,
    /// Axis-aligned box through the outer pixel edges of the component,
    /// clipped to the frame.
    pub region: Quad,
    pub area: usize,
    pub score: f64,
}

impl Detection {
    pub fn from_component(
        frame_index: usize,
        c: &Component,
        diff: &[Option<f64>],
        width: usize,
        height: usize,
    ) -> Self {
        let (x0, y0, x1, y1) = c.bounds;
        let left = (x0 as f64 - 0.5).max(0.0);
        let top = (y0 as f64 - 0.5).max(0.0);
        let right = (x1 as f64 + 0.5).min(width as f64 - 1.0);
        let bottom = (y1 as f64 + 0.5).min(height as f64 - 1.0);
        let region = Quad::from_box(&BoundingBox {
            x: left,
            y: top,
            w: right - left,
            h: bottom - top,
        });
        let total: f64 = c
            .pixels
            .iter()
            .map(|&(x, y)| diff[y * width + x].unwrap_or(0.0))
            .sum();
        Self {
            frame_index,
            region,
            area: c.area(),
            score: total / c.area() as f64,
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        self.region.bounding_box()
    }
}

/// Background subtraction for one registered pair. The mask lives in the
/// coordinates of `current`; `to_previous` maps current pixels into `previous`.
pub fn detect_pair(
    frame_index: usize,
    current: &Image,
    previous: &Image,
    to_previous: &AffineWarp,
    cfg: &DetectConfig,
) -> (BinaryMask, Option<Detection>) {
    let (w, h) = current.dims();
    let diff = abs_difference(current, previous, to_previous);
    let raw = threshold_differences(&diff, w, h, cfg.diff_threshold);
    let clean = morphological_close(
        &morphological_clean(&raw, cfg.morph_radius),
        cfg.close_radius,
    );
    let det = largest_component(&clean, cfg.min_area)
        .map(|c| Detection::from_component(frame_index, &c, &diff, w, h));
    (clean, det)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SequenceDetections {
    /// `warps[i]` registers frame `i` onto frame `i + 1`: `I_i(x) ≈ I_{i+1}(W(x))`.
    pub warps: Vec<AffineWarp>,
    /// One slot per frame; frame 0 has no predecessor and is always empty.
    pub detections: Vec<Option<Detection>>,
}

/// Registers consecutive pairs and runs background subtraction on every
/// frame after the first.
pub fn detect_sequence(frames: &[Image], cfg: &DetectConfig) -> Result<SequenceDetections> {
    cfg.validate()?;
    if frames.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: frames.len(),
        });
    }
    for f in &frames[1..] {
        frames[0].ensure_same_dims(f)?;
    }
    let reg = &cfg.registration;
    let pyramids: Vec<Pyramid> = frames
        .par_iter()
        .map(|f| Pyramid::build(f, reg.max_levels, reg.min_level_side))
        .collect();
    let pairs: Vec<Result<(AffineWarp, Option<Detection>)>> = (0..frames.len() - 1)
        .into_par_iter()
        .map(|i| {
            let w = register_pyramids(&pyramids[i], &pyramids[i + 1], reg)?;
            let back = w.invert()?;
            let (_, det) = detect_pair(i + 1, &frames[i + 1], &frames[i], &back, cfg);
            Ok((w, det))
        })
        .collect();
    let mut out = SequenceDetections {
        warps: Vec::with_capacity(frames.len() - 1),
        detections: vec![None],
    };
    for p in pairs {
        let (w, d) = p?;
        log::debug!(
            "frame {}: detection {:?}",
            out.detections.len(),
            d.as_ref().map(|d| d.area)
        );
        out.warps.push(w);
        out.detections.push(d);
    }
    Ok(out)
}

/// First detection that closes a run of `persistence` consecutive frames
/// whose boxes overlap pairwise-consecutively with IoU above the threshold.
pub fn find_seed(detections: &[Option<Detection>], cfg: &DetectConfig) -> Option<Detection> {
    let mut run = 0usize;
    let mut last: Option<&Detection> = None;
    for d in detections {
        match d {
            Some(d) => {
                let linked = last.is_some_and(|p| p.bbox().iou(&d.bbox()) > cfg.persistence_iou);
                run = if linked { run + 1 } else { 1 };
                if run >= cfg.persistence {
                    return Some(d.clone());
                }
                last = Some(d);
            }
            None => {
                run = 0;
                last = None;
            }
        }
    }
    None
}

/// Tightens a seed box to the target's position in its own frame.
///
/// A difference box covers the target where it is and where it was one frame
/// earlier. The next frame's box, brought back through the background
/// registration, covers where it is and where it will be, so the overlap of
/// the two keeps only the current position. Without a usable next detection
/// the seed is returned unchanged.
pub fn refine_seed(seq: &SequenceDetections, seed: &Detection, min_overlap: f64) -> Detection {
    let i = seed.frame_index;
    let next = match seq.detections.get(i + 1) {
        Some(Some(n)) => n,
        _ => return seed.clone(),
    };
    let back = match seq.warps.get(i).map(AffineWarp::invert) {
        Some(Ok(b)) => b,
        _ => return seed.clone(),
    };
    let own = seed.bbox();
    let mapped = next.region.warped(&back).bounding_box();
    match own.intersection(&mapped) {
        Some(b) if b.area() >= min_overlap * own.area() => Detection {
            region: Quad::from_box(&b),
            ..seed.clone()
        },
        _ => seed.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::warp_image;

    fn background(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.35 + 0.08 * (0.09 * x + 0.4).sin() * (0.06 * y).cos()
                + 0.06 * (0.04 * x - 0.07 * y).sin()
        })
    }

    fn blob_value(x: f64, y: f64) -> f64 {
        0.8 + 0.15 * (0.9 * x).sin() * (0.7 * y).cos()
    }

    /// Background shifted by `shift`, with a 40x40 textured blob whose top-left
    /// corner sits at `at` in frame coordinates.
    fn scene(shift: f64, at: (f64, f64)) -> Image {
        let bg = background(240, 200);
        let moved = warp_image(&bg, &AffineWarp::translation(-shift, 0.0), 240, 200).unwrap();
        let mut img = moved;
        for y in 0..200 {
            for x in 0..240 {
                let (u, v) = (x as f64 - at.0, y as f64 - at.1);
                if (0.0..40.0).contains(&u) && (0.0..40.0).contains(&v) {
                    img.set(x, y, blob_value(u, v));
                }
            }
        }
        img
    }

    #[test]
    fn background_motion_recovered_despite_blob() {
        // frame 1 pixel x shows background at x - 5
        let a = scene(0.0, (60.0, 70.0));
        let b = scene(5.0, (90.0, 80.0));
        let w = register_pyramids(
            &Pyramid::build(&a, 8, 48),
            &Pyramid::build(&b, 8, 48),
            &RegistrationConfig::default(),
        )
        .unwrap();
        assert!((w.p[4] - 5.0).abs() < 0.2 && w.p[5].abs() < 0.2, "{w:?}");
    }

    #[test]
    fn sequence_detects_and_seeds() {
        let frames: Vec<Image> = (0..5)
            .map(|i| scene(2.0 * i as f64, (50.0 + 6.0 * i as f64, 60.0)))
            .collect();
        let seq = detect_sequence(&frames, &DetectConfig::default()).unwrap();
        assert!(seq.detections[0].is_none());
        for (i, d) in seq.detections.iter().enumerate().skip(1) {
            let d = d.as_ref().unwrap();
            let truth = BoundingBox {
                x: 50.0 + 6.0 * i as f64,
                y: 60.0,
                w: 40.0,
                h: 40.0,
            };
            assert!(d.bbox().iou(&truth) > 0.7, "frame {i}: {:?}", d.bbox());
            assert!(d.area >= 100 && d.score > 0.12);
        }
        let seed = find_seed(&seq.detections, &DetectConfig::default()).unwrap();
        assert_eq!(seed.frame_index, 3);

        // the raw box spans two blob positions; the refined one only the current
        let truth = BoundingBox {
            x: 68.0,
            y: 60.0,
            w: 40.0,
            h: 40.0,
        };
        let refined = refine_seed(&seq, &seed, 0.3);
        assert!(seed.bbox().w > 42.0);
        assert!(refined.bbox().iou(&truth) > 0.9, "{:?}", refined.bbox());
        let (cx, cy) = refined.bbox().center();
        assert!(
            (cx - 87.5).abs() < 1.5 && (cy - 79.5).abs() < 1.5,
            "{cx} {cy}"
        );
    }

    #[test]
    fn refinement_without_next_frame_keeps_seed() {
        let frames: Vec<Image> = (0..4)
            .map(|i| scene(2.0 * i as f64, (50.0 + 6.0 * i as f64, 60.0)))
            .collect();
        let seq = detect_sequence(&frames, &DetectConfig::default()).unwrap();
        let seed = find_seed(&seq.detections, &DetectConfig::default()).unwrap();
        assert_eq!(refine_seed(&seq, &seed, 0.3), seed);
    }

    #[test]
    fn seed_needs_unbroken_run() {
        let det = |i: usize, x: f64| {
            Some(Detection {
                frame_index: i,
                region: Quad::square(x, 50.0, 20.0),
                area: 400,
                score: 0.3,
            })
        };
        let cfg = DetectConfig::default();
        let dets = vec![
            None,
            det(1, 50.0),
            None,
            det(3, 50.0),
            det(4, 52.0),
            det(5, 200.0),
            det(6, 201.0),
        ];
        assert!(find_seed(&dets, &cfg).is_none());
        let mut dets = dets;
        dets.push(det(7, 202.0));
        assert_eq!(find_seed(&dets, &cfg).unwrap().frame_index, 7);
    }

    #[test]
    fn single_frame_is_rejected() {
        let r = detect_sequence(&[background(60, 60)], &DetectConfig::default());
        assert!(matches!(r, Err(Error::InsufficientSamples { .. })));
    }
}
