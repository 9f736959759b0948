//! Scale normalization, pose re-warping and synthetic in-plane rotation of
//! tracked patches.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{warp_image, AffineWarp, Image, Quad};
use crate::track::TrackedTemplate;

/// Default output side of [`normalize_scale`].
pub const TEMPLATE_SIZE: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    pub views: Vec<Image>,
    pub source_burst: String,
    /// Rotation of each view in degrees (clockwise on screen, y pointing down).
    pub angles: Vec<f64>,
}

impl ViewSet {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Resamples the bounding square of `region` onto a `size x size` grid.
///
/// Square edges map to the outer pixel edges of the output, so a region of
/// side `2 * size` is a plain 2x decimation.
pub fn normalize_scale(img: &Image, region: &Quad, size: usize) -> Result<Image> {
    region.validate()?;
    if size == 0 {
        return Err(Error::InvalidArgument(
            "template size must be positive".into(),
        ));
    }
    let ((cx, cy), side) = region.bounding_square();
    let k = side / size as f64;
    let uc = 0.5 * (size as f64 - 1.0);
    let w = AffineWarp::new([k, 0.0, 0.0, k, cx - k * uc, cy - k * uc]);
    warp_image(img, &w, size, size)
}

/// Brings a tracked patch back to the pose of the burst's first frame.
///
/// Patches are cut as axis-aligned squares that follow the tracked centre, so
/// only the linear part of the pose remains to be undone, about the patch centre.
pub fn rewarp_to_initial(t: &TrackedTemplate) -> Result<Image> {
    if !t.pose.is_invertible() {
        return Err(Error::SingularWarp { det: t.pose.det() });
    }
    let (w, h) = t.patch.dims();
    let c = (0.5 * (w as f64 - 1.0), 0.5 * (h as f64 - 1.0));
    warp_image(&t.patch, &t.pose.linear_about(c.0, c.1), w, h)
}

/// `img` rotated by `degrees` about its centre (bilinear, clamped border).
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (w, h) = img.dims();
    let (cx, cy) = (0.5 * (w as f64 - 1.0), 0.5 * (h as f64 - 1.0));
    let theta = degrees.to_radians();
    // pull-back: output pixel x samples the source at R(-θ) x about the centre
    let warp = AffineWarp::similarity_about(cx, cy, 1.0, -theta, 0.0, 0.0);
    warp_image(img, &warp, w, h).expect("rotation is invertible")
}

/// Rotations of `base` at every multiple of `step_degrees` in `[0, 360)`.
pub fn generate_views(base: &Image, step_degrees: f64, source_burst: &str) -> Result<ViewSet> {
    let count = view_count(step_degrees)?;
    let angles: Vec<f64> = (0..count).map(|k| k as f64 * step_degrees).collect();
    let views = angles
        .par_iter()
        .map(|&a| {
            if a == 0.0 {
                base.clone()
            } else {
                rotate(base, a)
            }
        })
        .collect();
    Ok(ViewSet {
        views,
        source_burst: source_burst.to_string(),
        angles,
    })
}

/// Number of views for a step, or `InvalidStep` unless it divides 360.
pub fn view_count(step_degrees: f64) -> Result<usize> {
    if !(step_degrees > 0.0 && step_degrees <= 360.0) {
        return Err(Error::InvalidStep { step: step_degrees });
    }
    let n = 360.0 / step_degrees;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-9 {
        return Err(Error::InvalidStep { step: step_degrees });
    }
    Ok(rounded as usize)
}

/// Re-warps every template of a burst and expands each into a full rotation set.
pub fn augment_burst(
    templates: &[TrackedTemplate],
    step_degrees: f64,
    source_burst: &str,
) -> Result<Vec<ViewSet>> {
    view_count(step_degrees)?;
    templates
        .iter()
        .map(|t| generate_views(&rewarp_to_initial(t)?, step_degrees, source_burst))
        .collect()
}

/// Serializable description of a view set, written next to its PNGs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSetMeta {
    pub source_burst: String,
    pub source_frame: usize,
    pub angles: Vec<f64>,
    pub files: Vec<String>,
}

/// File name of the view at `angle` degrees.
pub fn view_file_name(angle: f64) -> String {
    format!("view_{:03}.png", angle.round() as i64)
}
