use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::texture::{Background, Texture};
use crate::error::{Error, Result};
use crate::imgcore::{warp_image, AffineWarp, BoundingBox, Image, Quad};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disc { radius: f64 },
    Rect { half_width: f64, half_height: f64 },
}

impl Shape {
    /// Half extents of the shape's box in object coordinates.
    pub fn half_extent(&self) -> (f64, f64) {
        match *self {
            Shape::Disc { radius } => (radius, radius),
            Shape::Rect {
                half_width,
                half_height,
            } => (half_width, half_height),
        }
    }

    /// Signed distance to the outline, negative inside.
    fn distance(&self, u: f64, v: f64) -> f64 {
        match *self {
            Shape::Disc { radius } => (u * u + v * v).sqrt() - radius,
            Shape::Rect {
                half_width,
                half_height,
            } => (u.abs() - half_width).max(v.abs() - half_height),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub texture: Texture,
    /// Width of the alpha ramp at the outline, in object units.
    pub edge_softness: f64,
}

/// Everything needed to render a sequence. Camera warps map image
/// coordinates to world coordinates; object poses map object coordinates
/// (origin at the object's centre) to world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub background: Background,
    pub object: ObjectSpec,
    pub camera: Vec<AffineWarp>,
    pub object_poses: Vec<AffineWarp>,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame: usize,
    /// The object's box outline in image coordinates.
    pub quad: Quad,
    pub bbox: BoundingBox,
    /// Object coordinates to image coordinates.
    pub object_to_image: AffineWarp,
    /// Image coordinates to world coordinates.
    pub camera: AffineWarp,
}

impl FrameTruth {
    /// Maps points of frame `from` to the same object points in this frame.
    pub fn object_motion_from(&self, from: &FrameTruth) -> Result<AffineWarp> {
        Ok(self
            .object_to_image
            .compose(&from.object_to_image.invert()?))
    }

    /// Maps points of this frame to the same world points in frame `to`.
    pub fn background_motion_to(&self, to: &FrameTruth) -> Result<AffineWarp> {
        Ok(to.camera.invert()?.compose(&self.camera))
    }
}

impl SceneScript {
    pub fn frame_count(&self) -> usize {
        self.camera.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.camera.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.camera.len(),
            });
        }
        if self.object_poses.len() != self.camera.len() {
            return Err(Error::InvalidArgument(format!(
                "{} camera warps but {} object poses",
                self.camera.len(),
                self.object_poses.len()
            )));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::ImageTooSmall {
                width: self.width,
                height: self.height,
                min: 8,
            });
        }
        if let Some(w) = self
            .camera
            .iter()
            .chain(&self.object_poses)
            .find(|w| !w.is_invertible())
        {
            return Err(Error::SingularWarp { det: w.det() });
        }
        let (hw, hh) = self.object.shape.half_extent();
        if !(hw > 0.0 && hh > 0.0)
            || !(self.noise_sigma >= 0.0)
            || !(self.object.edge_softness > 0.0)
        {
            return Err(Error::InvalidArgument(
                "object size, softness and noise must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn truth(&self) -> Result<Vec<FrameTruth>> {
        let (hw, hh) = self.object.shape.half_extent();
        let local = Quad::new([(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)])?;
        self.camera
            .iter()
            .zip(&self.object_poses)
            .enumerate()
            .map(|(frame, (cam, pose))| {
                let a = cam.invert()?.compose(pose);
                let quad = local.warped(&a);
                let bbox = self.support_box(&a);
                Ok(FrameTruth {
                    frame,
                    quad,
                    bbox,
                    object_to_image: a,
                    camera: *cam,
                })
            })
            .collect()
    }

    /// Tight box of the object's support under `a`.
    fn support_box(&self, a: &AffineWarp) -> BoundingBox {
        let p = a.p;
        let (ex, ey) = match self.object.shape {
            // an ellipse's extent along x is |r| times the norm of the first row
            Shape::Disc { radius } => (radius * p[0].hypot(p[2]), radius * p[1].hypot(p[3])),
            Shape::Rect {
                half_width,
                half_height,
            } => (
                half_width * p[0].abs() + half_height * p[2].abs(),
                half_width * p[1].abs() + half_height * p[3].abs(),
            ),
        };
        BoundingBox {
            x: p[4] - ex,
            y: p[5] - ey,
            w: 2.0 * ex,
            h: 2.0 * ey,
        }
    }

    /// World rectangle covered by every frame, padded by two pixels.
    fn world_extent(&self) -> (f64, f64, usize, usize) {
        let (w, h) = (self.width as f64 - 1.0, self.height as f64 - 1.0);
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &self.camera {
            for (x, y) in [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)] {
                let (u, v) = c.apply(x, y);
                lo = (lo.0.min(u), lo.1.min(v));
                hi = (hi.0.max(u), hi.1.max(v));
            }
        }
        let x0 = lo.0.floor() - 2.0;
        let y0 = lo.1.floor() - 2.0;
        let nx = (hi.0.ceil() + 2.0 - x0) as usize + 1;
        let ny = (hi.1.ceil() + 2.0 - y0) as usize + 1;
        (x0, y0, nx, ny)
    }
}

/// Renders every frame with its ground truth.
///
/// The background is rasterized once in world coordinates and resampled per
/// frame; the object is evaluated analytically through the inverse pose, so
/// object pixels carry no interpolation error.
pub fn render(script: &SceneScript) -> Result<(Vec<Image>, Vec<FrameTruth>)> {
    script.validate()?;
    let truth = script.truth()?;
    let (x0, y0, nx, ny) = script.world_extent();
    let world = script.background.rasterize(x0, y0, nx, ny);
    let frames = truth
        .par_iter()
        .map(|t| render_frame(script, &world, x0, y0, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((frames, truth))
}

fn render_frame(
    script: &SceneScript,
    world: &Image,
    x0: f64,
    y0: f64,
    t: &FrameTruth,
) -> Result<Image> {
    let to_raster = AffineWarp::translation(-x0, -y0).compose(&t.camera);
    let mut img = warp_image(world, &to_raster, script.width, script.height)?;

    let inv = t.object_to_image.invert()?;
    let obj = &script.object;
    let b = t.bbox;
    let pad = 2.0 + obj.edge_softness;
    let xa = (b.x - pad).floor().max(0.0);
    let ya = (b.y - pad).floor().max(0.0);
    let xb = (b.x + b.w + pad).ceil().min(script.width as f64 - 1.0);
    let yb = (b.y + b.h + pad).ceil().min(script.height as f64 - 1.0);
    if xa <= xb && ya <= yb {
        for y in ya as usize..=yb as usize {
            for x in xa as usize..=xb as usize {
                let (u, v) = inv.apply(x as f64, y as f64);
                let d = obj.shape.distance(u, v);
                let alpha = (0.5 - d / obj.edge_softness).clamp(0.0, 1.0);
                if alpha > 0.0 {
                    let bg = img.get(x, y);
                    img.set(x, y, alpha * obj.texture.eval(u, v) + (1.0 - alpha) * bg);
                }
            }
        }
    }

    if script.noise_sigma > 0.0 {
        let seed = script.seed ^ (t.frame as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, script.noise_sigma)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let data: Vec<f64> = img
            .data()
            .iter()
            .map(|v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        img = Image::new(script.width, script.height, data)?;
    }
    Ok(img)
}

/// Per-frame warps for steady motion: frame `k` gets
/// `T(origin + k v) R(theta0 + k omega) S(1 + k growth)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub origin: (f64, f64),
    pub velocity: (f64, f64),
    pub theta0: f64,
    /// Radians per frame.
    pub omega: f64,
    /// Fractional scale change per frame along each object axis.
    pub growth: (f64, f64),
    /// Constant shear of the object axes.
    pub shear: f64,
}

impl Trajectory {
    pub fn still(x: f64, y: f64) -> Self {
        Self {
            origin: (x, y),
            velocity: (0.0, 0.0),
            theta0: 0.0,
            omega: 0.0,
            growth: (0.0, 0.0),
            shear: 0.0,
        }
    }

    pub fn at(&self, k: usize) -> AffineWarp {
        let k = k as f64;
        let s = AffineWarp::new([
            1.0 + k * self.growth.0,
            0.0,
            self.shear,
            1.0 + k * self.growth.1,
            0.0,
            0.0,
        ]);
        let r = AffineWarp::rotation(self.theta0 + k * self.omega);
        let t = AffineWarp::translation(
            self.origin.0 + k * self.velocity.0,
            self.origin.1 + k * self.velocity.1,
        );
        t.compose(&r.compose(&s))
    }

    pub fn warps(&self, frames: usize) -> Vec<AffineWarp> {
        (0..frames).map(|k| self.at(k)).collect()
    }
}
