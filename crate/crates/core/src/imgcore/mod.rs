//! Raster, geometry and interpolation primitives shared by every stage.

mod image;
mod io;
mod pyramid;
mod quad;
mod warp;

pub use self::image::{gradient, Image, Interpolation, Sample};
pub use self::io::{from_dynamic, load_image, save_png, to_gray8};
pub use self::pyramid::{blur5, Pyramid};
pub use self::quad::{BoundingBox, Quad};
pub use self::warp::{warp_image, AffineWarp, SINGULAR_TOLERANCE};
