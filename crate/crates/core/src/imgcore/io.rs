//! PNG / binary PGM loading and PNG writing.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, Luma};

use super::image::Image;
use crate::error::Result;

/// Loads a PNG or PGM (P5) file into `[0, 1]` intensities.
///
/// 8-bit samples are divided by 255; colour inputs are reduced to luma
/// `0.299 R + 0.587 G + 0.114 B` first.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let dynamic = ImageReader::open(path.as_ref())?
        .with_guessed_format()?
        .decode()?;
    Ok(from_dynamic(&dynamic))
}

pub fn from_dynamic(img: &DynamicImage) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => Image::from_fn(w, h, |x, y| {
            g.get_pixel(x as u32, y as u32)[0] as f64 / 255.0
        }),
        DynamicImage::ImageLumaA8(g) => Image::from_fn(w, h, |x, y| {
            g.get_pixel(x as u32, y as u32)[0] as f64 / 255.0
        }),
        DynamicImage::ImageLuma16(g) => Image::from_fn(w, h, |x, y| {
            g.get_pixel(x as u32, y as u32)[0] as f64 / 65535.0
        }),
        other => {
            let rgb = other.to_rgb8();
            Image::from_fn(w, h, |x, y| {
                let p = rgb.get_pixel(x as u32, y as u32);
                (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
            })
        }
    }
}

/// Quantizes to 8 bits (values clamped to `[0, 1]`).
pub fn to_gray8(img: &Image) -> GrayImage {
    GrayImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let v = img.get(x as usize, y as usize).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    })
}

pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    to_gray8(img).save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}
