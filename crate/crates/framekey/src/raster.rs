//! Small raster helpers shared by the renderer, the probe generator, and the
//! mock decoder.
//!
//! Scaling is a hand-rolled nearest-neighbour resample so that the bytes it
//! produces are pinned by this crate alone, not by a dependency's filter
//! implementation. Encoded output is PNG with fixed settings.

use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, RgbImage};

use crate::error::{Error, Result};

/// Load an image file and convert it to RGB8.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })?;
    Ok(img.to_rgb8())
}

/// Encode an RGB image as PNG with fixed encoder settings.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let encoder = PngEncoder::new(&mut out);
    encoder.write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

/// Decode a PNG (or any supported raster) byte buffer to RGB8.
pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage> {
    Ok(image::load_from_memory(bytes)?.to_rgb8())
}

/// Write an RGB image to disk as PNG.
pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Nearest-neighbour resample to exactly `(out_w, out_h)`.
///
/// Output pixel `(x, y)` samples source pixel `(x * in_w / out_w, y * in_h / out_h)`
/// using integer floor division, so the result is identical on every platform.
pub fn scale_nearest(src: &RgbImage, out_w: u32, out_h: u32) -> RgbImage {
    assert!(out_w >= 1 && out_h >= 1, "target dimensions must be >= 1");
    let (in_w, in_h) = src.dimensions();
    let mut out = RgbImage::new(out_w, out_h);
    for y in 0..out_h {
        let sy = (y as u64 * in_h as u64 / out_h as u64) as u32;
        for x in 0..out_w {
            let sx = (x as u64 * in_w as u64 / out_w as u64) as u32;
            out.put_pixel(x, y, *src.get_pixel(sx, sy));
        }
    }
    out
}

/// Copy `patch` into `canvas` with its top-left corner at `(x0, y0)`.
///
/// The patch must fit entirely inside the canvas.
pub fn composite(canvas: &mut RgbImage, patch: &RgbImage, x0: u32, y0: u32) {
    debug_assert!(x0 + patch.width() <= canvas.width());
    debug_assert!(y0 + patch.height() <= canvas.height());
    for y in 0..patch.height() {
        for x in 0..patch.width() {
            canvas.put_pixel(x0 + x, y0 + y, *patch.get_pixel(x, y));
        }
    }
}
