use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Loads a PNG or binary PPM/PGM file into a [`Frame`] with values scaled to `[0, 1]`.
///
/// Gray images load with one channel and color images with three; alpha is dropped.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let format = image::guess_format(&bytes).map_err(|_| Error::UnsupportedFormat {
        path: path.to_path_buf(),
    })?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Pnm) {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
        });
    }
    let img =
        image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    decode_image(img)
}

/// Decodes an in-memory PNG/PNM payload.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::UnreadableFile {
        path: "<memory>".into(),
        reason: e.to_string(),
    })?;
    decode_image(img)
}

fn decode_image(img: DynamicImage) -> Result<Frame> {
    let (width, height) = (img.width() as usize, img.height() as usize);
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    let gray = !img.color().has_color();
    let sixteen = img.color().bytes_per_pixel() / img.color().channel_count() > 1;
    let data: Vec<f32> = match (gray, sixteen) {
        (true, false) => img
            .to_luma8()
            .into_raw()
            .iter()
            .map(|&v| v as f32 / 255.0)
            .collect(),
        (true, true) => img
            .to_luma16()
            .into_raw()
            .iter()
            .map(|&v| v as f32 / 65535.0)
            .collect(),
        (false, false) => img
            .to_rgb8()
            .into_raw()
            .iter()
            .map(|&v| v as f32 / 255.0)
            .collect(),
        (false, true) => img
            .to_rgb16()
            .into_raw()
            .iter()
            .map(|&v| v as f32 / 65535.0)
            .collect(),
    };
    let channels = if gray { 1 } else { 3 };
    Frame::new(width, height, channels, data)
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit raster. The format follows the extension: `.png`, `.ppm`
/// (gray frames are replicated to RGB) or `.pgm` (color frames reduced to luma).
pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => encode_png(frame)?,
        "ppm" => encode_pnm(frame, true),
        "pgm" => encode_pnm(frame, false),
        _ => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
            })
        }
    };
    std::fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Encodes a frame as an 8-bit PNG (gray or RGB).
pub fn encode_png(frame: &Frame) -> Result<Vec<u8>> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let raw: Vec<u8> = frame.data().iter().map(|&v| quantize(v)).collect();
    let img = if frame.channels() == 1 {
        DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(w, h, raw).expect("buffer length matches dimensions"),
        )
    } else {
        DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(w, h, raw).expect("buffer length matches dimensions"),
        )
    };
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::InvalidFrame(e.to_string()))?;
    Ok(out.into_inner())
}

fn encode_pnm(frame: &Frame, color: bool) -> Vec<u8> {
    let (w, h) = frame.dims();
    let magic = if color { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    match (color, frame.channels()) {
        (true, 3) | (false, 1) => out.extend(frame.data().iter().map(|&v| quantize(v))),
        (true, _) => out.extend(frame.data().iter().flat_map(|&v| [quantize(v); 3])),
        (false, _) => out.extend(frame.luma().into_iter().map(quantize)),
    }
    out
}
