//! Image, mask and `.flo` files.
//!
//! Images are 8-bit PNG or binary PGM/PPM, one or three channels, mapped to
//! `[0, 1]` by `v / 255`. Masks are single-channel images where 255 (any
//! value ≥ 128) marks a hole.

use std::io::Cursor;
use std::path::Path;

use flowfill_core::{FlowField, ImageBuffer, Mask};
use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};

use crate::error::{AppError, Result};

const FLO_MAGIC: &[u8; 4] = b"PIEH";

fn format_for_path(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "ppm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(AppError::UnsupportedFormat(path.display().to_string())),
    }
}

fn decode(bytes: &[u8]) -> std::result::Result<DynamicImage, String> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| e.to_string())?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Pnm) => reader.decode().map_err(|e| e.to_string()),
        Some(f) => Err(format!("{f:?}")),
        None => Err("unrecognised header".into()),
    }
}

fn to_buffer(img: DynamicImage) -> Result<ImageBuffer> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = if img.color().has_color() {
        (3, img.into_rgb8().into_raw())
    } else {
        (1, img.into_luma8().into_raw())
    };
    let data = raw.into_iter().map(|v| v as f64 / 255.0).collect();
    Ok(ImageBuffer::from_vec(w, h, channels, data)?)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn to_dynamic(img: &ImageBuffer) -> Result<DynamicImage> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let raw: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let out = match img.channels() {
        1 => GrayImage::from_raw(w, h, raw).map(DynamicImage::ImageLuma8),
        3 => RgbImage::from_raw(w, h, raw).map(DynamicImage::ImageRgb8),
        c => return Err(AppError::UnsupportedFormat(format!("{c}-channel image"))),
    };
    out.ok_or_else(|| AppError::Malformed("raster size".into()))
}

/// Decodes PNG/PGM/PPM bytes.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    to_buffer(decode(bytes).map_err(AppError::UnsupportedFormat)?)
}

/// Encodes as an 8-bit PNG with the image's channel count.
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_dynamic(img)?
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| AppError::Malformed(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    let img = decode(&bytes).map_err(|e| match ImageFormat::from_path(path) {
        // A known extension with bad contents is a corrupt file, not a
        // format question.
        Ok(ImageFormat::Png | ImageFormat::Pnm) => AppError::io(path, e),
        _ => AppError::UnsupportedFormat(path.display().to_string()),
    })?;
    to_buffer(img)
}

/// Writes by extension: `.png`, or binary `.pgm`/`.ppm`.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_for_path(path)?;
    to_dynamic(img)?
        .save_with_format(path, format)
        .map_err(|e| AppError::io(path, e))
}

/// Reads any 8-bit image as a mask; pixels ≥ 128 in luminance are holes.
pub fn mask_from_image(img: &ImageBuffer) -> Result<Mask> {
    let (w, h) = img.dims();
    let lum = img.luminance();
    Ok(Mask::from_bits(w, h, lum.data().iter().map(|&v| v >= 0.5).collect())?)
}

pub fn mask_to_image(m: &Mask) -> ImageBuffer {
    let (w, h) = m.dims();
    let data = m.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    ImageBuffer::from_vec(w, h, 1, data).expect("mask dims are valid")
}

pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    mask_from_image(&decode_image(bytes)?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    mask_from_image(&load_image(path)?)
}

/// Single-channel PNG, 255 for holes and 0 elsewhere.
pub fn save_mask(m: &Mask, path: impl AsRef<Path>) -> Result<()> {
    save_image(&mask_to_image(m), path)
}

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for v in flow.vectors() {
        out.extend_from_slice(&(v[0] as f32).to_le_bytes());
        out.extend_from_slice(&(v[1] as f32).to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 4 || &bytes[..4] != FLO_MAGIC {
        return Err(AppError::BadMagic);
    }
    let word = |i: usize| -> Result<[u8; 4]> {
        bytes
            .get(i..i + 4)
            .map(|b| b.try_into().unwrap())
            .ok_or_else(|| AppError::Malformed("truncated .flo".into()))
    };
    let w = u32::from_le_bytes(word(4)?) as usize;
    let h = u32::from_le_bytes(word(8)?) as usize;
    let expected = w.checked_mul(h).and_then(|n| n.checked_mul(8)).and_then(|n| n.checked_add(12));
    if expected != Some(bytes.len()) {
        return Err(AppError::Malformed(format!("{w}x{h} .flo with {} bytes", bytes.len())));
    }
    let vectors = (0..w * h)
        .map(|i| {
            let at = 12 + 8 * i;
            let dx = f32::from_le_bytes(word(at)?) as f64;
            let dy = f32::from_le_bytes(word(at + 4)?) as f64;
            Ok([dx, dy])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FlowField::from_vec(w, h, vectors)?)
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| AppError::io(path, e))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    decode_flo(&std::fs::read(path).map_err(|e| AppError::io(path, e))?)
}
