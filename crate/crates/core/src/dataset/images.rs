//! On-disk encodings of the per-frame images.

use std::io::Cursor;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::DatasetError;
use crate::image::{linear_to_srgb, Image};

/// Middlebury `.flo` magic number.
const FLO_MAGIC: f32 = 202_021.25;

/// Depth in meters to 16-bit millimeters, rounding half to even. Zero,
/// non-finite and out-of-range depths map to 0 (invalid).
pub fn depth_to_mm(depth: f32) -> u16 {
    let mm = (f64::from(depth) * 1000.0).round_ties_even();
    if mm.is_finite() && mm >= 1.0 && mm <= f64::from(u16::MAX) {
        mm as u16
    } else {
        0
    }
}

pub fn mm_to_depth(mm: u16) -> f32 {
    f32::from(mm) / 1000.0
}

/// Linear radiance to 8-bit sRGB.
pub fn rgb_to_srgb8(rgb: &Image<[f32; 3]>) -> Image<[u8; 3]> {
    rgb.map(|p| p.map(|v| (linear_to_srgb(v) * 255.0).round() as u8))
}

/// Unit normals to 16-bit channels via `(n + 1) / 2`.
pub fn normal_to_u16(n: &[f32; 3]) -> [u16; 3] {
    n.map(|v| ((f64::from(v).clamp(-1.0, 1.0) + 1.0) * 0.5 * 65535.0).round() as u16)
}

fn encode(img: DynamicImage, name: &str) -> Result<Vec<u8>, DatasetError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| DatasetError::Image {
        file: name.to_string(),
        message: e.to_string(),
    })?;
    Ok(buf.into_inner())
}

fn decode(bytes: &[u8], name: &str) -> Result<DynamicImage, DatasetError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| DatasetError::Image {
        file: name.to_string(),
        message: e.to_string(),
    })
}

fn wrong_kind(name: &str, expected: &str) -> DatasetError {
    DatasetError::Image {
        file: name.to_string(),
        message: format!("expected a {expected} PNG"),
    }
}

pub fn encode_rgb8(img: &Image<[u8; 3]>, name: &str) -> Result<Vec<u8>, DatasetError> {
    let raw: Vec<u8> = img.data.iter().flatten().copied().collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(img.width as u32, img.height as u32, raw)
        .expect("buffer matches dimensions");
    encode(DynamicImage::ImageRgb8(buf), name)
}

pub fn decode_rgb8(bytes: &[u8], name: &str) -> Result<Image<[u8; 3]>, DatasetError> {
    match decode(bytes, name)? {
        DynamicImage::ImageRgb8(b) => {
            let (w, h) = (b.width() as usize, b.height() as usize);
            Ok(Image::from_vec(w, h, b.pixels().map(|p| p.0).collect()))
        }
        _ => Err(wrong_kind(name, "8-bit RGB")),
    }
}

pub fn encode_rgb16(img: &Image<[u16; 3]>, name: &str) -> Result<Vec<u8>, DatasetError> {
    let raw: Vec<u16> = img.data.iter().flatten().copied().collect();
    let buf = ImageBuffer::<Rgb<u16>, _>::from_raw(img.width as u32, img.height as u32, raw)
        .expect("buffer matches dimensions");
    encode(DynamicImage::ImageRgb16(buf), name)
}

pub fn decode_rgb16(bytes: &[u8], name: &str) -> Result<Image<[u16; 3]>, DatasetError> {
    match decode(bytes, name)? {
        DynamicImage::ImageRgb16(b) => {
            let (w, h) = (b.width() as usize, b.height() as usize);
            Ok(Image::from_vec(w, h, b.pixels().map(|p| p.0).collect()))
        }
        _ => Err(wrong_kind(name, "16-bit RGB")),
    }
}

pub fn encode_gray16(img: &Image<u16>, name: &str) -> Result<Vec<u8>, DatasetError> {
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .expect("buffer matches dimensions");
    encode(DynamicImage::ImageLuma16(buf), name)
}

pub fn decode_gray16(bytes: &[u8], name: &str) -> Result<Image<u16>, DatasetError> {
    match decode(bytes, name)? {
        DynamicImage::ImageLuma16(b) => {
            let (w, h) = (b.width() as usize, b.height() as usize);
            Ok(Image::from_vec(w, h, b.into_raw()))
        }
        _ => Err(wrong_kind(name, "16-bit grayscale")),
    }
}

/// Middlebury `.flo`: magic, width, height, then interleaved `(u, v)`
/// little-endian f32 in row-major order.
pub fn encode_flo(flow: &Image<[f32; 2]>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.data.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for [u, v] in &flow.data {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8], name: &str) -> Result<Image<[f32; 2]>, DatasetError> {
    let bad = |m: &str| DatasetError::Image {
        file: name.to_string(),
        message: m.to_string(),
    };
    let word = |k: usize| -> [u8; 4] { bytes[4 * k..4 * k + 4].try_into().expect("4-byte slice") };
    if bytes.len() < 12 || f32::from_le_bytes(word(0)) != FLO_MAGIC {
        return Err(bad("not a .flo file"));
    }
    let (w, h) = (i32::from_le_bytes(word(1)), i32::from_le_bytes(word(2)));
    if w < 0 || h < 0 || bytes.len() != 12 + 8 * (w as usize) * (h as usize) {
        return Err(bad(".flo size does not match its header"));
    }
    let data = (0..(w as usize * h as usize))
        .map(|i| [f32::from_le_bytes(word(3 + 2 * i)), f32::from_le_bytes(word(4 + 2 * i))])
        .collect();
    Ok(Image::from_vec(w as usize, h as usize, data))
}
