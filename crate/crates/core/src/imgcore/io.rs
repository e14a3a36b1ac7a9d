//! PNG images and PFM scalar rasters.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, Luma, Rgb};

use super::types::{DisparityMap, ImageBuffer, Plane};
use crate::error::{Error, Result};

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn decode_err(path: &Path, reason: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Decodes an 8- or 16-bit PNG held in memory. Alpha, if present, is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    decode_png_named(bytes, Path::new("<memory>"))
}

fn decode_png_named(bytes: &[u8], name: &Path) -> Result<ImageBuffer> {
    let dynamic = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| decode_err(name, e))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let data: Vec<f64> = match dynamic {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => dynamic
            .to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => dynamic
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => {
            return Err(decode_err(
                name,
                format!("unsupported pixel format {:?}", other.color()),
            ))
        }
    };
    ImageBuffer::new(w, h, data)
}

/// Loads an 8- or 16-bit PNG as intensities in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    decode_png_named(&read_file(path)?, path)
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Encodes as an 8-bit RGB PNG.
pub fn encode_png(img: &ImageBuffer) -> Vec<u8> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
    let buf = image::ImageBuffer::<Rgb<u8>, _>::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

/// Encodes as a 16-bit RGB PNG.
pub fn encode_png16(img: &ImageBuffer) -> Vec<u8> {
    let words: Vec<u16> = img.data().iter().map(|&v| quantize(v, 65535.0) as u16).collect();
    let buf = image::ImageBuffer::<Rgb<u16>, _>::from_raw(img.width() as u32, img.height() as u32, words)
        .expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_png(img))
}

pub fn save_image16(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_png16(img))
}

/// Encodes a scalar raster as an 8-bit grayscale PNG, clamping to `[0, 1]`.
pub fn encode_gray_png(plane: &Plane) -> Vec<u8> {
    let bytes: Vec<u8> = plane.data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
    let buf = image::ImageBuffer::<Luma<u8>, _>::from_raw(plane.width() as u32, plane.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

/// Encodes a scalar raster as a single-channel little-endian PFM.
///
/// Rows are written bottom-up, as PFM requires.
pub fn write_pfm(plane: &Plane) -> Vec<u8> {
    let (w, h) = plane.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(plane.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

/// Parses a PFM file. Only single-channel (`Pf`) files are accepted.
pub fn read_pfm(bytes: &[u8]) -> Result<Plane> {
    read_pfm_named(bytes, Path::new("<memory>"))
}

fn read_pfm_named(bytes: &[u8], name: &Path) -> Result<Plane> {
    // Header: three whitespace-separated tokens lines, then one whitespace byte.
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(decode_err(name, "truncated PFM header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| decode_err(name, e))?);
    }
    pos += 1;
    match tokens[0] {
        "Pf" => {}
        "PF" => {
            return Err(Error::Validation(format!(
                "{}: disparity must be single-channel, found a 3-channel PFM",
                name.display()
            )))
        }
        other => return Err(decode_err(name, format!("bad PFM magic {other:?}"))),
    }
    let parse = |t: &str| t.parse::<usize>().map_err(|e| decode_err(name, e));
    let w = parse(tokens[1])?;
    let h = parse(tokens[2])?;
    let scale: f64 = tokens[3].parse().map_err(|e| decode_err(name, e))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(decode_err(name, "PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    let need = w * h * 4;
    let body = bytes
        .get(pos..pos + need)
        .ok_or_else(|| decode_err(name, "truncated PFM body"))?;
    let mut data = vec![0.0; w * h];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, row) = (i % w, i / w);
        data[(h - 1 - row) * w + x] = v as f64;
    }
    Plane::new(w, h, data)
}

pub fn save_pfm(plane: &Plane, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &write_pfm(plane))
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<Plane> {
    let path = path.as_ref();
    read_pfm_named(&read_file(path)?, path)
}

/// Decodes a disparity map from PFM bytes or a grayscale PNG (8 or 16 bit).
pub fn decode_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    decode_disparity_named(bytes, Path::new("<memory>"))
}

fn decode_disparity_named(bytes: &[u8], name: &Path) -> Result<DisparityMap> {
    if bytes.starts_with(b"Pf") || bytes.starts_with(b"PF") {
        return read_pfm_named(bytes, name).map(DisparityMap::new);
    }
    let dynamic = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| decode_err(name, e))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let data: Vec<f64> = match dynamic {
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        other => {
            return Err(Error::Validation(format!(
                "{}: disparity PNG must be single-channel grayscale, found {:?}",
                name.display(),
                other.color()
            )))
        }
    };
    Ok(DisparityMap::new(Plane::new(w, h, data)?))
}

/// Loads raw disparity values; normalization is left to the caller.
pub fn load_disparity(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    decode_disparity_named(&read_file(path)?, path)
}

pub fn save_disparity(d: &DisparityMap, path: impl AsRef<Path>) -> Result<()> {
    save_pfm(d, path)
}
