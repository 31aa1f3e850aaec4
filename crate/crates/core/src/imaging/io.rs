//! 8-bit PNG input/output and atomic file writes.
//!
//! Samples load as `v / 255` and save as `round(v * 255)` clamped to [0, 255].

use std::fs;
use std::io::Write;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

use super::buffer::{ImageRgb, Plane};
use crate::error::{Error, Result};

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn encode_png(path: &Path, bytes: &[u8], w: usize, h: usize, color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf)
        .write_image(bytes, w as u32, h as u32, color)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf)
}

pub fn encode_rgb_png(image: &ImageRgb) -> Result<Vec<u8>> {
    let (w, h) = image.dims();
    let mut bytes = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                bytes.push(quantize(image.get(x, y, c)));
            }
        }
    }
    encode_png(Path::new("<memory>"), &bytes, w, h, ExtendedColorType::Rgb8)
}

pub fn save_rgb(image: &ImageRgb, path: &Path) -> Result<()> {
    write_atomic(path, &encode_rgb_png(image)?)
}

pub fn save_plane(plane: &Plane, path: &Path) -> Result<()> {
    let (w, h) = plane.dims();
    let bytes: Vec<u8> = plane.data().iter().map(|&v| quantize(v)).collect();
    let png = encode_png(path, &bytes, w, h, ExtendedColorType::L8)?;
    write_atomic(path, &png)
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|source| {
        Error::Image {
            path: path.to_path_buf(),
            source,
        }
    })
}

/// Loads any PNG as RGB; gray inputs are replicated, alpha is dropped.
pub fn load_rgb(path: &Path) -> Result<ImageRgb> {
    let rgb = open(path)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Ok(ImageRgb::from_fn(w, h, |x, y| {
        let p = rgb.get_pixel(x as u32, y as u32).0;
        [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
    }))
}

/// Loads a PNG as a single channel (luma of colour inputs).
pub fn load_plane(path: &Path) -> Result<Plane> {
    let luma = open(path)?.to_luma8();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    Ok(Plane::from_fn(w, h, |x, y| {
        luma.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0
    }))
}
