//! Snow as a screen-style brightening under a flake mask.
//!
//! Procedural masks are unions (pointwise max) of filled ellipses, each
//! blurred with its own Gaussian. File masks are single-channel PNGs, white
//! meaning flake, rescaled by a random factor and tiled from a random offset.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{check_unit, ResidualLayer};
use crate::error::{Error, Result};
use crate::imaging::{
    blur_radius, gaussian_blur, io, resize_bilinear, Border, ImageRgb, Plane, SeededRng,
};

/// One procedural flake per this many pixels at density 1.
pub const PIXELS_PER_FLAKE: f64 = 32.0;
/// Flake blur sigma as a fraction of its minor semi-axis.
pub const FLAKE_BLUR_RATIO: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSource {
    Procedural,
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnowParams {
    pub source: MaskSource,
    /// Procedural: flake count is `round(density * area / 32)`.
    /// File: opacity applied to the loaded mask.
    pub density: f64,
    /// Procedural: range of the major semi-axis in pixels.
    /// File: range of the mask rescale factor.
    pub scale_min: f64,
    pub scale_max: f64,
    pub brightness: f64,
}

impl Default for SnowParams {
    fn default() -> Self {
        Self {
            source: MaskSource::Procedural,
            density: 0.3,
            scale_min: 0.8,
            scale_max: 2.5,
            brightness: 0.9,
        }
    }
}

impl SnowParams {
    fn validate(&self) -> Result<()> {
        check_unit("snow density", self.density)?;
        check_unit("snow brightness", self.brightness)?;
        if !(self.scale_min > 0.0 && self.scale_max >= self.scale_min) {
            return Err(Error::InvalidInput(format!(
                "snow scale range invalid: [{}, {}]",
                self.scale_min, self.scale_max
            )));
        }
        Ok(())
    }
}

/// Union of blurred random ellipses, values in [0, 1].
///
/// Per flake the stream yields: center x, center y, major semi-axis, minor/major
/// ratio in [0.5, 1), rotation in [0, pi).
pub fn procedural_snow_mask(
    width: usize,
    height: usize,
    p: &SnowParams,
    rng: &mut SeededRng,
) -> Result<Plane> {
    let mut mask = Plane::new(width, height, 0.0);
    let count = (p.density * (width * height) as f64 / PIXELS_PER_FLAKE).round() as usize;
    for _ in 0..count {
        let cx = rng.uniform() * width as f64;
        let cy = rng.uniform() * height as f64;
        let a = rng.uniform_range(p.scale_min, p.scale_max);
        let b = a * rng.uniform_range(0.5, 1.0);
        let rot = rng.uniform() * std::f64::consts::PI;
        let sigma = FLAKE_BLUR_RATIO * b;

        // Local tile with a zero margin wider than the blur support, so
        // replicated borders inside the tile behave like zero padding.
        let margin = a.ceil() as isize + blur_radius(sigma) as isize + 1;
        let (fx, fy) = (cx.floor() as isize, cy.floor() as isize);
        let (tx0, ty0) = (fx - margin, fy - margin);
        let side = (2 * margin + 1) as usize;
        let (sin, cos) = rot.sin_cos();
        let tile = Plane::from_fn(side, side, |i, j| {
            let dx = (tx0 + i as isize) as f64 - cx;
            let dy = (ty0 + j as isize) as f64 - cy;
            let u = (dx * cos + dy * sin) / a;
            let v = (-dx * sin + dy * cos) / b;
            if u * u + v * v <= 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let tile = gaussian_blur(&tile, sigma, Border::Replicate)?;
        for j in 0..side {
            let y = ty0 + j as isize;
            if y < 0 || y >= height as isize {
                continue;
            }
            for i in 0..side {
                let x = tx0 + i as isize;
                if x < 0 || x >= width as isize {
                    continue;
                }
                let (x, y) = (x as usize, y as usize);
                let v = tile.get(i, j).clamp(0.0, 1.0);
                if v > mask.get(x, y) {
                    mask.set(x, y, v);
                }
            }
        }
    }
    Ok(mask)
}

fn tiled_mask(
    width: usize,
    height: usize,
    source: &Plane,
    p: &SnowParams,
    rng: &mut SeededRng,
) -> Result<Plane> {
    if source.is_empty() {
        return Err(Error::InvalidInput("snow mask is empty".into()));
    }
    let s = rng.uniform_range(p.scale_min, p.scale_max);
    let mw = ((source.width() as f64 * s).round() as usize).max(1);
    let mh = ((source.height() as f64 * s).round() as usize).max(1);
    let scaled = resize_bilinear(source, mw, mh)?;
    let ox = rng.below(mw);
    let oy = rng.below(mh);
    Ok(Plane::from_fn(width, height, |x, y| {
        p.density * scaled.get((x + ox) % mw, (y + oy) % mh).clamp(0.0, 1.0)
    }))
}

fn apply_mask(image: &ImageRgb, mask: &Plane, brightness: f64) -> ResidualLayer {
    let mut out = image.clone();
    for c in 0..3 {
        for (v, &m) in out.channel_mut(c).iter_mut().zip(mask.data()) {
            *v = m * brightness * (1.0 - *v);
        }
    }
    ResidualLayer(out)
}

/// `m * brightness * (1 - X)`; the composite brightens toward white.
pub fn gen_snow(image: &ImageRgb, p: &SnowParams, rng: &mut SeededRng) -> Result<ResidualLayer> {
    p.validate()?;
    let (w, h) = image.dims();
    let mask = match &p.source {
        MaskSource::Procedural => procedural_snow_mask(w, h, p, rng)?,
        MaskSource::File { path } => tiled_mask(w, h, &io::load_plane(path)?, p, rng)?,
    };
    Ok(apply_mask(image, &mask, p.brightness))
}

/// Same as [`gen_snow`] with an in-memory mask in place of the file source.
pub fn gen_snow_from_mask(
    image: &ImageRgb,
    mask: &Plane,
    p: &SnowParams,
    rng: &mut SeededRng,
) -> Result<ResidualLayer> {
    p.validate()?;
    let (w, h) = image.dims();
    Ok(apply_mask(image, &tiled_mask(w, h, mask, p, rng)?, p.brightness))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> ImageRgb {
        ImageRgb::from_fn(16, 16, |x, y| [x as f64 / 15.0, y as f64 / 15.0, 0.3])
    }

    #[test]
    fn zero_density_is_zero() {
        let p = SnowParams {
            density: 0.0,
            ..Default::default()
        };
        assert!(gen_snow(&img(), &p, &mut SeededRng::new(3, "snow")).unwrap().is_zero());
        let fp = SnowParams {
            density: 0.0,
            ..Default::default()
        };
        let r = gen_snow_from_mask(&img(), &Plane::new(4, 4, 1.0), &fp, &mut SeededRng::new(3, "snow"));
        assert!(r.unwrap().is_zero());
    }

    #[test]
    fn full_mask_full_brightness_is_white() {
        let p = SnowParams {
            density: 1.0,
            scale_min: 1.0,
            scale_max: 1.0,
            brightness: 1.0,
            ..Default::default()
        };
        let image = img();
        let r = gen_snow_from_mask(&image, &Plane::new(5, 3, 1.0), &p, &mut SeededRng::new(3, "snow"))
            .unwrap();
        for (res, x) in r.image().data().iter().zip(image.data()) {
            assert!((res - (1.0 - x)).abs() < 1e-12);
            assert!((res + x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_mask_file_is_io_error() {
        let p = SnowParams {
            source: MaskSource::File {
                path: PathBuf::from("/nonexistent/mask.png"),
            },
            ..Default::default()
        };
        let err = gen_snow(&img(), &p, &mut SeededRng::new(3, "snow")).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn residual_non_negative_and_deterministic() {
        let p = SnowParams::default();
        let a = gen_snow(&img(), &p, &mut SeededRng::new(8, "snow")).unwrap();
        let b = gen_snow(&img(), &p, &mut SeededRng::new(8, "snow")).unwrap();
        assert_eq!(a, b);
        assert!(a.image().data().iter().all(|&v| v >= 0.0));
        assert!(!a.is_zero());
    }

    /// Three flakes on 16x16 (density 0.375 -> round(0.375 * 256 / 32) = 3),
    /// checked against an oracle that rasterizes each ellipse onto a large
    /// zero canvas and blurs it with a direct 2D Gaussian sum.
    #[test]
    fn three_flakes_match_ellipse_oracle() {
        let p = SnowParams {
            source: MaskSource::Procedural,
            density: 0.375,
            scale_min: 1.5,
            scale_max: 3.0,
            brightness: 0.8,
        };
        let image = img();
        let got = gen_snow(&image, &p, &mut SeededRng::new(77, "snow")).unwrap();

        let mut rng = SeededRng::new(77, "snow");
        let pad = 12isize;
        let side = 16 + 2 * pad as usize;
        let mut mask = vec![0.0f64; 256];
        for _ in 0..3 {
            let cx = rng.uniform() * 16.0;
            let cy = rng.uniform() * 16.0;
            let a = 1.5 + 1.5 * rng.uniform();
            let b = a * (0.5 + 0.5 * rng.uniform());
            let rot = rng.uniform() * std::f64::consts::PI;
            let sigma = 0.35 * b;
            let r = (3.0 * sigma).ceil() as isize;
            let mut canvas = vec![0.0f64; side * side];
            for j in 0..side {
                for i in 0..side {
                    let dx = (i as isize - pad) as f64 - cx;
                    let dy = (j as isize - pad) as f64 - cy;
                    let u = (dx * rot.cos() + dy * rot.sin()) / a;
                    let v = (-dx * rot.sin() + dy * rot.cos()) / b;
                    if u * u + v * v <= 1.0 {
                        canvas[j * side + i] = 1.0;
                    }
                }
            }
            let mut norm = 0.0;
            for j in -r..=r {
                for i in -r..=r {
                    norm += (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
                }
            }
            for y in 0..16isize {
                for x in 0..16isize {
                    let mut acc = 0.0;
                    for j in -r..=r {
                        for i in -r..=r {
                            let (sx, sy) = (x + pad + i, y + pad + j);
                            let wgt = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
                            acc += wgt * canvas[sy as usize * side + sx as usize];
                        }
                    }
                    let v = (acc / norm).clamp(0.0, 1.0);
                    let k = (y * 16 + x) as usize;
                    mask[k] = mask[k].max(v);
                }
            }
        }
        for y in 0..16 {
            for x in 0..16 {
                for c in 0..3 {
                    let expected = mask[y * 16 + x] * 0.8 * (1.0 - image.get(x, y, c));
                    assert!((got.image().get(x, y, c) - expected).abs() < 1e-9, "({x},{y})");
                }
            }
        }
        assert!(!got.is_zero());
    }
}
