//! Rain streaks from interpolated Gaussian noise.
//!
//! Pipeline: low-resolution N(0, 1) grid, bilinear upsample to the image size,
//! keep only samples above the `(1 - density)` quantile (rescaled to [0, 1]
//! and dropped when below `threshold`), smear along the rain direction with a
//! normalized line kernel, then scale so the brightest streak equals
//! `intensity`. The same value is added to all three channels.

use serde::{Deserialize, Serialize};

use super::{check_unit, ResidualLayer};
use crate::error::{Error, Result};
use crate::imaging::{convolve2d, resize_bilinear, Border, ImageRgb, Kernel2d, Plane, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RainStreakParams {
    /// Streak direction in degrees from vertical.
    pub angle_deg: f64,
    /// Streak length in pixels.
    pub length: f64,
    /// Fraction of upsampled noise samples that seed a streak.
    pub density: f64,
    /// Seeds weaker than this (after rescaling to [0, 1]) are discarded.
    pub threshold: f64,
    /// Ratio between image size and noise grid size.
    pub upsample: usize,
    /// Peak brightness of the streak layer.
    pub intensity: f64,
}

impl Default for RainStreakParams {
    fn default() -> Self {
        Self {
            angle_deg: 10.0,
            length: 15.0,
            density: 0.04,
            threshold: 0.1,
            upsample: 2,
            intensity: 0.7,
        }
    }
}

impl RainStreakParams {
    fn validate(&self) -> Result<()> {
        check_unit("rain density", self.density)?;
        check_unit("rain threshold", self.threshold)?;
        check_unit("rain intensity", self.intensity)?;
        if self.upsample == 0 {
            return Err(Error::InvalidInput("rain upsample factor must be >= 1".into()));
        }
        if !(self.length >= 1.0) || !self.length.is_finite() {
            return Err(Error::InvalidInput(format!(
                "rain streak length must be >= 1, got {}",
                self.length
            )));
        }
        if !self.angle_deg.is_finite() {
            return Err(Error::InvalidInput("rain angle must be finite".into()));
        }
        Ok(())
    }
}

fn bresenham(x0: isize, y0: isize, x1: isize, y1: isize) -> Vec<(isize, isize)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y) = (x0, y0);
    let mut err = dx + dy;
    let mut pts = Vec::new();
    loop {
        pts.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    pts
}

/// Normalized motion-blur kernel: a Bresenham line through the kernel
/// center, `angle_deg` from vertical, spanning `length` pixels.
pub fn line_kernel(angle_deg: f64, length: f64) -> Result<Kernel2d> {
    if !(length >= 1.0) {
        return Err(Error::InvalidInput(format!("line length must be >= 1, got {length}")));
    }
    let radius = (length / 2.0).floor() as usize;
    let size = 2 * radius + 1;
    let r = radius as f64;
    let theta = angle_deg.to_radians();
    let dx = (r * theta.sin()).round() as isize;
    let dy = (r * theta.cos()).round() as isize;
    let c = radius as isize;
    let mut weights = vec![0.0; size * size];
    let pts = bresenham(c - dx, c - dy, c + dx, c + dy);
    for &(x, y) in &pts {
        weights[y as usize * size + x as usize] = 1.0;
    }
    let n = weights.iter().sum::<f64>();
    weights.iter_mut().for_each(|w| *w /= n);
    Kernel2d::new(size, weights)
}

fn streak_seeds(noise: &Plane, density: f64, threshold: f64) -> Plane {
    let mut sorted = noise.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((1.0 - density) * (n - 1) as f64).floor() as usize;
    let q = sorted[idx.min(n - 1)];
    let top = sorted[n - 1];
    let span = top - q;
    noise.map(|v| {
        if v <= q || span <= 0.0 {
            return 0.0;
        }
        let s = (v - q) / span;
        if s < threshold {
            0.0
        } else {
            s
        }
    })
}

pub fn gen_rain_streak(
    image: &ImageRgb,
    p: &RainStreakParams,
    rng: &mut SeededRng,
) -> Result<ResidualLayer> {
    p.validate()?;
    let (w, h) = image.dims();
    if p.density == 0.0 || image.is_empty() {
        return Ok(ResidualLayer::zeros(w, h));
    }
    let (lw, lh) = (w.div_ceil(p.upsample), h.div_ceil(p.upsample));
    let low = Plane::from_fn(lw, lh, |_, _| rng.normal());
    let noise = resize_bilinear(&low, w, h)?;
    let seeds = streak_seeds(&noise, p.density, p.threshold);
    let kernel = line_kernel(p.angle_deg, p.length)?;
    let streaks = convolve2d(&seeds, &kernel, Border::Replicate)?;
    let (_, peak) = streaks.min_max();
    let layer = if peak > 0.0 {
        streaks.map(|v| (p.intensity * v / peak).max(0.0))
    } else {
        Plane::new(w, h, 0.0)
    };
    Ok(ResidualLayer(ImageRgb::from_gray(&layer)))
}
