//! Single-scale Retinex decomposition and three-level prior pyramids.
//!
//! Illumination is the Gaussian-blurred per-pixel maximum channel, clamped to
//! `[eps, 1]`; reflectance is the image divided by illumination per channel and
//! is left unclamped so that `reflectance * illumination` reconstructs the input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur, resize_bilinear, Border, ImageRgb, Plane};

pub const DEFAULT_BLUR_SIGMA: f64 = 5.0;
pub const DEFAULT_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetinexParams {
    pub blur_sigma: f64,
    pub eps: f64,
}

impl Default for RetinexParams {
    fn default() -> Self {
        Self {
            blur_sigma: DEFAULT_BLUR_SIGMA,
            eps: DEFAULT_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetinexPair {
    pub illumination: Plane,
    pub reflectance: ImageRgb,
}

impl RetinexPair {
    /// Illumination pyramid plus one reflectance pyramid per channel.
    pub fn priors(&self) -> Result<(PriorPyramid, [PriorPyramid; 3])> {
        let illum = prior_pyramid(&self.illumination)?;
        let refl = [
            prior_pyramid(&self.reflectance.plane(0))?,
            prior_pyramid(&self.reflectance.plane(1))?,
            prior_pyramid(&self.reflectance.plane(2))?,
        ];
        Ok((illum, refl))
    }
}

pub fn decompose(image: &ImageRgb, blur_sigma: f64, eps: f64) -> Result<RetinexPair> {
    if !(blur_sigma > 0.0) || !blur_sigma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "retinex blur sigma must be positive, got {blur_sigma}"
        )));
    }
    if !(eps > 0.0 && eps <= 0.1) {
        return Err(Error::InvalidInput(format!("retinex eps must be in (0, 0.1], got {eps}")));
    }
    if image.is_empty() {
        return Err(Error::InvalidInput("cannot decompose an empty image".into()));
    }
    let illumination =
        gaussian_blur(&image.max_channel(), blur_sigma, Border::Replicate)?.map(|v| v.clamp(eps, 1.0));
    let n = illumination.data().len();
    let mut reflectance = image.clone();
    for c in 0..3 {
        for (r, &i) in reflectance.channel_mut(c).iter_mut().zip(illumination.data()) {
            *r /= i;
        }
    }
    debug_assert_eq!(reflectance.channel(0).len(), n);
    Ok(RetinexPair {
        illumination,
        reflectance,
    })
}

pub fn decompose_with(image: &ImageRgb, params: &RetinexParams) -> Result<RetinexPair> {
    decompose(image, params.blur_sigma, params.eps)
}

/// Full, half and quarter resolution copies of a plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorPyramid {
    pub level1: Plane,
    pub level2: Plane,
    pub level3: Plane,
}

impl PriorPyramid {
    pub fn levels(&self) -> [&Plane; 3] {
        [&self.level1, &self.level2, &self.level3]
    }
}

fn halve(p: &Plane) -> Result<Plane> {
    resize_bilinear(p, p.width().div_ceil(2), p.height().div_ceil(2))
}

pub fn prior_pyramid(plane: &Plane) -> Result<PriorPyramid> {
    if plane.width() < 4 || plane.height() < 4 {
        return Err(Error::InvalidInput(format!(
            "prior pyramid needs at least 4x4, got {}x{}",
            plane.width(),
            plane.height()
        )));
    }
    let level2 = halve(plane)?;
    let level3 = halve(&level2)?;
    Ok(PriorPyramid {
        level1: plane.clone(),
        level2,
        level3,
    })
}
