//! Light-source extraction and glow synthesis.
//!
//! The flared image is `clip(alpha * X + beta * (L * K), [0, 1])` where `L` is
//! a soft light-source map, `K` a heavy-tailed radial kernel and `beta` scales
//! with the fraction of pixels that belong to light sources.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{convolve2d, luminance, Border, ImageRgb, Kernel2d, Plane};

/// Light sources must reach this luminance regardless of the percentile.
pub const ABSOLUTE_LIGHT_FLOOR: f64 = 0.85;
/// Regularizer of the guided feathering step.
pub const FEATHER_EPS: f64 = 1e-3;
/// Pixels with `L` above this count toward the light-pixel fraction.
pub const LIGHT_PIXEL_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApsfParams {
    pub size: usize,
    /// Scale of the radial profile in pixels.
    pub sigma: f64,
    /// Tail exponent.
    pub gamma: f64,
}

impl Default for ApsfParams {
    fn default() -> Self {
        Self {
            size: 31,
            sigma: 2.0,
            gamma: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlareParams {
    /// Preservation factor of the clean image.
    pub alpha: f64,
    /// Blend weight reached once the light fraction hits `rho_ref`.
    pub beta_base: f64,
    pub rho_ref: f64,
    /// Luminance percentile in (0, 100) a light pixel must reach.
    pub tau: f64,
    /// Guided feathering radius in pixels.
    pub feather: usize,
    pub apsf: ApsfParams,
}

impl Default for FlareParams {
    fn default() -> Self {
        Self {
            alpha: 0.995,
            beta_base: 0.8,
            rho_ref: 0.01,
            tau: 98.0,
            feather: 3,
            apsf: ApsfParams::default(),
        }
    }
}

impl FlareParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "flare alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta_base >= 0.0) || !self.beta_base.is_finite() {
            return Err(Error::InvalidInput("flare beta_base must be >= 0".into()));
        }
        if !(self.rho_ref > 0.0) {
            return Err(Error::InvalidInput("flare rho_ref must be > 0".into()));
        }
        if !(self.tau > 0.0 && self.tau < 100.0) {
            return Err(Error::InvalidInput(format!(
                "flare percentile must be in (0, 100), got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// `beta_base * min(1, rho / rho_ref)`.
    pub fn beta_for(&self, rho: f64) -> f64 {
        self.beta_base * (rho / self.rho_ref).min(1.0)
    }
}

/// Normalized kernel with weights proportional to `(1 + r / sigma)^-gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApsfKernel {
    pub params: ApsfParams,
    kernel: Kernel2d,
}

impl ApsfKernel {
    pub fn kernel(&self) -> &Kernel2d {
        &self.kernel
    }
}

pub fn apsf_kernel(size: usize, sigma: f64, gamma: f64) -> Result<ApsfKernel> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "apsf kernel size must be odd and >= 3, got {size}"
        )));
    }
    if !(sigma > 0.0) || !(gamma > 0.0) {
        return Err(Error::InvalidInput("apsf sigma and gamma must be positive".into()));
    }
    let c = (size / 2) as f64;
    let mut weights = Vec::with_capacity(size * size);
    for j in 0..size {
        for i in 0..size {
            let r = ((i as f64 - c).powi(2) + (j as f64 - c).powi(2)).sqrt();
            weights.push((1.0 + r / sigma).powf(-gamma));
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(ApsfKernel {
        params: ApsfParams { size, sigma, gamma },
        kernel: Kernel2d::new(size, weights)?,
    })
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Mean over the `(2r+1)^2` window clipped to the plane.
fn box_mean(p: &Plane, r: usize) -> Plane {
    let (w, h) = p.dims();
    let mut integral = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += p.get(x, y);
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    Plane::from_fn(w, h, |x, y| {
        let x0 = x.saturating_sub(r);
        let y0 = y.saturating_sub(r);
        let x1 = (x + r + 1).min(w);
        let y1 = (y + r + 1).min(h);
        let s = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1]
            - integral[y1 * (w + 1) + x0]
            + integral[y0 * (w + 1) + x0];
        s / ((x1 - x0) * (y1 - y0)) as f64
    })
}

/// Edge-aware feathering of `mask` steered by `guide` (a local linear model
/// `q = a * guide + b` fitted per window, then averaged).
fn guided_feather(guide: &Plane, mask: &Plane, radius: usize, eps: f64) -> Plane {
    let (w, h) = guide.dims();
    let mean_i = box_mean(guide, radius);
    let mean_p = box_mean(mask, radius);
    let ip = Plane::from_fn(w, h, |x, y| guide.get(x, y) * mask.get(x, y));
    let ii = guide.map(|v| v * v);
    let mean_ip = box_mean(&ip, radius);
    let mean_ii = box_mean(&ii, radius);
    let a = Plane::from_fn(w, h, |x, y| {
        let cov = mean_ip.get(x, y) - mean_i.get(x, y) * mean_p.get(x, y);
        let var = mean_ii.get(x, y) - mean_i.get(x, y).powi(2);
        cov / (var + eps)
    });
    let b = Plane::from_fn(w, h, |x, y| mean_p.get(x, y) - a.get(x, y) * mean_i.get(x, y));
    let mean_a = box_mean(&a, radius);
    let mean_b = box_mean(&b, radius);
    Plane::from_fn(w, h, |x, y| {
        (mean_a.get(x, y) * guide.get(x, y) + mean_b.get(x, y)).clamp(0.0, 1.0)
    })
}

/// Soft light-source map in [0, 1].
///
/// Hard mask: luminance at or above both the `tau` percentile and
/// [`ABSOLUTE_LIGHT_FLOOR`]. The mask is then feathered by a guided filter
/// over `(2 * feather + 1)^2` windows with the luminance as guide.
pub fn extract_light_sources(image: &ImageRgb, tau: f64, feather: usize) -> Result<Plane> {
    if !(tau > 0.0 && tau < 100.0) {
        return Err(Error::InvalidInput(format!("percentile must be in (0, 100), got {tau}")));
    }
    if image.is_empty() {
        return Err(Error::InvalidInput("cannot extract lights from an empty image".into()));
    }
    let lum = luminance(image);
    let cut = percentile(lum.data(), tau).max(ABSOLUTE_LIGHT_FLOOR);
    let hard = lum.map(|v| if v >= cut { 1.0 } else { 0.0 });
    if feather == 0 || hard.data().iter().all(|&v| v == 0.0) {
        return Ok(hard);
    }
    Ok(guided_feather(&lum, &hard, feather, FEATHER_EPS))
}

/// Fraction of pixels with `L` above [`LIGHT_PIXEL_LEVEL`].
pub fn light_fraction(light: &Plane) -> f64 {
    if light.is_empty() {
        return 0.0;
    }
    light.data().iter().filter(|&&v| v > LIGHT_PIXEL_LEVEL).count() as f64 / light.data().len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlareOutput {
    pub image: ImageRgb,
    pub beta: f64,
    pub rho: f64,
}

pub fn apply_flare(
    image: &ImageRgb,
    light: &Plane,
    kernel: &ApsfKernel,
    p: &FlareParams,
) -> Result<FlareOutput> {
    p.validate()?;
    if light.dims() != image.dims() {
        return Err(Error::dims(image.dims(), light.dims()));
    }
    let rho = light_fraction(light);
    let beta = p.beta_for(rho);
    let mut out = image.map(|v| p.alpha * v);
    if beta > 0.0 {
        let glow = convolve2d(light, kernel.kernel(), Border::Replicate)?;
        for c in 0..3 {
            for (v, g) in out.channel_mut(c).iter_mut().zip(glow.data()) {
                *v = (*v + beta * g).clamp(0.0, 1.0);
            }
        }
    } else {
        out = out.clamp01();
    }
    Ok(FlareOutput {
        image: out,
        beta,
        rho,
    })
}

/// Extraction, kernel construction and blending in one call.
#[derive(Debug, Clone, PartialEq)]
pub struct FlareResult {
    pub image: ImageRgb,
    pub light: Plane,
    pub beta: f64,
    pub rho: f64,
}

pub fn synthesize_flare(image: &ImageRgb, p: &FlareParams) -> Result<FlareResult> {
    p.validate()?;
    let light = extract_light_sources(image, p.tau, p.feather)?;
    let kernel = apsf_kernel(p.apsf.size, p.apsf.sigma, p.apsf.gamma)?;
    let out = apply_flare(image, &light, &kernel, p)?;
    Ok(FlareResult {
        image: out.image,
        light,
        beta: out.beta,
        rho: out.rho,
    })
}
