use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{gaussian_taps, ImageRgb};

/// PSNR in dB over all channels; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &ImageRgb, b: &ImageRgb, peak: f64) -> Result<f64> {
    a.check_same_dims(b)?;
    if !(peak > 0.0) {
        return Err(Error::InvalidInput(format!("psnr peak must be positive, got {peak}")));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("psnr of empty images".into()));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean absolute difference over all samples.
pub fn l1_loss(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    a.check_same_dims(b)?;
    if a.is_empty() {
        return Err(Error::InvalidInput("l1 of empty images".into()));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.data().len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the samples.
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

/// Gaussian-weighted sums over every fully-contained window ("valid" mode).
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().zip(&row[x..x + n]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (k, t) in taps.iter().enumerate() {
            let src_row = &tmp[(y + k) * ow..(y + k + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src_row) {
                *o += t * s;
            }
        }
    }
    out
}

/// Mean SSIM over all valid window positions and the three channels.
pub fn ssim(a: &ImageRgb, b: &ImageRgb, p: &SsimParams) -> Result<f64> {
    a.check_same_dims(b)?;
    if p.window == 0 || p.window.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("ssim window must be odd, got {}", p.window)));
    }
    if !(p.peak > 0.0) {
        return Err(Error::InvalidInput("ssim peak must be positive".into()));
    }
    let (w, h) = a.dims();
    if w < p.window || h < p.window {
        return Err(Error::InvalidInput(format!(
            "image {w}x{h} is smaller than the {} px ssim window",
            p.window
        )));
    }
    let taps = gaussian_taps(p.sigma, p.window / 2)?;
    let c1 = (p.k1 * p.peak).powi(2);
    let c2 = (p.k2 * p.peak).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        let x = a.channel(c);
        let y = b.channel(c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(u, v)| u * v).collect();
        let mx = filter_valid(x, w, h, &taps);
        let my = filter_valid(y, w, h, &taps);
        let sxx = filter_valid(&xx, w, h, &taps);
        let syy = filter_valid(&yy, w, h, &taps);
        let sxy = filter_valid(&xy, w, h, &taps);
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        count += mx.len();
    }
    Ok(total / count as f64)
}
