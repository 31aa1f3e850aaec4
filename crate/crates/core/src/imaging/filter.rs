use serde::{Deserialize, Serialize};

use super::buffer::Plane;
use crate::error::{Error, Result};

/// How samples outside the plane are synthesized during filtering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Border {
    /// Clamp to the nearest edge sample.
    #[default]
    Replicate,
    /// Mirror about the edge, repeating the edge sample (`cba|abc|cba`).
    Reflect,
}

impl Border {
    #[inline]
    pub fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        if (0..n).contains(&i) {
            return i as usize;
        }
        match self {
            Border::Replicate => i.clamp(0, n - 1) as usize,
            Border::Reflect => {
                let period = 2 * n;
                let m = i.rem_euclid(period);
                if m < n {
                    m as usize
                } else {
                    (period - 1 - m) as usize
                }
            }
        }
    }
}

/// Square odd-sized filter kernel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel2d {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::InvalidInput(format!(
                "kernel of size {size} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidInput("kernel weights must be finite".into()));
        }
        Ok(Self { size, weights })
    }

    pub fn identity() -> Self {
        Self {
            size: 1,
            weights: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[j * self.size + i]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// 2D convolution with the kernel flipped, output the same size as the input.
pub fn convolve2d(image: &Plane, kernel: &Kernel2d, border: Border) -> Result<Plane> {
    if image.is_empty() {
        return Err(Error::InvalidInput("cannot convolve an empty plane".into()));
    }
    let (w, h) = image.dims();
    let r = kernel.radius() as isize;
    let size = kernel.size();
    let xs: Vec<Vec<usize>> = (0..w as isize)
        .map(|x| (0..size as isize).map(|i| border.index(x + r - i, w)).collect())
        .collect();
    let src = image.data();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for col in &xs {
            let mut acc = 0.0;
            for j in 0..size {
                let sy = border.index(y + r - j as isize, h);
                let row = &src[sy * w..(sy + 1) * w];
                let krow = &kernel.weights[j * size..(j + 1) * size];
                for (k, &sx) in krow.iter().zip(col) {
                    acc += k * row[sx];
                }
            }
            out.push(acc);
        }
    }
    Plane::from_vec(w, h, out)
}

/// Normalized 1D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_taps(sigma: f64, radius: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let r = radius as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    Ok(taps)
}

/// Normalized 2D Gaussian kernel of side `2 * radius + 1`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Kernel2d> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let size = 2 * radius + 1;
    let r = radius as isize;
    let mut weights = Vec::with_capacity(size * size);
    for j in -r..=r {
        for i in -r..=r {
            weights.push((-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Kernel2d::new(size, weights)
}

/// Radius used by [`gaussian_blur`]: `ceil(3 * sigma)`.
pub fn blur_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil().max(0.0) as usize
}

/// Separable Gaussian blur. `sigma == 0` returns the input unchanged.
pub fn gaussian_blur(plane: &Plane, sigma: f64, border: Border) -> Result<Plane> {
    if sigma == 0.0 {
        return Ok(plane.clone());
    }
    if plane.is_empty() {
        return Err(Error::InvalidInput("cannot blur an empty plane".into()));
    }
    let radius = blur_radius(sigma);
    let taps = gaussian_taps(sigma, radius)?;
    let (w, h) = plane.dims();
    let r = radius as isize;
    let src = plane.data();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w as isize {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[border.index(x + k as isize - r, w)];
            }
            tmp[y * w + x as usize] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for (k, t) in taps.iter().enumerate() {
            let sy = border.index(y + k as isize - r, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y as usize * w..(y as usize + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    Plane::from_vec(w, h, out)
}

/// Bilinear resampling with pixel-center alignment:
/// source coordinate = (dst + 0.5) * (src_size / dst_size) - 0.5, clamped to the edge.
pub fn resize_bilinear(plane: &Plane, new_width: usize, new_height: usize) -> Result<Plane> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::InvalidInput(format!(
            "target size must be at least 1x1, got {new_width}x{new_height}"
        )));
    }
    if plane.is_empty() {
        return Err(Error::InvalidInput("cannot resize an empty plane".into()));
    }
    let (w, h) = plane.dims();
    let axis = |n_src: usize, n_dst: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_src as f64 / n_dst as f64;
        (0..n_dst)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_src - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(w, new_width);
    let ys = axis(h, new_height);
    let mut out = Vec::with_capacity(new_width * new_height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = plane.get(x0, y0) * (1.0 - fx) + plane.get(x1, y0) * fx;
            let bottom = plane.get(x0, y1) * (1.0 - fx) + plane.get(x1, y1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Plane::from_vec(new_width, new_height, out)
}
