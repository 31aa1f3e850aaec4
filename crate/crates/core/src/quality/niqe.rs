//! NIQE: distance between the natural-scene statistics of a test image and a
//! multivariate Gaussian fitted to a pristine corpus.
//!
//! Features are computed on the luminance plane scaled to `[0, 255]`. Each
//! patch yields 18 features per scale (two scales, the second a 2x box
//! downsample):
//!
//! ```text
//! [ggd_alpha, ggd_var,
//!  for each of H, V, D1, D2: aggd_alpha, aggd_mean, left_var, right_var]
//! ```

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::imaging::{gaussian_taps, luminance, resize_bilinear, Border, ImageRgb, Plane};

pub const FEATURE_COUNT: usize = 36;
pub const DEFAULT_PATCH_SIZE: usize = 96;
pub const DEFAULT_SHARPNESS_FRACTION: f64 = 0.75;

/// MSCN local window: 7x7 Gaussian, sigma 7/6.
pub const MSCN_RADIUS: usize = 3;
pub const MSCN_SIGMA: f64 = 7.0 / 6.0;
/// Stabilizing constant in the MSCN denominator (luminance in 0..255).
pub const MSCN_C: f64 = 1.0;

/// Second moments below this are treated as a degenerate (constant)
/// distribution: the shape is reported as `DEGENERATE_ALPHA` and all
/// scale/mean terms as zero.
pub const VARIANCE_FLOOR: f64 = 1e-10;
pub const DEGENERATE_ALPHA: f64 = 2.0;

pub const ALPHA_MIN: f64 = 0.2;
pub const ALPHA_MAX: f64 = 10.0;
pub const ALPHA_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiqeModel {
    pub patch_size: usize,
    pub sharpness_fraction: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl NiqeModel {
    pub fn validate(&self) -> Result<()> {
        check_patch_size(self.patch_size)?;
        if self.mean.len() != FEATURE_COUNT
            || self.cov.len() != FEATURE_COUNT
            || self.cov.iter().any(|r| r.len() != FEATURE_COUNT)
        {
            return Err(Error::InvalidInput(format!(
                "niqe model must have a {FEATURE_COUNT}-vector mean and {FEATURE_COUNT}x{FEATURE_COUNT} covariance"
            )));
        }
        if self.mean.iter().chain(self.cov.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("niqe model contains non-finite values".into()));
        }
        for i in 0..FEATURE_COUNT {
            if self.cov[i][i] < 0.0 {
                return Err(Error::InvalidInput("niqe covariance has a negative diagonal".into()));
            }
            for j in 0..i {
                if (self.cov[i][j] - self.cov[j][i]).abs() > 1e-9 {
                    return Err(Error::InvalidInput("niqe covariance is not symmetric".into()));
                }
            }
        }
        Ok(())
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(FEATURE_COUNT, FEATURE_COUNT, |i, j| self.cov[i][j])
    }
}

fn check_patch_size(p: usize) -> Result<()> {
    if p < 8 || !p.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "niqe patch size must be even and at least 8, got {p}"
        )));
    }
    Ok(())
}

/// `r(a) = Gamma(1/a) Gamma(3/a) / Gamma(2/a)^2`, decreasing in `a`.
pub fn gamma_ratio(alpha: f64) -> f64 {
    (ln_gamma(1.0 / alpha) + ln_gamma(3.0 / alpha) - 2.0 * ln_gamma(2.0 / alpha)).exp()
}

fn ratio_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = ((ALPHA_MAX - ALPHA_MIN) / ALPHA_STEP).round() as usize + 1;
        (0..n)
            .map(|i| gamma_ratio(ALPHA_MIN + i as f64 * ALPHA_STEP))
            .collect()
    })
}

/// Inverts [`gamma_ratio`] on the tabulated grid with linear interpolation,
/// clamping to `[ALPHA_MIN, ALPHA_MAX]`.
pub fn solve_shape(ratio: f64) -> f64 {
    let t = ratio_table();
    if !(ratio < t[0]) {
        return ALPHA_MIN;
    }
    if ratio <= t[t.len() - 1] {
        return ALPHA_MAX;
    }
    // table is strictly decreasing: find i with t[i] > ratio >= t[i+1]
    let i = t.partition_point(|&v| v > ratio) - 1;
    let frac = (t[i] - ratio) / (t[i] - t[i + 1]);
    ALPHA_MIN + (i as f64 + frac) * ALPHA_STEP
}

/// Generalized Gaussian fit by moment matching: `(alpha, variance)`.
pub fn ggd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    if var < VARIANCE_FLOOR {
        return (DEGENERATE_ALPHA, 0.0);
    }
    let abs_mean = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    (solve_shape(var / (abs_mean * abs_mean)), var)
}

/// Asymmetric generalized Gaussian fit: `(alpha, mean, left_var, right_var)`.
pub fn aggd_fit(x: &[f64]) -> (f64, f64, f64, f64) {
    let (mut sl, mut nl, mut sr, mut nr) = (0.0, 0usize, 0.0, 0usize);
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for &v in x {
        if v < 0.0 {
            sl += v * v;
            nl += 1;
        } else if v > 0.0 {
            sr += v * v;
            nr += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    let n = x.len() as f64;
    let left_var = if nl > 0 { sl / nl as f64 } else { 0.0 };
    let right_var = if nr > 0 { sr / nr as f64 } else { 0.0 };
    if sq_sum / n < VARIANCE_FLOOR || left_var < VARIANCE_FLOOR || right_var < VARIANCE_FLOOR {
        return (DEGENERATE_ALPHA, 0.0, left_var, right_var);
    }
    let (ls, rs) = (left_var.sqrt(), right_var.sqrt());
    let g = ls / rs;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let big_r = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let alpha = solve_shape(1.0 / big_r);
    let scale = (ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha)).exp().sqrt();
    let mean = (rs - ls) * scale * (ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha)).exp();
    (alpha, mean, left_var, right_var)
}

/// Mean-subtracted contrast-normalized coefficients and the local sigma map.
pub fn mscn(lum255: &Plane) -> Result<(Plane, Plane)> {
    let taps = gaussian_taps(MSCN_SIGMA, MSCN_RADIUS)?;
    let sq = lum255.map(|v| v * v);
    let mu = blur_with(lum255, &taps)?;
    let mu_sq = blur_with(&sq, &taps)?;
    let (w, h) = lum255.dims();
    let mut sigma = Vec::with_capacity(w * h);
    let mut coeffs = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let m = mu.data()[i];
        let s = (mu_sq.data()[i] - m * m).abs().sqrt();
        sigma.push(s);
        coeffs.push((lum255.data()[i] - m) / (s + MSCN_C));
    }
    Ok((Plane::from_vec(w, h, coeffs)?, Plane::from_vec(w, h, sigma)?))
}

// Fixed 7-tap window rather than gaussian_blur's 3-sigma radius.
fn blur_with(p: &Plane, taps: &[f64]) -> Result<Plane> {
    let r = (taps.len() / 2) as isize;
    let (w, h) = p.dims();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w as isize {
            tmp[y * w + x as usize] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * p.get(Border::Replicate.index(x + k as isize - r, w), y))
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w {
            out[y as usize * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[Border::Replicate.index(y + k as isize - r, h) * w + x])
                .sum();
        }
    }
    Plane::from_vec(w, h, out)
}

fn patch_features(m: &Plane, x0: usize, y0: usize, p: usize, out: &mut Vec<f64>) {
    let at = |x: usize, y: usize| m.get(x0 + x, y0 + y);
    let mut v = Vec::with_capacity(p * p);
    for y in 0..p {
        for x in 0..p {
            v.push(at(x, y));
        }
    }
    let (a, var) = ggd_fit(&v);
    out.extend([a, var]);
    let shifts: [(usize, usize, usize, usize); 4] = [
        (0, 0, 1, 0), // horizontal
        (0, 0, 0, 1), // vertical
        (0, 0, 1, 1), // main diagonal
        (1, 0, 0, 1), // anti-diagonal
    ];
    for (ax, ay, bx, by) in shifts {
        let mut prod = Vec::with_capacity((p - 1) * (p - 1));
        let (nx, ny) = (p - ax.max(bx), p - ay.max(by));
        for y in 0..ny {
            for x in 0..nx {
                prod.push(at(x + ax, y + ay) * at(x + bx, y + by));
            }
        }
        let (a, mean, l, r) = aggd_fit(&prod);
        out.extend([a, mean, l, r]);
    }
}

/// Per-patch 36-dim features and sharpness (mean local sigma at full scale),
/// for every non-overlapping `patch_size` patch in raster order.
pub fn patch_features_all(image: &ImageRgb, patch_size: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    check_patch_size(patch_size)?;
    let (w, h) = image.dims();
    let (nx, ny) = (w / patch_size, h / patch_size);
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput(format!(
            "image {w}x{h} is smaller than one {patch_size} px niqe patch"
        )));
    }
    let lum = luminance(image).map(|v| v * 255.0);
    let half = resize_bilinear(&lum, w / 2, h / 2)?;
    let (m1, s1) = mscn(&lum)?;
    let (m2, _) = mscn(&half)?;
    let p2 = patch_size / 2;
    let mut out = Vec::with_capacity(nx * ny);
    for py in 0..ny {
        for px in 0..nx {
            let mut f = Vec::with_capacity(FEATURE_COUNT);
            patch_features(&m1, px * patch_size, py * patch_size, patch_size, &mut f);
            patch_features(&m2, px * p2, py * p2, p2, &mut f);
            let mut sharp = 0.0;
            for y in 0..patch_size {
                for x in 0..patch_size {
                    sharp += s1.get(px * patch_size + x, py * patch_size + y);
                }
            }
            out.push((f, sharp / (patch_size * patch_size) as f64));
        }
    }
    Ok(out)
}

/// Features of the patches whose sharpness is at least `fraction` of the
/// sharpest patch in the same image.
pub fn sharp_patch_features(
    image: &ImageRgb,
    patch_size: usize,
    fraction: f64,
) -> Result<Vec<Vec<f64>>> {
    let all = patch_features_all(image, patch_size)?;
    let max = all.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    Ok(all
        .into_iter()
        .filter(|(_, s)| *s >= fraction * max)
        .map(|(f, _)| f)
        .collect())
}

fn mean_cov(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let mut mean = DVector::zeros(FEATURE_COUNT);
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(FEATURE_COUNT, FEATURE_COUNT);
    if n > 1 {
        for r in rows {
            let d = DVector::from_iterator(FEATURE_COUNT, r.iter().zip(mean.iter()).map(|(v, m)| v - m));
            cov += &d * d.transpose();
        }
        cov /= (n - 1) as f64;
    }
    let sym = (&cov + cov.transpose()) * 0.5;
    (mean, sym)
}

pub fn niqe_fit(corpus: &[ImageRgb], patch_size: usize, sharpness_fraction: f64) -> Result<NiqeModel> {
    check_patch_size(patch_size)?;
    if !(0.0..=1.0).contains(&sharpness_fraction) {
        return Err(Error::InvalidInput(format!(
            "sharpness fraction must lie in [0, 1], got {sharpness_fraction}"
        )));
    }
    let per_image: Vec<Vec<Vec<f64>>> = corpus
        .par_iter()
        .map(|img| sharp_patch_features(img, patch_size, sharpness_fraction))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = per_image.into_iter().flatten().collect();
    if rows.len() < FEATURE_COUNT {
        return Err(Error::InsufficientData(format!(
            "niqe fit needs at least {FEATURE_COUNT} sharp patches, corpus yielded {}",
            rows.len()
        )));
    }
    let (mean, cov) = mean_cov(&rows);
    let max_diag = cov.diagonal().max();
    if !(max_diag > 1e-12) {
        return Err(Error::DegenerateModel(
            "niqe features have zero variance across the corpus".into(),
        ));
    }
    Ok(NiqeModel {
        patch_size,
        sharpness_fraction,
        mean: mean.iter().copied().collect(),
        cov: (0..FEATURE_COUNT)
            .map(|i| (0..FEATURE_COUNT).map(|j| cov[(i, j)]).collect())
            .collect(),
    })
}

/// `sqrt(d^T S^+ d)` with `d = mu_a - mu_b` and `S = (cov_a + cov_b) / 2`.
/// Uses a Cholesky solve when `S` is positive definite, otherwise an SVD
/// pseudo-inverse.
pub fn niqe_distance(
    mu_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mu_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> Result<f64> {
    let n = mu_a.len();
    if mu_b.len() != n || cov_a.shape() != (n, n) || cov_b.shape() != (n, n) {
        return Err(Error::InvalidInput("niqe distance operands disagree in size".into()));
    }
    let d = mu_a - mu_b;
    let s = (cov_a + cov_b) * 0.5;
    let q = match s.clone().cholesky() {
        Some(ch) => d.dot(&ch.solve(&d)),
        None => {
            let eps = 1e-12 * s.amax().max(f64::MIN_POSITIVE);
            let pinv = s
                .pseudo_inverse(eps)
                .map_err(|e| Error::DegenerateModel(e.to_string()))?;
            d.dot(&(pinv * &d))
        }
    };
    Ok(q.max(0.0).sqrt())
}

pub fn niqe_score(image: &ImageRgb, model: &NiqeModel) -> Result<f64> {
    model.validate()?;
    let rows: Vec<Vec<f64>> = patch_features_all(image, model.patch_size)?
        .into_iter()
        .map(|(f, _)| f)
        .collect();
    let (mu, cov) = mean_cov(&rows);
    niqe_distance(
        &DVector::from_column_slice(&model.mean),
        &model.cov_matrix(),
        &mu,
        &cov,
    )
}
