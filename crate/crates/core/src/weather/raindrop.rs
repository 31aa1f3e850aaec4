//! Raindrops bounded by closed quadratic Bezier outlines.
//!
//! Each drop has `CONTROL_POINTS` control points placed on a circle and pushed
//! radially by up to `jitter` pixels. The outline is the periodic chain of
//! quadratic segments running between consecutive control-point midpoints
//! with the shared control point as the handle. Pixels whose centers fall
//! inside any outline take the blurred, darkened local content.

use serde::{Deserialize, Serialize};

use super::{check_unit, ResidualLayer};
use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur, Border, ImageRgb, SeededRng};

pub const CONTROL_POINTS: usize = 8;
const SAMPLES_PER_SEGMENT: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaindropParams {
    pub count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Maximum radial displacement of a control point, in pixels.
    pub jitter: f64,
    /// Gaussian blur applied to the content seen through a drop.
    pub blur_sigma: f64,
    /// Multiplier on the drop content; 1 leaves brightness unchanged.
    pub darkening: f64,
}

impl Default for RaindropParams {
    fn default() -> Self {
        Self {
            count: 6,
            radius_min: 3.0,
            radius_max: 9.0,
            jitter: 1.5,
            blur_sigma: 2.0,
            darkening: 0.85,
        }
    }
}

impl RaindropParams {
    fn validate(&self) -> Result<()> {
        check_unit("raindrop darkening", self.darkening)?;
        if !(self.radius_min > 0.0 && self.radius_max >= self.radius_min) {
            return Err(Error::InvalidInput(format!(
                "raindrop radius range invalid: [{}, {}]",
                self.radius_min, self.radius_max
            )));
        }
        if !(self.jitter >= 0.0) || !(self.blur_sigma >= 0.0) {
            return Err(Error::InvalidInput(
                "raindrop jitter and blur sigma must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropShape {
    pub center: (f64, f64),
    pub control_points: Vec<(f64, f64)>,
}

impl DropShape {
    /// Axis-aligned bounds of the control points as (x_min, y_min, x_max, y_max).
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.control_points.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        )
    }
}

/// Draws drop shapes in a fixed order: per drop, center x, center y, radius,
/// then one jitter sample per control point.
pub fn sample_drops(
    p: &RaindropParams,
    width: usize,
    height: usize,
    rng: &mut SeededRng,
) -> Vec<DropShape> {
    (0..p.count)
        .map(|_| {
            let cx = rng.uniform() * width as f64;
            let cy = rng.uniform() * height as f64;
            let radius = rng.uniform_range(p.radius_min, p.radius_max);
            let control_points = (0..CONTROL_POINTS)
                .map(|i| {
                    let theta = std::f64::consts::TAU * i as f64 / CONTROL_POINTS as f64;
                    let rho = (radius + p.jitter * rng.uniform_range(-1.0, 1.0)).max(0.0);
                    (cx + rho * theta.cos(), cy + rho * theta.sin())
                })
                .collect();
            DropShape {
                center: (cx, cy),
                control_points,
            }
        })
        .collect()
}

/// Polygonal approximation of the closed Bezier outline.
pub fn drop_outline(shape: &DropShape) -> Vec<(f64, f64)> {
    let pts = &shape.control_points;
    let n = pts.len();
    let mid = |a: (f64, f64), b: (f64, f64)| ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
    let mut out = Vec::with_capacity(n * SAMPLES_PER_SEGMENT);
    for i in 0..n {
        let start = mid(pts[i], pts[(i + 1) % n]);
        let ctrl = pts[(i + 1) % n];
        let end = mid(pts[(i + 1) % n], pts[(i + 2) % n]);
        for s in 0..SAMPLES_PER_SEGMENT {
            let t = s as f64 / SAMPLES_PER_SEGMENT as f64;
            let u = 1.0 - t;
            out.push((
                u * u * start.0 + 2.0 * u * t * ctrl.0 + t * t * end.0,
                u * u * start.1 + 2.0 * u * t * ctrl.1 + t * t * end.1,
            ));
        }
    }
    out
}

fn inside(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut hit = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            hit = !hit;
        }
        j = i;
    }
    hit
}

pub fn gen_raindrop(
    image: &ImageRgb,
    p: &RaindropParams,
    rng: &mut SeededRng,
) -> Result<ResidualLayer> {
    p.validate()?;
    let (w, h) = image.dims();
    if p.count == 0 || image.is_empty() {
        return Ok(ResidualLayer::zeros(w, h));
    }
    let shapes = sample_drops(p, w, h, rng);
    let mut mask = vec![false; w * h];
    for shape in &shapes {
        let poly = drop_outline(shape);
        let (x0, y0, x1, y1) = shape.bounds();
        let xa = x0.floor().max(0.0) as usize;
        let ya = y0.floor().max(0.0) as usize;
        let xb = (x1.ceil().max(0.0) as usize).min(w - 1);
        let yb = (y1.ceil().max(0.0) as usize).min(h - 1);
        for y in ya..=yb {
            for x in xa..=xb {
                if inside(&poly, x as f64, y as f64) {
                    mask[y * w + x] = true;
                }
            }
        }
    }
    let mut out = ImageRgb::new(w, h, [0.0; 3]);
    for c in 0..3 {
        let content = gaussian_blur(&image.plane(c), p.blur_sigma, Border::Replicate)?;
        let src = image.channel(c);
        for (i, r) in out.channel_mut(c).iter_mut().enumerate() {
            if mask[i] {
                *r = p.darkening * content.data()[i] - src[i];
            }
        }
    }
    Ok(ResidualLayer(out))
}
