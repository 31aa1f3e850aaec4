//! Ground-truth curation scores: average brightness, average gradient and the
//! grayscale variance product (SMD2), all on the Rec.709 luminance plane.
//!
//! The two difference-based scores are evaluated per 2x2 cell with forward
//! differences anchored at each of the cell's four corners, then averaged.
//! For the anchor at `(x, y)`:
//!
//! ```text
//! gradient = sqrt((dx^2 + dy^2) / 2)
//! smd2     = |dx| * |dy|
//! ```
//!
//! Averaging over the four anchors makes both scores invariant under
//! horizontal and vertical flips.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{luminance, ImageRgb, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationScores {
    pub avg_brightness: f64,
    pub avg_gradient: f64,
    pub smd2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationThresholds {
    pub min_brightness: f64,
    /// Rejects daytime frames.
    pub max_brightness: f64,
    pub min_gradient: f64,
    pub min_smd2: f64,
}

impl Default for CurationThresholds {
    fn default() -> Self {
        Self {
            min_brightness: 0.06,
            max_brightness: 0.45,
            min_gradient: 0.01,
            min_smd2: 1e-5,
        }
    }
}

impl CurationThresholds {
    pub fn keeps(&self, s: &CurationScores) -> bool {
        s.avg_brightness >= self.min_brightness
            && s.avg_brightness <= self.max_brightness
            && s.avg_gradient >= self.min_gradient
            && s.smd2 >= self.min_smd2
    }
}

pub fn score_plane(f: &Plane) -> Result<CurationScores> {
    let (w, h) = f.dims();
    if w < 2 || h < 2 {
        return Err(Error::InvalidInput(format!(
            "curation needs at least 2x2 pixels, got {w}x{h}"
        )));
    }
    let mut grad = 0.0;
    let mut smd2 = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let a = f.get(x, y);
            let b = f.get(x + 1, y);
            let c = f.get(x, y + 1);
            let d = f.get(x + 1, y + 1);
            // (dx, dy) for anchors a, b, c, d
            let anchors = [(b - a, c - a), (a - b, d - b), (d - c, a - c), (c - d, b - d)];
            let mut g = 0.0;
            let mut s = 0.0;
            for (dx, dy) in anchors {
                g += ((dx * dx + dy * dy) / 2.0).sqrt();
                s += dx.abs() * dy.abs();
            }
            grad += g / 4.0;
            smd2 += s / 4.0;
        }
    }
    let cells = ((w - 1) * (h - 1)) as f64;
    Ok(CurationScores {
        avg_brightness: f.mean(),
        avg_gradient: grad / cells,
        smd2: smd2 / cells,
    })
}

pub fn score_image(image: &ImageRgb) -> Result<CurationScores> {
    score_plane(&luminance(image))
}

/// Indices of the kept candidates, in input order.
pub fn filter_candidates(scores: &[CurationScores], thresholds: &CurationThresholds) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| thresholds.keeps(s))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::SeededRng;

    #[test]
    fn constant_image() {
        let s = score_image(&ImageRgb::new(7, 5, [0.3; 3])).unwrap();
        assert!((s.avg_brightness - 0.3).abs() < 1e-12);
        assert_eq!(s.avg_gradient, 0.0);
        assert_eq!(s.smd2, 0.0);
    }

    #[test]
    fn too_small_rejected() {
        assert!(score_image(&ImageRgb::new(1, 5, [0.3; 3])).is_err());
    }

    #[test]
    fn vertical_step_edge() {
        // 0 | 1 split at column N/2 on an N x N image. Only the N - 1 cells
        // straddling the edge see a difference: |dx| = 1, dy = 0 at every
        // anchor, so each contributes sqrt(1/2) to the gradient and 0 to SMD2.
        let n = 8;
        let p = Plane::from_fn(n, n, |x, _| if x < n / 2 { 0.0 } else { 1.0 });
        let s = score_plane(&p).unwrap();
        let cells = ((n - 1) * (n - 1)) as f64;
        let expected = (n - 1) as f64 * 0.5f64.sqrt() / cells;
        assert!((s.avg_gradient - expected).abs() < 1e-12);
        assert_eq!(s.smd2, 0.0);
        assert!((s.avg_brightness - 0.5).abs() < 1e-12);
    }

    #[test]
    fn diagonal_corner_smd2_by_hand() {
        // Single bright pixel at (1,1) of a 3x3 plane: each of the four cells
        // has exactly one corner at 1. In such a cell the anchor at the bright
        // corner sees (-1, -1), the two adjacent anchors see one unit step
        // each, and the opposite anchor sees none:
        // gradient = (1 + sqrt(1/2) + sqrt(1/2) + 0) / 4, smd2 = 1 / 4.
        let p = Plane::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 1.0 } else { 0.0 });
        let s = score_plane(&p).unwrap();
        let g = (1.0 + 2.0 * 0.5f64.sqrt()) / 4.0;
        assert!((s.avg_gradient - g).abs() < 1e-12);
        assert!((s.smd2 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn horizontal_ramp() {
        let w = 11;
        let p = Plane::from_fn(w, 6, |x, _| x as f64 / (w - 1) as f64);
        let s = score_plane(&p).unwrap();
        let expected = (1.0 / (w - 1) as f64) / 2f64.sqrt();
        assert!((s.avg_gradient - expected).abs() < 1e-12);
        assert!(s.smd2.abs() < 1e-15);
    }

    #[test]
    fn flips_do_not_change_scores() {
        let mut rng = SeededRng::new(4, "curation-flip");
        let img = ImageRgb::from_fn(13, 9, |_, _| [rng.uniform(), rng.uniform(), rng.uniform()]);
        let s = score_image(&img).unwrap();
        for flipped in [img.flip_horizontal(), img.flip_vertical()] {
            let t = score_image(&flipped).unwrap();
            assert!((s.avg_brightness - t.avg_brightness).abs() < 1e-9);
            assert!((s.avg_gradient - t.avg_gradient).abs() < 1e-9);
            assert!((s.smd2 - t.smd2).abs() < 1e-9);
        }
    }

    #[test]
    fn filter_cases() {
        assert!(filter_candidates(&[], &CurationThresholds::default()).is_empty());
        let sc = |b, g, s| CurationScores {
            avg_brightness: b,
            avg_gradient: g,
            smd2: s,
        };
        let open = CurationThresholds {
            min_brightness: 0.0,
            max_brightness: 1.0,
            min_gradient: 0.0,
            min_smd2: 0.0,
        };
        let batch = [
            sc(0.10, 0.020, 1e-4), // kept
            sc(0.03, 0.020, 1e-4), // too dark
            sc(0.70, 0.050, 1e-3), // daytime
            sc(0.20, 0.005, 1e-4), // too smooth
            sc(0.30, 0.015, 1e-6), // blurry
        ];
        assert_eq!(filter_candidates(&batch, &open), vec![0, 1, 2, 3, 4]);
        assert_eq!(filter_candidates(&batch, &CurationThresholds::default()), vec![0]);
    }

    #[test]
    fn thresholds_json_fills_defaults() {
        let t: CurationThresholds = serde_json::from_str(r#"{"min_gradient": 0.5}"#).unwrap();
        assert_eq!(t.min_gradient, 0.5);
        assert_eq!(t.max_brightness, CurationThresholds::default().max_brightness);
    }
}
