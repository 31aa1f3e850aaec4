//! Oracles shared by the integration test targets.

use nightsynth_core::imaging::ImageRgb;

/// Direct per-window SSIM: for every window position, compute weighted
/// statistics from scratch.
pub fn ssim_oracle(a: &ImageRgb, b: &ImageRgb) -> f64 {
    let n = 11usize;
    let sigma = 1.5f64;
    let mut w = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let dx = i as f64 - 5.0;
            let dy = j as f64 - 5.0;
            w[j * n + i] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (iw, ih) = a.dims();
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..3 {
        for y0 in 0..=ih - n {
            for x0 in 0..=iw - n {
                let (mut mx, mut my) = (0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        mx += w[j * n + i] * a.get(x0 + i, y0 + j, c);
                        my += w[j * n + i] * b.get(x0 + i, y0 + j, c);
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let dx = a.get(x0 + i, y0 + j, c) - mx;
                        let dy = b.get(x0 + i, y0 + j, c) - my;
                        vx += w[j * n + i] * dx * dx;
                        vy += w[j * n + i] * dy * dy;
                        cxy += w[j * n + i] * dx * dy;
                    }
                }
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

