use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use nightsynth_core::imaging::io::load_rgb;
use nightsynth_core::imaging::{ImageRgb, SeededRng};
use nightsynth_core::quality::niqe::FEATURE_COUNT;
use nightsynth_core::quality::{niqe_fit, niqe_score, psnr, ssim, NiqeModel, SsimParams};
use statrs::function::gamma::ln_gamma;

mod common;
use common::ssim_oracle;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/niqe")
}

fn corpus() -> Vec<ImageRgb> {
    (0..10)
        .map(|i| load_rgb(&fixture_dir().join(format!("corpus_{i:02}.png"))).unwrap())
        .collect()
}

fn random_image(seed: u64, w: usize, h: usize) -> ImageRgb {
    let mut rng = SeededRng::new(seed, "quality-it");
    ImageRgb::from_fn(w, h, |_, _| [rng.uniform(), rng.uniform(), rng.uniform()])
}

#[test]
fn ssim_matches_sliding_window_oracle() {
    let p = SsimParams::default();
    for s in 0..5 {
        let a = random_image(2 * s, 16, 16);
        let b = a.map(|v| (v * 0.8 + 0.1).min(1.0));
        let mut rng = SeededRng::new(2 * s + 1, "mix");
        let mut b2 = b.clone();
        for v in b2.data_mut() {
            *v = (*v + 0.2 * rng.uniform() - 0.1).clamp(0.0, 1.0);
        }
        let got = ssim(&a, &b2, &p).unwrap();
        let want = ssim_oracle(&a, &b2);
        assert!((got - want).abs() < 1e-6, "seed {s}: {got} vs {want}");
    }
}

#[test]
fn psnr_uniform_error_closed_form() {
    let a = random_image(3, 12, 9).map(|v| v * 0.9);
    let b = a.map(|v| v + 1.0 / 255.0);
    assert!((psnr(&a, &b, 1.0).unwrap() - 48.1308).abs() < 1e-3);
    // peak 255 on a 0..255 image gives the same figure
    let a8 = a.map(|v| v * 255.0);
    let b8 = b.map(|v| v * 255.0);
    assert!((psnr(&a8, &b8, 255.0).unwrap() - psnr(&a, &b, 1.0).unwrap()).abs() < 1e-9);
}

// ---------------------------------------------------------------------------
// straight-line NIQE feature oracle

fn r_exact(a: f64) -> f64 {
    (ln_gamma(1.0 / a) + ln_gamma(3.0 / a) - 2.0 * ln_gamma(2.0 / a)).exp()
}

fn invert_bisect(target: f64) -> f64 {
    let (mut lo, mut hi) = (0.2f64, 10.0f64);
    if target >= r_exact(lo) {
        return lo;
    }
    if target <= r_exact(hi) {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r_exact(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn oracle_mscn(lum: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let h = lum.len();
    let w = lum[0].len();
    let sigma = 7.0 / 6.0;
    let mut k = [[0.0f64; 7]; 7];
    let mut ks = 0.0;
    for (j, row) in k.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let dx = i as f64 - 3.0;
            let dy = j as f64 - 3.0;
            *v = (-(dx * dx) / (2.0 * sigma * sigma)).exp() * (-(dy * dy) / (2.0 * sigma * sigma)).exp();
            ks += *v;
        }
    }
    let mut m = vec![vec![0.0; w]; h];
    let mut s = vec![vec![0.0; w]; h];
    for y in 0..h {
        for x in 0..w {
            let (mut mu, mut mu2) = (0.0, 0.0);
            for (j, row) in k.iter().enumerate() {
                for (i, kv) in row.iter().enumerate() {
                    let sx = (x as isize + i as isize - 3).clamp(0, w as isize - 1) as usize;
                    let sy = (y as isize + j as isize - 3).clamp(0, h as isize - 1) as usize;
                    let v = lum[sy][sx];
                    mu += kv / ks * v;
                    mu2 += kv / ks * v * v;
                }
            }
            let sd = (mu2 - mu * mu).abs().sqrt();
            s[y][x] = sd;
            m[y][x] = (lum[y][x] - mu) / (sd + 1.0);
        }
    }
    (m, s)
}

fn oracle_ggd(v: &[f64]) -> [f64; 2] {
    let n = v.len() as f64;
    let var = v.iter().map(|x| x * x).sum::<f64>() / n;
    let am = v.iter().map(|x| x.abs()).sum::<f64>() / n;
    [invert_bisect(var / (am * am)), var]
}

fn oracle_aggd(v: &[f64]) -> [f64; 4] {
    let neg: Vec<f64> = v.iter().copied().filter(|x| *x < 0.0).collect();
    let pos: Vec<f64> = v.iter().copied().filter(|x| *x > 0.0).collect();
    let lv = neg.iter().map(|x| x * x).sum::<f64>() / neg.len() as f64;
    let rv = pos.iter().map(|x| x * x).sum::<f64>() / pos.len() as f64;
    let n = v.len() as f64;
    let g = lv.sqrt() / rv.sqrt();
    let rhat = (v.iter().map(|x| x.abs()).sum::<f64>() / n).powi(2) / (v.iter().map(|x| x * x).sum::<f64>() / n);
    let rr = rhat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let a = invert_bisect(1.0 / rr);
    let g1 = ln_gamma(1.0 / a).exp();
    let g2 = ln_gamma(2.0 / a).exp();
    let g3 = ln_gamma(3.0 / a).exp();
    let bl = lv.sqrt() * (g1 / g3).sqrt();
    let br = rv.sqrt() * (g1 / g3).sqrt();
    [a, (br - bl) * g2 / g1, lv, rv]
}

fn oracle_patch(m: &[Vec<f64>], x0: usize, y0: usize, p: usize, out: &mut Vec<f64>) {
    let mut v = vec![];
    for y in 0..p {
        for x in 0..p {
            v.push(m[y0 + y][x0 + x]);
        }
    }
    out.extend(oracle_ggd(&v));
    let mut hz = vec![];
    let mut vt = vec![];
    let mut d1 = vec![];
    let mut d2 = vec![];
    for y in 0..p {
        for x in 0..p {
            let c = m[y0 + y][x0 + x];
            if x + 1 < p {
                hz.push(c * m[y0 + y][x0 + x + 1]);
            }
            if y + 1 < p {
                vt.push(c * m[y0 + y + 1][x0 + x]);
            }
            if x + 1 < p && y + 1 < p {
                d1.push(c * m[y0 + y + 1][x0 + x + 1]);
                d2.push(m[y0 + y][x0 + x + 1] * m[y0 + y + 1][x0 + x]);
            }
        }
    }
    for prod in [hz, vt, d1, d2] {
        out.extend(oracle_aggd(&prod));
    }
}

fn oracle_features(img: &ImageRgb, p: usize, frac: f64) -> Vec<Vec<f64>> {
    let (w, h) = img.dims();
    let lum: Vec<Vec<f64>> = (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    let [r, g, b] = img.pixel(x, y);
                    255.0 * (0.2126 * r + 0.7152 * g + 0.0722 * b)
                })
                .collect()
        })
        .collect();
    // half scale: mean of each 2x2 block
    let half: Vec<Vec<f64>> = (0..h / 2)
        .map(|y| {
            (0..w / 2)
                .map(|x| {
                    (lum[2 * y][2 * x] + lum[2 * y][2 * x + 1] + lum[2 * y + 1][2 * x] + lum[2 * y + 1][2 * x + 1]) / 4.0
                })
                .collect()
        })
        .collect();
    let (m1, s1) = oracle_mscn(&lum);
    let (m2, _) = oracle_mscn(&half);
    let mut rows = vec![];
    for py in 0..h / p {
        for px in 0..w / p {
            let mut f = vec![];
            oracle_patch(&m1, px * p, py * p, p, &mut f);
            oracle_patch(&m2, px * p / 2, py * p / 2, p / 2, &mut f);
            let mut sh = 0.0;
            for y in 0..p {
                for x in 0..p {
                    sh += s1[py * p + y][px * p + x];
                }
            }
            rows.push((f, sh / (p * p) as f64));
        }
    }
    let max = rows.iter().map(|r| r.1).fold(f64::MIN, f64::max);
    rows.into_iter().filter(|r| r.1 >= frac * max).map(|r| r.0).collect()
}

fn fit() -> NiqeModel {
    niqe_fit(&corpus(), 32, 0.75).unwrap()
}

#[test]
fn niqe_mean_matches_feature_oracle() {
    let model = fit();
    let rows: Vec<Vec<f64>> = corpus().iter().flat_map(|img| oracle_features(img, 32, 0.75)).collect();
    assert!(rows.len() >= FEATURE_COUNT);
    for k in 0..FEATURE_COUNT {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
        let tol = 1e-6 * mean.abs().max(1.0);
        assert!(
            (model.mean[k] - mean).abs() < tol,
            "feature {k}: {} vs oracle {mean}",
            model.mean[k]
        );
    }
}

#[test]
fn niqe_covariance_symmetric_psd() {
    let model = fit();
    model.validate().unwrap();
    let c = DMatrix::from_fn(FEATURE_COUNT, FEATURE_COUNT, |i, j| model.cov[i][j]);
    assert!((&c - c.transpose()).amax() <= 1e-9);
    let eig = SymmetricEigen::new(c);
    assert!(eig.eigenvalues.min() >= -1e-8, "min eigenvalue {}", eig.eigenvalues.min());
}

#[test]
fn niqe_orders_noisy_above_pristine() {
    let model = fit();
    let pristine = load_rgb(&fixture_dir().join("pristine.png")).unwrap();
    let noisy = load_rgb(&fixture_dir().join("noisy.png")).unwrap();
    let sp = niqe_score(&pristine, &model).unwrap();
    let sn = niqe_score(&noisy, &model).unwrap();
    assert!(sp.is_finite() && sp >= 0.0);
    assert!(sn > sp, "noisy {sn} <= pristine {sp}");

    let own = niqe_score(&corpus()[0], &model).unwrap();
    assert!(own.is_finite() && own >= 0.0);
}

#[test]
fn niqe_model_json_round_trip() {
    let model = fit();
    let text = serde_json::to_string(&model).unwrap();
    let back: NiqeModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, model);
}

#[test]
fn metrics_flip_invariant() {
    let a = random_image(40, 24, 20);
    let b = random_image(41, 24, 20);
    let (fa, fb) = (a.flip_horizontal(), b.flip_horizontal());
    assert!((psnr(&a, &b, 1.0).unwrap() - psnr(&fa, &fb, 1.0).unwrap()).abs() < 1e-9);
    let p = SsimParams::default();
    assert!((ssim(&a, &b, &p).unwrap() - ssim(&fa, &fb, &p).unwrap()).abs() < 1e-9);
}
