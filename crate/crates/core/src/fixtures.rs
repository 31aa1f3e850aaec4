//! Deterministic synthetic images for tests, demos and the frozen NIQE corpus.

use crate::imaging::{gaussian_blur, resize_bilinear, Border, ImageRgb, Plane, SeededRng};

/// Multi-octave value noise in `[0, 1]`: each octave is a bilinearly
/// upsampled uniform grid, octave weights halve.
pub fn value_noise(width: usize, height: usize, octaves: usize, rng: &mut SeededRng) -> Plane {
    let mut acc = Plane::new(width, height, 0.0);
    let mut total = 0.0;
    let mut amp = 1.0;
    for o in 0..octaves.max(1) {
        let cell = (width.max(height) >> (o + 1)).max(2);
        let gw = width.div_ceil(cell) + 1;
        let gh = height.div_ceil(cell) + 1;
        let grid = Plane::from_fn(gw, gh, |_, _| rng.uniform());
        let up = resize_bilinear(&grid, width, height).expect("non-empty sizes");
        for (a, u) in acc.data_mut().iter_mut().zip(up.data()) {
            *a += amp * u;
        }
        total += amp;
        amp *= 0.5;
    }
    acc.map(|v| v / total)
}

/// Natural-looking texture: value noise, a few oriented edges and fine grain.
pub fn textured_image(width: usize, height: usize, seed: u64) -> ImageRgb {
    let mut rng = SeededRng::new(seed, "fixture/textured");
    let base = value_noise(width, height, 5, &mut rng);
    let tint = [
        rng.uniform_range(0.7, 1.0),
        rng.uniform_range(0.7, 1.0),
        rng.uniform_range(0.7, 1.0),
    ];
    let edges: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let theta = rng.uniform() * std::f64::consts::PI;
            (
                theta.cos(),
                theta.sin(),
                rng.uniform_range(0.2, 0.8) * width as f64,
                rng.uniform_range(-0.15, 0.15),
            )
        })
        .collect();
    let mut grain = Plane::from_fn(width, height, |_, _| rng.normal());
    grain = gaussian_blur(&grain, 0.7, Border::Reflect).expect("valid sigma");
    let lum = Plane::from_fn(width, height, |x, y| {
        let mut v = 0.15 + 0.6 * base.get(x, y);
        for &(c, s, off, step) in &edges {
            if x as f64 * c + y as f64 * s > off {
                v += step;
            }
        }
        (v + 0.03 * grain.get(x, y)).clamp(0.0, 1.0)
    });
    ImageRgb::from_fn(width, height, |x, y| {
        let l = lum.get(x, y);
        [l * tint[0], l * tint[1], l * tint[2]]
    })
}

/// Dark street-like scene: a sky gradient, building blocks with lit
/// windows, and a few saturated lamps.
pub fn night_scene(width: usize, height: usize, seed: u64) -> ImageRgb {
    let mut rng = SeededRng::new(seed, "fixture/night");
    let noise = value_noise(width, height, 4, &mut rng);
    let mut img = ImageRgb::from_fn(width, height, |x, y| {
        let t = y as f64 / height.max(1) as f64;
        let n = 0.04 * noise.get(x, y);
        [0.02 + 0.05 * t + n, 0.03 + 0.05 * t + n, 0.07 + 0.04 * t + n]
    });

    let blocks = 3 + rng.below(4);
    for _ in 0..blocks {
        let bw = (width as f64 * rng.uniform_range(0.1, 0.3)) as usize + 1;
        let bh = (height as f64 * rng.uniform_range(0.3, 0.7)) as usize + 1;
        let x0 = rng.below(width.saturating_sub(bw).max(1));
        let y0 = height.saturating_sub(bh);
        let shade = rng.uniform_range(0.05, 0.15);
        for y in y0..height {
            for x in x0..(x0 + bw).min(width) {
                let lit = (x - x0) % 6 < 3 && (y - y0) % 8 < 4 && noise.get(x, y) > 0.5;
                let v = if lit { [0.55, 0.45, 0.25] } else { [shade; 3] };
                for (c, vc) in v.iter().enumerate() {
                    img.set(x, y, c, *vc);
                }
            }
        }
    }

    let lamps = 2 + rng.below(3);
    for _ in 0..lamps {
        let cx = rng.uniform() * width as f64;
        let cy = rng.uniform_range(0.2, 0.8) * height as f64;
        let r = rng.uniform_range(1.5, 3.5);
        let color = [1.0, rng.uniform_range(0.8, 1.0), rng.uniform_range(0.5, 0.9)];
        for y in 0..height {
            for x in 0..width {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let k = (-d2 / (2.0 * r * r)).exp();
                if k > 1e-3 {
                    for (c, col) in color.iter().enumerate() {
                        let v = img.get(x, y, c);
                        img.set(x, y, c, v + (col - v) * (1.5 * k).min(1.0));
                    }
                }
            }
        }
    }
    img.clamp01()
}

/// Adds N(0, sigma) noise and clips to `[0, 1]`.
pub fn add_gaussian_noise(image: &ImageRgb, sigma: f64, seed: u64) -> ImageRgb {
    let mut rng = SeededRng::new(seed, "fixture/noise");
    let mut out = image.clone();
    for v in out.data_mut() {
        *v = (*v + sigma * rng.normal()).clamp(0.0, 1.0);
    }
    out
}
