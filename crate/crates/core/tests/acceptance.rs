//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p nightsynth-core --test acceptance`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use nightsynth_core::compose::{
    build_dataset, compose_scene, compose_weighted, BuildOptions, DatasetPlan, EffectEntry, SceneRecipe,
};
use nightsynth_core::curation::{score_image, score_plane};
use nightsynth_core::fixtures::night_scene;
use nightsynth_core::flare::{apply_flare, apsf_kernel, FlareParams};
use nightsynth_core::imaging::io::{load_rgb, save_rgb};
use nightsynth_core::imaging::{ImageRgb, Plane, SeededRng};
use nightsynth_core::quality::{niqe_fit, niqe_score, psnr, ssim, SsimParams};
use nightsynth_core::retinex::{decompose_with, RetinexParams};
use nightsynth_core::routing::{
    grad_check, load_balance_loss, route, softmax_rows, total_loss, GateMode, LossWeights, RoutingConfig,
    RoutingParams, SelectionResult,
};
use nightsynth_core::weather::{
    gen_raindrop, DepthModel, EffectParams, HazeParams, RaindropParams, SnowParams,
};

mod common;
use common::ssim_oracle;

struct Fail(String);

impl From<String> for Fail {
    fn from(s: String) -> Self {
        Fail(s)
    }
}

impl From<nightsynth_core::Error> for Fail {
    fn from(e: nightsynth_core::Error) -> Self {
        Fail(e.to_string())
    }
}

type Outcome = Result<String, Fail>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), Fail> {
    if cond {
        Ok(())
    } else {
        Err(Fail(msg()))
    }
}

fn random_image(seed: u64, w: usize, h: usize) -> ImageRgb {
    let mut rng = SeededRng::new(seed, "acceptance");
    ImageRgb::from_fn(w, h, |_, _| [rng.uniform(), rng.uniform(), rng.uniform()])
}

fn retinex_reconstruction() -> Outcome {
    let p = RetinexParams::default();
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for seed in 0..50 {
        let x = night_scene(64, 48, seed);
        let pair = decompose_with(&x, &p)?;
        let i = pair.illumination.data();
        for c in 0..3 {
            let (r, xc) = (pair.reflectance.channel(c), x.channel(c));
            for k in 0..i.len() {
                if i[k] > p.eps && i[k] < 1.0 {
                    worst = worst.max((r[k] * i[k] - xc[k]).abs());
                    checked += 1;
                }
            }
        }
    }
    ensure(checked > 0, || "no unclamped pixels".into())?;
    ensure(worst <= 1e-6, || format!("max |R*I - X| = {worst:e}"))?;
    Ok(format!("max |R*I - X| = {worst:.2e} over {checked} values"))
}

fn degenerate_composition() -> Outcome {
    let x = night_scene(64, 48, 3);
    let inactive = SceneRecipe {
        effects: vec![
            EffectEntry {
                params: EffectParams::Haze(HazeParams::default()),
                active: false,
            },
            EffectEntry {
                params: EffectParams::Snow(SnowParams::default()),
                active: false,
            },
        ],
        ..SceneRecipe::new(9)
    };
    let s = compose_scene(&x, &inactive)?;
    ensure(s.degraded == x, || "inactive recipe changed the image".into())?;

    let p = RaindropParams::default();
    let recipe = SceneRecipe::new(21).with_effect(EffectParams::Raindrop(p.clone()));
    let s = compose_scene(&x, &recipe)?;
    let residual = gen_raindrop(&x, &p, &mut SeededRng::new(21, "raindrop"))?;
    ensure(!residual.is_zero(), || "raindrop residual is empty".into())?;
    for (k, d) in s.degraded.data().iter().enumerate() {
        let want = (x.data()[k] + residual.image().data()[k]).clamp(0.0, 1.0);
        ensure(*d == want, || format!("raindrop pixel {k}: {d} != {want}"))?;
    }
    let o = &s.omega[0];
    ensure(o.min == 1.0 && o.mean == 1.0 && o.max == 1.0, || format!("raindrop omega {o:?}"))?;
    Ok("inactive recipe bit-equal; raindrop weight is exactly 1".into())
}

fn illumination_linearity() -> Outcome {
    let x = night_scene(64, 48, 5);
    let (w, h) = x.dims();
    let omega = Plane::from_fn(w, h, |px, _| 0.05 + 0.9 * px as f64 / (w - 1) as f64);
    let airlight = [0.7, 0.65, 0.8];
    let beta = 1.3;
    let (near, far) = (0.2, 1.4);
    let haze = HazeParams {
        airlight,
        beta,
        depth: DepthModel::VerticalGradient { near, far },
    };
    let effects = [EffectEntry::active(EffectParams::Haze(haze))];
    let (xd, _) = compose_weighted(&x, &effects, &omega, 4)?;
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for py in 0..h {
        let depth = far + (near - far) * py as f64 / (h - 1) as f64;
        let t = (-beta * depth).exp();
        for px in 0..w {
            for (c, a) in airlight.iter().enumerate() {
                let d = xd.get(px, py, c);
                if d <= 0.0 || d >= 1.0 {
                    continue;
                }
                let xf = x.get(px, py, c);
                let want = omega.get(px, py) * (a - xf) * (1.0 - t);
                worst = worst.max((d - xf - want).abs());
                checked += 1;
            }
        }
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.2e} over {checked} values"))
}

fn flare_identity() -> Outcome {
    let x = night_scene(64, 48, 7);
    let p = FlareParams::default();
    ensure(p.alpha == 0.995, || format!("default alpha {}", p.alpha))?;
    let kernel = apsf_kernel(p.apsf.size, p.apsf.sigma, p.apsf.gamma)?;
    let out = apply_flare(&x, &Plane::new(64, 48, 0.0), &kernel, &p)?;
    let worst = out
        .image
        .data()
        .iter()
        .zip(x.data())
        .map(|(o, v)| (o - 0.995 * v).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-9, || format!("|out - alpha X| = {worst:e}"))?;

    for (size, sigma, gamma) in [(p.apsf.size, p.apsf.sigma, p.apsf.gamma), (9, 0.5, 3.0), (31, 4.0, 1.2)] {
        let k = apsf_kernel(size, sigma, gamma)?;
        let sum = k.kernel().sum();
        ensure((sum - 1.0).abs() <= 1e-9, || format!("kernel {size}: sum {sum}"))?;
        let c = (size / 2) as f64;
        let mut by_radius: Vec<(f64, f64)> = (0..size * size)
            .map(|idx| {
                let (i, j) = ((idx % size) as f64, (idx / size) as f64);
                (((i - c).powi(2) + (j - c).powi(2)).sqrt(), k.kernel().get(idx % size, idx / size))
            })
            .collect();
        by_radius.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in by_radius.windows(2) {
            ensure(pair[1].1 <= pair[0].1 || pair[1].0 == pair[0].0, || {
                format!("kernel {size}: weight rises from r={} to r={}", pair[0].0, pair[1].0)
            })?;
        }
    }
    Ok(format!("|out - 0.995 X| = {worst:.2e}; kernels normalized and radially non-increasing"))
}

fn metric_closed_forms() -> Outcome {
    let a = random_image(1, 32, 24).map(|v| v * 0.9);
    let b = a.map(|v| v + 1.0 / 255.0);
    let v = psnr(&a, &b, 1.0)?;
    ensure((v - 48.1308).abs() <= 1e-3, || format!("psnr {v}"))?;

    let p = SsimParams::default();
    let s = ssim(&a, &a, &p)?;
    ensure((s - 1.0).abs() <= 1e-9, || format!("ssim(a, a) = {s}"))?;

    let mut worst = 0.0f64;
    for seed in 0..20 {
        let x = random_image(100 + seed, 16, 16);
        let mut rng = SeededRng::new(seed, "ssim-pair");
        let mut y = x.clone();
        for v in y.data_mut() {
            *v = (0.7 * *v + 0.3 * rng.uniform()).clamp(0.0, 1.0);
        }
        let got = ssim(&x, &y, &p)?;
        worst = worst.max((got - ssim_oracle(&x, &y)).abs());
    }
    ensure(worst <= 1e-6, || format!("ssim oracle gap {worst:e}"))?;
    Ok(format!("psnr {v:.4} dB; ssim(a,a) = {s}; oracle gap {worst:.2e}"))
}

fn niqe_ordering() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/niqe");
    let corpus = (0..10)
        .map(|i| load_rgb(&dir.join(format!("corpus_{i:02}.png"))))
        .collect::<Result<Vec<_>, _>>()?;
    let model = niqe_fit(&corpus, 32, 0.75)?;
    let n = model.mean.len();
    let c = DMatrix::from_fn(n, n, |i, j| model.cov[i][j]);
    ensure(c == c.transpose(), || "covariance not symmetric".into())?;
    let eig = SymmetricEigen::new(c).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    ensure(lo >= -1e-9 * hi.max(1.0), || format!("min eigenvalue {lo:e}"))?;

    let sp = niqe_score(&load_rgb(&dir.join("pristine.png"))?, &model)?;
    let sn = niqe_score(&load_rgb(&dir.join("noisy.png"))?, &model)?;
    ensure(sn > sp, || format!("noisy {sn} <= pristine {sp}"))?;
    Ok(format!("noisy {sn:.3} > pristine {sp:.3}; min eigenvalue {lo:.2e}"))
}

fn dense_mixture(f: &DMatrix<f64>, p: &RoutingParams) -> DMatrix<f64> {
    let gate = softmax_rows(&(f * &p.gate));
    let mut out = DMatrix::zeros(f.nrows(), f.ncols());
    for t in 0..f.nrows() {
        for k in 0..p.unit_w.len() {
            let u = f.row(t) * &p.unit_w[k] + p.unit_b[k].transpose();
            for c in 0..f.ncols() {
                out[(t, c)] += gate[(t, k)] * u[c];
            }
        }
    }
    out
}

fn routing_dense_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for mode in [GateMode::Literal, GateMode::Renormalized] {
        let cfg = RoutingConfig {
            units: 25,
            top_k: 25,
            dim: 16,
            gate_mode: mode,
        };
        for seed in 0..100 {
            let mut rng = SeededRng::new(seed, "dense");
            let p = RoutingParams::random(&cfg, &mut rng);
            let f = DMatrix::from_fn(4, cfg.dim, |_, _| rng.normal());
            let (out, _) = route(&f, &p, &cfg)?;
            worst = worst.max((out - dense_mixture(&f, &p)).amax());
        }
    }
    ensure(worst <= 1e-12, || format!("dense gap {worst:e}"))?;

    let (b, k) = (25usize, 10usize);
    let uniform = SelectionResult {
        indices: (0..b)
            .map(|t| {
                let mut v: Vec<usize> = (0..k).map(|j| (t + j) % b).collect();
                v.sort_unstable();
                v
            })
            .collect(),
        gate: softmax_rows(&DMatrix::zeros(b, b)),
        router: softmax_rows(&DMatrix::zeros(b, b)),
    };
    let lu = load_balance_loss(&uniform);
    ensure(lu == 1.0, || format!("uniform load balance {lu:?}"))?;

    let mut onehot = DMatrix::zeros(8, b);
    onehot.column_mut(3).fill(1.0);
    let all_on_one = SelectionResult {
        indices: vec![vec![3]; 8],
        gate: onehot.clone(),
        router: onehot,
    };
    let lo = load_balance_loss(&all_on_one);
    ensure(lo == b as f64, || format!("all-on-one load balance {lo:?}"))?;
    Ok(format!("dense gap {worst:.2e} over 200 instances; uniform {lu}; all-on-one {lo}"))
}

fn gradient_checks() -> Outcome {
    let cfg = RoutingConfig::default();
    ensure((cfg.units, cfg.top_k, cfg.dim) == (25, 10, 16), || format!("default config {cfg:?}"))?;
    let (mut worst, mut worst_seed, mut rejected) = (0.0f64, 0u64, 0usize);
    for seed in 0..100 {
        let r = grad_check(&cfg, seed, 1e-5)?;
        rejected += r.rejected;
        if r.max_rel_error > worst {
            worst = r.max_rel_error;
            worst_seed = seed;
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e} (seed {worst_seed})"))?;
    Ok(format!(
        "max relative error {worst:.2e} (seed {worst_seed}); {rejected} near-tie draws redrawn"
    ))
}

fn total_loss_weights() -> Outcome {
    let v = total_loss(1.0, 1.0, 1.0, 1.0, 1.0, &LossWeights::default())?;
    ensure(v == 1.131, || format!("total loss {v:?}"))?;
    Ok(format!("total loss {v}"))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn dataset_build() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let gt = tmp.path().join("gt");
    fs::create_dir(&gt).map_err(|e| e.to_string())?;
    for i in 0..20 {
        save_rgb(&night_scene(256, 192, 500 + i), &gt.join(format!("scene_{i:02}.png")))?;
    }
    let plan = DatasetPlan::all_categories();
    let seed = 2024;

    let serial = tmp.path().join("serial");
    let start = Instant::now();
    let manifest = build_dataset(&gt, &plan, &serial, seed, BuildOptions { workers: 1 })?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(manifest.samples.len() == 140, || format!("{} samples", manifest.samples.len()))?;
    ensure(serial.join("manifest.json").is_file(), || "manifest.json missing".into())?;
    ensure(elapsed < 60.0, || format!("serial build took {elapsed:.1} s"))?;

    let rerun = tmp.path().join("rerun");
    build_dataset(&gt, &plan, &rerun, seed, BuildOptions { workers: 1 })?;
    let parallel = tmp.path().join("parallel");
    build_dataset(&gt, &plan, &parallel, seed, BuildOptions { workers: 4 })?;
    let a = tree(&serial);
    ensure(a == tree(&rerun), || "rerun differs".into())?;
    ensure(a == tree(&parallel), || "parallel build differs from serial".into())?;
    Ok(format!("140 samples in {elapsed:.1} s serial; {} files byte-identical across reruns", a.len()))
}

fn curation_invariants() -> Outcome {
    for c in [0.0, 0.1, 0.37, 1.0] {
        let s = score_plane(&Plane::new(20, 15, c))?;
        ensure(
            (s.avg_brightness - c).abs() <= 1e-12 && s.avg_gradient == 0.0 && s.smd2 == 0.0,
            || format!("constant {c}: {s:?}"),
        )?;
        let s = score_image(&ImageRgb::new(20, 15, [c; 3]))?;
        ensure(
            (s.avg_brightness - c).abs() <= 1e-12 && s.avg_gradient == 0.0 && s.smd2 == 0.0,
            || format!("constant gray {c}: {s:?}"),
        )?;
    }
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let img = random_image(300 + seed, 23 + seed as usize % 5, 17 + seed as usize % 3);
        let s = score_image(&img)?;
        for f in [img.flip_horizontal(), img.flip_vertical()] {
            let t = score_image(&f)?;
            worst = worst
                .max((s.avg_brightness - t.avg_brightness).abs())
                .max((s.avg_gradient - t.avg_gradient).abs())
                .max((s.smd2 - t.smd2).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("flip gap {worst:e}"))?;
    Ok(format!("constant images score (c, 0, 0); flip gap {worst:.2e}"))
}

fn main() {
    let checks: [Check; 11] = [
        ("retinex reconstruction", retinex_reconstruction),
        ("degenerate composition", degenerate_composition),
        ("illumination linearity", illumination_linearity),
        ("flare identity and apsf", flare_identity),
        ("metric closed forms", metric_closed_forms),
        ("niqe ordering", niqe_ordering),
        ("routing dense equivalence", routing_dense_equivalence),
        ("gradient checks", gradient_checks),
        ("total loss", total_loss_weights),
        ("dataset build", dataset_build),
        ("curation invariants", curation_invariants),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(Fail(format!("panicked: {msg}")))
            });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2}s]", n + 1),
            Err(Fail(detail)) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2}s]", n + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
