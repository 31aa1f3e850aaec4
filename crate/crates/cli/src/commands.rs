use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use nightsynth_core::compose::{build_dataset, compose_scene, BuildOptions, DatasetPlan, SceneRecipe};
use nightsynth_core::curation::{score_image, CurationThresholds};
use nightsynth_core::flare::{synthesize_flare, FlareParams};
use nightsynth_core::imaging::io::{load_rgb, save_plane, save_rgb, write_atomic};
use nightsynth_core::imaging::ImageRgb;
use nightsynth_core::quality::{l1_loss, niqe_fit, niqe_score, psnr, ssim, NiqeModel, SsimParams};
use nightsynth_core::retinex::{decompose_with, RetinexParams};
use nightsynth_core::routing::{self, GateMode, RoutingConfig};
use nightsynth_core::{Error, Result};

use crate::cli::*;

pub struct Ctx {
    pub verbose: u8,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("nightsynth: {}", msg.as_ref());
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Config echo for commands whose output is a single file: `<stem>.config.json`
/// next to it.
fn sibling_config(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.config.json"))
}

fn parent_dir(out: &Path) -> Result<()> {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let is_png = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("png"))
            .unwrap_or(false);
        if is_png && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("no PNG files in {}", dir.display())));
    }
    Ok(out)
}

pub fn decompose(ctx: &Ctx, a: &DecomposeArgs) -> Result<()> {
    let params = RetinexParams {
        blur_sigma: a.sigma,
        eps: a.eps,
    };
    let img = load_rgb(&a.input)?;
    let pair = decompose_with(&img, &params)?;
    ensure_dir(&a.out_dir)?;
    save_plane(&pair.illumination, &a.out_dir.join("illumination.png"))?;
    save_rgb(&pair.reflectance, &a.out_dir.join("reflectance.png"))?;
    let (imin, imax) = pair.illumination.min_max();
    let rmax = pair.reflectance.data().iter().copied().fold(0.0, f64::max);
    let clipped = pair.reflectance.data().iter().filter(|v| **v > 1.0).count();
    write_json(
        &a.out_dir.join("meta.json"),
        &json!({
            "width": img.width(),
            "height": img.height(),
            "illumination": {"min": imin, "mean": pair.illumination.mean(), "max": imax},
            "reflectance_max": rmax,
            "reflectance_clipped_fraction": clipped as f64 / pair.reflectance.data().len() as f64,
        }),
    )?;
    write_json(
        &a.out_dir.join("config.json"),
        &json!({"command": "decompose", "input": a.input, "retinex": params}),
    )?;
    ctx.log(format!("wrote decomposition to {}", a.out_dir.display()));
    Ok(())
}

pub fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let mut recipe: SceneRecipe = read_json(&a.recipe)?;
    if let Some(seed) = a.seed {
        recipe.seed = seed;
    }
    let img = load_rgb(&a.input)?;
    let sample = compose_scene(&img, &recipe)?;
    ensure_dir(&a.out_dir)?;
    save_rgb(&sample.flared, &a.out_dir.join("flare.png"))?;
    save_rgb(&sample.degraded, &a.out_dir.join("degraded.png"))?;
    write_json(
        &a.out_dir.join("sample.json"),
        &json!({
            "labels": sample.labels,
            "beta": sample.beta,
            "rho": sample.rho,
            "seed": sample.seed,
            "omega": sample.omega,
        }),
    )?;
    write_json(
        &a.out_dir.join("config.json"),
        &json!({"command": "synth", "input": a.input, "recipe": recipe}),
    )?;
    ctx.log(format!("labels {:?}", sample.labels));
    Ok(())
}

pub fn flare(ctx: &Ctx, a: &FlareArgs) -> Result<()> {
    let params: FlareParams = match &a.params {
        Some(p) => read_json(p)?,
        None => FlareParams::default(),
    };
    let img = load_rgb(&a.input)?;
    let out = synthesize_flare(&img, &params)?;
    ensure_dir(&a.out_dir)?;
    save_rgb(&out.image, &a.out_dir.join("flare.png"))?;
    save_plane(&out.light, &a.out_dir.join("light.png"))?;
    write_json(&a.out_dir.join("flare.json"), &json!({"beta": out.beta, "rho": out.rho}))?;
    write_json(
        &a.out_dir.join("config.json"),
        &json!({"command": "flare", "input": a.input, "flare": params}),
    )?;
    ctx.log(format!("beta {} rho {}", out.beta, out.rho));
    Ok(())
}

pub fn curate(ctx: &Ctx, a: &CurateArgs) -> Result<()> {
    let thresholds: CurationThresholds = match &a.thresholds {
        Some(p) => read_json(p)?,
        None => CurationThresholds::default(),
    };
    let mut rows = Vec::new();
    for path in list_pngs(&a.input)? {
        let s = score_image(&load_rgb(&path)?)?;
        rows.push((path, s, thresholds.keeps(&s)));
    }
    // kept first, then sharpest first
    rows.sort_by(|x, y| {
        y.2.cmp(&x.2)
            .then(y.1.smd2.total_cmp(&x.1.smd2))
            .then(x.0.cmp(&y.0))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(["path", "brightness", "gradient", "smd2", "keep"])
        .map_err(csv_err)?;
    for (path, s, keep) in &rows {
        w.write_record([
            path.display().to_string(),
            s.avg_brightness.to_string(),
            s.avg_gradient.to_string(),
            s.smd2.to_string(),
            keep.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    parent_dir(&a.out)?;
    write_atomic(&a.out, &bytes)?;
    write_json(
        &sibling_config(&a.out),
        &json!({"command": "curate", "input": a.input, "thresholds": thresholds}),
    )?;
    ctx.log(format!(
        "kept {} of {} candidates",
        rows.iter().filter(|r| r.2).count(),
        rows.len()
    ));
    Ok(())
}

pub fn dataset_build(ctx: &Ctx, a: &DatasetBuildArgs) -> Result<()> {
    let plan: DatasetPlan = read_json(&a.plan)?;
    if a.workers == 0 {
        return Err(Error::InvalidInput("--workers must be at least 1".into()));
    }
    ensure_dir(&a.out)?;
    let manifest = build_dataset(
        &a.gt,
        &plan,
        &a.out,
        a.seed,
        BuildOptions { workers: a.workers },
    )?;
    // worker count and output location do not affect the tree, so they
    // are left out to keep reruns byte-identical
    write_json(
        &a.out.join("config.json"),
        &json!({"command": "dataset build", "gt": a.gt, "plan": plan, "seed": a.seed}),
    )?;
    ctx.log(format!("{} samples, {} workers", manifest.samples.len(), a.workers));
    Ok(())
}

fn load_pair(p: &PairArgs) -> Result<(ImageRgb, ImageRgb)> {
    Ok((load_rgb(&p.reference)?, load_rgb(&p.test)?))
}

pub fn eval(cmd: &EvalCommand) -> Result<()> {
    let value = match cmd {
        EvalCommand::Psnr(a) => {
            let (r, t) = load_pair(&a.pair)?;
            psnr(&r.map(|v| v * a.peak), &t.map(|v| v * a.peak), a.peak)?
        }
        EvalCommand::Ssim(a) => {
            let (r, t) = load_pair(a)?;
            ssim(&r, &t, &SsimParams::default())?
        }
        EvalCommand::L1(a) => {
            let (r, t) = load_pair(a)?;
            l1_loss(&r, &t)?
        }
        EvalCommand::Niqe(a) => {
            let model: NiqeModel = read_json(&a.model)?;
            niqe_score(&load_rgb(&a.test)?, &model)?
        }
    };
    println!("{value}");
    Ok(())
}

pub fn niqe_fit_cmd(ctx: &Ctx, a: &NiqeFitArgs) -> Result<()> {
    let paths = list_pngs(&a.corpus)?;
    let corpus = paths.iter().map(|p| load_rgb(p)).collect::<Result<Vec<_>>>()?;
    let model = niqe_fit(&corpus, a.patch_size, a.sharpness_fraction)?;
    parent_dir(&a.out)?;
    write_json(&a.out, &model)?;
    write_json(
        &sibling_config(&a.out),
        &json!({
            "command": "niqe fit",
            "corpus": a.corpus,
            "images": paths.len(),
            "patch_size": a.patch_size,
            "sharpness_fraction": a.sharpness_fraction,
        }),
    )?;
    ctx.log(format!("fitted on {} images", paths.len()));
    Ok(())
}

fn routing_config(s: &RoutingShape) -> RoutingConfig {
    RoutingConfig {
        units: s.units,
        top_k: s.top_k,
        dim: s.dim,
        gate_mode: match s.gate_mode {
            GateModeArg::Literal => GateMode::Literal,
            GateModeArg::Renormalized => GateMode::Renormalized,
        },
    }
}

pub fn routing_cmd(cmd: &RoutingCommand) -> Result<()> {
    let text = match cmd {
        RoutingCommand::Gradcheck(a) => {
            let report = routing::grad_check(&routing_config(&a.shape), a.seed, a.h)?;
            serde_json::to_string_pretty(&report)?
        }
        RoutingCommand::Demo(a) => {
            let report = routing::demo(&routing_config(&a.shape), a.seed, a.steps)?;
            serde_json::to_string_pretty(&report)?
        }
    };
    println!("{text}");
    Ok(())
}
